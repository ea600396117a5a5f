import json

import pytest
from hypothesis import given

from bpim2col.geometry import (
    InvalidGeometry,
    derive,
    geometry_from_dict,
    load_layers,
    parse_layer_string,
)

from conftest import geometries


def sq(h, k, s, p, **kw):
    args = dict(batch=1, in_ch=1, in_h=h, in_w=h, out_ch=1,
                k_h=k, k_w=k, stride=s, pad_h=p, pad_w=p)
    args.update(kw)
    return derive(**args)


def test_stride2_no_pad_layer():
    g = sq(224, 3, 2, 0)
    assert (g.out_h, g.ins_h, g.full_h, g.rem_h) == (111, 221, 225, 1)
    assert g.map_h == 226


def test_stride2_padded_layer():
    g = sq(112, 3, 2, 1)
    assert (g.out_h, g.ins_h, g.full_h, g.rem_h) == (56, 111, 113, 1)
    assert g.map_h == 114


def test_identity_layer_has_no_zero_spaces():
    g = sq(17, 1, 1, 0)
    assert g.out_h == 17
    assert g.ins_h == g.out_h == g.full_h == g.map_h
    assert g.rem_h == 0


def test_rectangular_axes_independent():
    g = derive(batch=1, in_ch=1, in_h=10, in_w=7, out_ch=1,
               k_h=3, k_w=2, stride=2, pad_h=1, pad_w=0)
    assert (g.out_h, g.out_w) == (5, 3)
    assert (g.edge_h, g.edge_w) == (1, 1)
    assert g.map_h == 12 and g.map_w == 8


@pytest.mark.parametrize("kwargs,frag", [
    (dict(h=8, k=3, s=2, p=3), "pad_h"),
    (dict(h=2, k=5, s=1, p=1), "no valid window"),
    (dict(h=8, k=3, s=0, p=0), "stride"),
    (dict(h=0, k=1, s=1, p=0), "in_h"),
    (dict(h=8, k=3, s=1, p=-1), "pad_h"),
])
def test_invalid_geometries_name_the_constraint(kwargs, frag):
    with pytest.raises(InvalidGeometry, match=frag):
        sq(**kwargs)


@given(geometries())
def test_insertion_span_never_exceeds_full_span(g):
    assert g.ins_h <= g.full_h and g.ins_w <= g.full_w
    assert (g.ins_h == g.full_h) == (g.edge_h == 0)
    assert (g.ins_w == g.full_w) == (g.edge_w == 0)


@given(geometries())
def test_map_covers_every_window_position(g):
    # a stride-1 k-window sweep over the map must yield exactly in_h x in_w
    assert g.map_h == g.in_h + g.k_h - 1
    assert g.map_w == g.in_w + g.k_w - 1


@given(geometries())
def test_padding_bands_symmetric_before_remainder(g):
    span_h = g.stride * (g.out_h - 1) + 1  # first to last stored pixel
    assert g.full_h - g.edge_h - span_h == g.edge_h
    span_w = g.stride * (g.out_w - 1) + 1
    assert g.full_w - g.edge_w - span_w == g.edge_w


@given(geometries())
def test_derive_is_pure(g):
    again = derive(batch=g.batch, in_ch=g.in_ch, in_h=g.in_h, in_w=g.in_w,
                   out_ch=g.out_ch, k_h=g.k_h, k_w=g.k_w, stride=g.stride,
                   pad_h=g.pad_h, pad_w=g.pad_w)
    assert again == g


def test_json_object_full_keys():
    name, g = geometry_from_dict({
        "name": "x", "B": 2, "C": 3, "H_i": 8, "W_i": 9, "N": 4,
        "K_h": 3, "K_w": 2, "S": 2, "P_h": 1, "P_w": 0,
    })
    assert name == "x"
    assert (g.batch, g.in_ch, g.in_h, g.in_w) == (2, 3, 8, 9)
    assert (g.k_h, g.k_w, g.pad_h, g.pad_w) == (3, 2, 1, 0)


def test_json_square_shorthand_expands():
    name, g = geometry_from_dict({"B": 1, "C": 1, "H": 6, "N": 1, "K": 3, "S": 2, "P": 1})
    assert (g.in_h, g.in_w) == (6, 6)
    assert (g.k_h, g.k_w) == (3, 3)
    assert (g.pad_h, g.pad_w) == (1, 1)
    assert name == "6/1/1/3/2/1"


def test_json_default_batch_and_errors():
    _, g = geometry_from_dict({"C": 1, "H": 6, "N": 1, "K": 1, "S": 1, "P": 0},
                              default_batch=5)
    assert g.batch == 5
    with pytest.raises(InvalidGeometry, match="missing key"):
        geometry_from_dict({"B": 1, "C": 1, "N": 1, "K": 1, "S": 1})
    with pytest.raises(InvalidGeometry, match="unknown layer keys"):
        geometry_from_dict({"B": 1, "C": 1, "H": 6, "N": 1, "K": 1, "S": 1, "Q": 9})


def test_load_layers_accepts_object_or_list():
    single = json.dumps({"B": 1, "C": 1, "H": 6, "N": 1, "K": 1, "S": 1})
    assert len(load_layers(single)) == 1
    many = json.dumps([{"B": 1, "C": 1, "H": 6, "N": 1, "K": 1, "S": 1},
                       {"B": 1, "C": 2, "H": 8, "N": 2, "K": 3, "S": 2, "P": 1}])
    assert len(load_layers(many)) == 2


def test_parse_layer_string():
    g = parse_layer_string("112/64/64/3/2/1", batch=2)
    assert (g.batch, g.in_ch, g.out_ch) == (2, 64, 64)
    assert (g.in_h, g.k_h, g.stride, g.pad_h) == (112, 3, 2, 1)
    with pytest.raises(InvalidGeometry):
        parse_layer_string("112/64/64")
    with pytest.raises(InvalidGeometry):
        parse_layer_string("a/b/c/d/e/f")
