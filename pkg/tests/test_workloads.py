import numpy as np
import pytest

from bpim2col.geometry import derive
from bpim2col.simulator import account
from bpim2col.workloads import (
    MissingCounterpart,
    aggregate,
    builtin_catalog,
    compare,
    sparsity_report,
    stride2_catalog,
    synth_operands,
)


def test_catalog_contains_core_rows():
    names = {s.name for s in builtin_catalog()}
    for want in ("224/3/64/3/2/0", "112/64/64/3/2/1", "56/256/512/1/2/0",
                 "28/244/244/3/2/1", "14/1024/2048/1/2/0"):
        assert want in names
    by_name = {s.name: s for s in builtin_catalog()}
    row3 = by_name["56/256/512/1/2/0"]
    assert (row3.k_h, row3.pad_h, row3.in_ch, row3.out_ch) == (1, 0, 256, 512)


def test_catalog_includes_alexnet_conv1():
    by_name = {s.name: s for s in builtin_catalog()}
    conv1 = by_name["alexnet-conv1"]
    assert (conv1.k_h, conv1.stride, conv1.pad_h) == (11, 4, 2)
    assert conv1.network == "alexnet"


def test_every_catalog_entry_derives():
    for spec in builtin_catalog():
        g = spec.geometry()
        assert g.batch == 2
        assert g.out_h >= 1


def test_stride2_catalog_excludes_stride1_networks():
    nets = {s.network for s in stride2_catalog()}
    assert "vgg16" not in nets
    assert {"core", "alexnet", "resnet50", "squeezenet", "googlenet",
            "mobilenetv1"} <= nets
    assert all(s.stride >= 2 for s in stride2_catalog())


def test_sparsity_anchors():
    by_name = {s.name: s for s in builtin_catalog()}
    rep = sparsity_report(by_name["112/64/64/3/2/1"].geometry())
    assert rep["loss_operand_sparsity"] == pytest.approx(0.7587, abs=5e-4)

    alex = sparsity_report(by_name["alexnet-conv1"].geometry())
    assert alex["loss_operand_sparsity"] == pytest.approx(0.944, abs=2e-3)
    assert abs(alex["lowered_matrix_sparsity"]["loss"] - 0.9391) <= 0.015


def test_stride1_layer_has_no_insertion_sparsity():
    g = derive(batch=2, in_ch=3, in_h=24, in_w=24, out_ch=4,
               k_h=3, k_w=3, stride=1, pad_h=1, pad_w=1)
    rep = sparsity_report(g)
    assert rep["grad_operand_sparsity"] == 0.0
    assert rep["lowered_matrix_sparsity"]["gradient"] == 0.0


def test_synth_operands_deterministic_small_integers():
    g = derive(batch=2, in_ch=2, in_h=6, in_w=6, out_ch=2, k_h=3, k_w=3, stride=2)
    a = synth_operands(g, 42)
    b = synth_operands(g, 42)
    for key in a:
        assert np.array_equal(a[key].data, b[key].data)
        assert np.all(a[key].data == np.round(a[key].data))
        assert np.abs(a[key].data).max() <= 3
    c = synth_operands(g, 43)
    assert not np.array_equal(a["input"].data, c["input"].data)


def _reports_for(g, name, network, phases=("loss", "gradient")):
    out = []
    for phase in phases:
        for algo in ("traditional", "bp"):
            out.append(account(phase, algo, g, layer=name, network=network))
    return out


def test_identical_totals_mean_speedup_one():
    g = derive(batch=1, in_ch=2, in_h=8, in_w=8, out_ch=2,
               k_h=3, k_w=3, stride=1, pad_h=2, pad_w=2)
    # stride 1 with full padding: no reorg, but prologues still differ
    trad = account("loss", "traditional", g)
    bp = account("loss", "bp", g)
    bp.prologue_cycles = trad.prologue_cycles
    row = compare(trad, bp)
    assert row.speedup == pytest.approx(1.0)


def test_aggregate_core_set_all_speedups_above_one():
    reports = []
    for spec in builtin_catalog():
        if spec.network != "core":
            continue
        reports += _reports_for(spec.geometry(), spec.name, spec.network)
    rows, summary = aggregate(reports)
    assert len(rows) == 10
    assert all(r.speedup > 1.0 for r in rows)
    assert summary["networks"]["core"]["speedup_gmean"] > 1.0


def test_aggregate_permutation_invariant():
    spec = builtin_catalog()[1]
    reports = _reports_for(spec.geometry(), spec.name, spec.network)
    rows_a, summary_a = aggregate(reports)
    rows_b, summary_b = aggregate(list(reversed(reports)))
    assert rows_a == rows_b
    assert summary_a == summary_b


def test_aggregate_missing_counterpart():
    spec = builtin_catalog()[0]
    g = spec.geometry()
    with pytest.raises(MissingCounterpart):
        aggregate([account("loss", "bp", g, layer=spec.name)])


def test_mean_onchip_reduction_over_catalog():
    reports = []
    for spec in stride2_catalog():
        reports += _reports_for(spec.geometry(), spec.name, spec.network)
    rows, summary = aggregate(reports)
    reductions = [r.onchip_reduction for r in rows]
    assert sum(reductions) / len(reductions) >= 0.70
    for net, stats in summary["networks"].items():
        assert stats["onchip_reduction_gmean"] >= 0.70, net
