import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bpim2col.geometry import derive

settings.register_profile(
    "suite", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@st.composite
def geometries(draw, max_hw=20, max_b=3, max_ch=6, max_k=7, max_s=4):
    """Valid layer geometries across the ranges the mapping must cover."""
    k_h = draw(st.integers(1, max_k))
    k_w = draw(st.integers(1, max_k))
    pad_h = draw(st.integers(0, k_h - 1))
    pad_w = draw(st.integers(0, k_w - 1))
    in_h = draw(st.integers(max(1, k_h - 2 * pad_h), max_hw))
    in_w = draw(st.integers(max(1, k_w - 2 * pad_w), max_hw))
    return derive(
        batch=draw(st.integers(1, max_b)),
        in_ch=draw(st.integers(1, max_ch)),
        in_h=in_h, in_w=in_w,
        out_ch=draw(st.integers(1, max_ch)),
        k_h=k_h, k_w=k_w,
        stride=draw(st.integers(1, max_s)),
        pad_h=pad_h, pad_w=pad_w,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
