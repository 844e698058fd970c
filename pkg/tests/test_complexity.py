import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hdvqcnn.complexity import (
    ComplexityConfig,
    assess,
    calibrate,
    data_complexity,
    estimate_gates,
    label_sparsity,
)

from oracles import pair_count_sparsity

THIRDS = dict(alpha1=1 / 3, alpha2=1 / 3, alpha3=1 / 3)


def test_sparsity_single_class():
    assert label_sparsity([7] * 40) == 1.0


def test_sparsity_balanced_pair():
    labels = [0] * 500 + [1] * 500
    assert label_sparsity(labels) == 0.5
    assert pair_count_sparsity(labels[::10]) == 0.5


def test_sparsity_800_200():
    labels = [0] * 800 + [1] * 200
    assert label_sparsity(labels) == pytest.approx(0.68, abs=1e-15)
    assert pair_count_sparsity([0] * 80 + [1] * 20) == pytest.approx(0.68, abs=1e-15)


def test_sparsity_empty():
    with pytest.raises(ValueError):
        label_sparsity([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=200))
def test_sparsity_matches_pair_count(labels):
    assert label_sparsity(labels) == pair_count_sparsity(labels)


def test_complexity_examples():
    cfg = ComplexityConfig(**THIRDS)
    assert data_complexity(cfg.m_ref, cfg.d_ref, 0.0, cfg) == pytest.approx(2 / 3, abs=1e-12)
    only_disp = ComplexityConfig(alpha1=0, alpha2=0, alpha3=1)
    assert data_complexity(1000, 256, 0.0, only_disp) == 0.0
    near = data_complexity(cfg.m_ref, cfg.d_ref, 1 - 1e-12, ComplexityConfig())
    assert 0.999 < near < 1.0


@pytest.mark.parametrize("m,d", [(1, 256), (1000, 1)])
def test_complexity_rejects_tiny_inputs(m, d):
    with pytest.raises(ValueError):
        data_complexity(m, d, 0.5, ComplexityConfig())


def test_estimate_gates_examples():
    cfg = ComplexityConfig()
    assert estimate_gates(0.0, cfg) == 3
    assert estimate_gates(1.0, cfg) == 15
    assert estimate_gates(0.5, cfg) == 9
    assert estimate_gates(7.0, cfg) == 15


def test_config_validation():
    with pytest.raises(ValueError):
        ComplexityConfig(alpha1=0.5, alpha2=0.5, alpha3=0.5)
    with pytest.raises(ValueError):
        ComplexityConfig(t1=1.0)
    with pytest.raises(ValueError):
        ComplexityConfig(gate_min=5, gate_max=4)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 2), st.floats(0, 2))
def test_estimate_monotone(a, b):
    cfg = ComplexityConfig()
    lo, hi = sorted((a, b))
    assert estimate_gates(lo, cfg) <= estimate_gates(hi, cfg)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(2, 5000), st.integers(2, 5000),
    st.integers(2, 256), st.integers(2, 256),
    st.floats(0, 0.999), st.floats(0, 0.999),
)
def test_complexity_monotone(m1, m2, d1, d2, s1, s2):
    cfg = ComplexityConfig()
    m1, m2 = sorted((m1, m2))
    d1, d2 = sorted((d1, d2))
    s1, s2 = sorted((s1, s2))
    base = data_complexity(m1, d1, s1, cfg)
    assert base <= data_complexity(m2, d1, s1, cfg) + 1e-15
    assert base <= data_complexity(m1, d2, s1, cfg) + 1e-15
    assert base <= data_complexity(m1, d1, s2, cfg) + 1e-15


def test_assess_report_fields():
    rep = assess([0] * 800 + [1] * 200, 256, ComplexityConfig())
    assert rep.dispersion == 1 - rep.sparsity
    assert rep.gate_count == 5
    assert (rep.num_samples, rep.dimension) == (1000, 256)


def test_single_class_has_zero_dispersion():
    rep = assess([3] * 50, 16, ComplexityConfig())
    assert rep.dispersion == 0.0
    assert rep.gate_count >= 3


def test_default_is_widest_margin_calibration():
    targets = [(1000, 0.5, 6), (1000, 0.32, 5), (990, 2 / 3, 7), (5000, 0.5, 7)]
    found = calibrate(targets)
    assert found
    best_margin = found[0][0]
    default = ComplexityConfig()
    margins = [m for m, cfg in found if cfg == default]
    assert margins and math.isclose(margins[0], best_margin)
