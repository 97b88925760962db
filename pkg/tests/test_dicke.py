import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinfeedback.dicke import (ConfigError, EnsembleModel, ManifoldSpec, ManifoldState,
                                degeneracy, log_degeneracy, sample_manifolds,
                                thermal_manifold, weight_approx, weight_exact)


def degeneracy_by_counting(I, N):
    """Multiplicity from I_z-level counting: #(M = I) - #(M = I + 1)."""
    h = N // 2
    upper = comb(N, h + I + 1) if I + 1 <= h else 0
    return comb(N, h + I) - upper


@pytest.mark.parametrize("N", range(0, 25, 2))
def test_degeneracy_matches_level_counting(N):
    for I in range(N // 2 + 1):
        assert degeneracy(I, N) == degeneracy_by_counting(I, N)


@pytest.mark.parametrize("N", [2, 4, 10, 24])
def test_hilbert_space_dimension(N):
    assert sum((2 * I + 1) * degeneracy(I, N) for I in range(N // 2 + 1)) == 2**N


def test_known_small_cases():
    assert [degeneracy(I, 2) for I in (0, 1)] == [1, 1]
    assert [degeneracy(I, 4) for I in (0, 1, 2)] == [2, 3, 1]


def test_exact_weights_sum_to_one():
    assert math.fsum(weight_exact(I, 20) for I in range(11)) == pytest.approx(1, abs=1e-15)
    assert math.fsum(weight_exact(I, 2000) for I in range(1001)) == pytest.approx(1, abs=1e-10)


def test_log_degeneracy_consistent_above_exact_range():
    assert math.exp(log_degeneracy(5, 40)) == pytest.approx(degeneracy_by_counting(5, 40), rel=1e-12)


def test_weight_approx_close_to_exact_in_bulk():
    N = 30_000
    s = math.sqrt(N / 2)
    I = np.arange(math.ceil(0.2 * s), math.floor(3 * s) + 1)
    exact = np.array([weight_exact(int(i), N) for i in I])
    assert np.max(np.abs(weight_approx(I, N) / exact - 1)) < 0.03


@pytest.mark.parametrize("I,N", [(-1, 10), (6, 10), (2, 7), (1.5, 10)])
def test_domain_errors(I, N):
    with pytest.raises(ValueError):
        degeneracy(I, N)


def test_nominal_sampling():
    ms = sample_manifolds(49_000, 46, 14, 1 / 14)
    assert [m.I for m in ms] == list(range(0, 631, 14))
    assert all(m.iz_hi == -m.iz_lo == m.I // 14 for m in ms)
    assert math.fsum(m.weight for m in ms) == pytest.approx(1, abs=1e-12)
    assert ms[0].weight == 0.0
    assert max(m.dim for m in ms) == 182
    raw = weight_approx(np.array([m.I for m in ms], float), 49_000)
    assert ms[10].weight / ms[20].weight == pytest.approx(raw[10] / raw[20], rel=1e-12)


def test_sampling_exact_below_threshold():
    ms = sample_manifolds(20, 11, 1, 1.0)
    assert [m.weight for m in ms] == pytest.approx([weight_exact(I, 20) for I in range(11)])


@pytest.mark.parametrize("kw", [dict(count=0), dict(spacing=0), dict(window_fraction=0),
                                dict(window_fraction=1.5), dict(N=21), dict(count=100)])
def test_sampling_errors(kw):
    args = dict(N=200, count=5, spacing=10, window_fraction=0.5)
    args.update(kw)
    with pytest.raises(ConfigError):
        sample_manifolds(**args)


def test_manifold_spec_validation():
    with pytest.raises(ConfigError):
        ManifoldSpec(3, -4, 3)
    with pytest.raises(ConfigError):
        ManifoldSpec(3, 2, 1)
    with pytest.raises(ConfigError):
        ManifoldSpec(3, 0, 1, weight=1.5)


def test_thermal_manifold():
    spec = ManifoldSpec(10, -3, 4)
    s = thermal_manifold(spec)
    assert s.trace == pytest.approx(1)
    np.testing.assert_allclose(s.populations(), np.full(8, 1 / 8))
    np.testing.assert_allclose(s.spin_expectation(), [0, 0, 0.5])
    assert s.min_eigenvalue() >= -1e-15


def test_state_shape_checked():
    with pytest.raises(ValueError):
        ManifoldState(ManifoldSpec(2, -1, 1), np.eye(4))


def test_model_validation():
    with pytest.raises(ConfigError):
        EnsembleModel(N=-2)
    with pytest.raises(ConfigError):
        EnsembleModel(xi=0)
    with pytest.raises(ConfigError):
        EnsembleModel(species=())


@given(st.integers(1, 12).map(lambda k: 2 * k), st.data())
def test_degeneracy_positive_and_exact(N, data):
    I = data.draw(st.integers(0, N // 2))
    d = degeneracy(I, N)
    assert isinstance(d, int) and d >= 1
    assert d == degeneracy_by_counting(I, N)


@given(st.integers(100, 40_000).map(lambda k: 2 * k))
def test_sampled_weights_normalized(N):
    ms = sample_manifolds(N, 5, 7, 0.5)
    assert math.fsum(m.weight for m in ms) == pytest.approx(1, abs=1e-12)
