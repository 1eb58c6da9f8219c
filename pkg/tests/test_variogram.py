import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimexp.geo import pairwise_distances
from dimexp.simulate import simulate_gp
from dimexp.variogram import (
    DispersionMatrix,
    VariogramParams,
    bin_dispersions,
    empirical_dispersion,
    evaluate_variogram,
    fit_variogram,
    pair_sse,
    variogram_d_dh,
)

params = st.builds(VariogramParams, st.floats(0.01, 10), st.floats(0.05, 10), st.floats(0, 2))


def test_evaluate_closed_forms():
    p = VariogramParams(1, 1, 0)
    assert evaluate_variogram(p, 0.0) == 0.0
    assert evaluate_variogram(p, 1.0) == pytest.approx(1 - np.exp(-1), abs=1e-12)
    assert evaluate_variogram(VariogramParams(2, 3, 0.5), 1e6) == pytest.approx(2.5)
    assert evaluate_variogram(VariogramParams(2, 3, 0.5), 0.0) == 0.5
    assert variogram_d_dh(p, 0.0) == 1.0
    assert variogram_d_dh(p, 1.0) == pytest.approx(np.exp(-1), rel=1e-14)


def test_negative_lag_rejected():
    with pytest.raises(ValueError):
        evaluate_variogram(VariogramParams(1, 1, 0), -1.0)
    with pytest.raises(ValueError):
        variogram_d_dh(VariogramParams(1, 1, 0), [-0.1])


def test_param_bounds():
    for bad in [(-1, 1, 0), (1, 0, 0), (1, 1, -0.1), (np.nan, 1, 0)]:
        with pytest.raises(ValueError):
            VariogramParams(*bad)


def _mp_variogram(p, h):
    return mpmath.mpf(p.phi1) * (1 - mpmath.exp(-mpmath.mpf(h) / p.phi2)) + p.phi3


@given(params, st.floats(0.01, 20))
@settings(max_examples=100, deadline=None)
def test_derivative_matches_central_difference(p, h):
    # high-precision central difference; digits grow with h / phi2 so flat tails stay resolved
    with mpmath.workdps(40 + int(h / p.phi2 / 2.3)):
        eps = mpmath.mpf("1e-20")
        fd = (_mp_variogram(p, h + eps) - _mp_variogram(p, h - eps)) / (2 * eps)
        fd = float(fd)
    an = variogram_d_dh(p, h)
    assert abs(fd - an) <= 1e-6 * abs(fd)


@given(params)
@settings(max_examples=50, deadline=None)
def test_monotone_and_bounded(p):
    h = np.linspace(0, 50, 200)
    g = evaluate_variogram(p, h)
    assert np.all(np.diff(g) >= 0)
    assert np.all(g <= p.phi1 + p.phi3 + 1e-12)


def test_dispersion_small_examples():
    assert not empirical_dispersion(np.full((4, 3), 2.5)).v.any()
    d = empirical_dispersion([[0.0, 2.0], [1.0, 1.0]])
    assert d.v[0, 1] == 1.0 and d.v[1, 0] == 1.0 and d.n_replicates == 2


def test_dispersion_missing_cells():
    Y = np.array([[0.0, 2.0, np.nan], [1.0, np.nan, 5.0], [0.0, 0.0, 0.0]])
    d = empirical_dispersion(Y)
    assert d.v[0, 1] == 1.0  # only replicate 0 is complete
    assert d.pair_counts[0, 1] == 1
    assert d.v[1, 2] == pytest.approx((1 + 25) / 2)
    with pytest.raises(ValueError, match=r"\(0, 1\)"):
        empirical_dispersion([[0.0, np.nan], [np.nan, 1.0]])


def test_dispersion_matches_gp_covariance():
    # independent oracle: E|Y_i - Y_j|^2 = C_ii + C_jj - 2 C_ij
    rng = np.random.default_rng(3)
    A = rng.normal(size=(5, 5))
    C = A @ A.T + np.eye(5)
    n = 20000
    Y = simulate_gp(C, np.zeros((5, 1)), n, seed=11)
    v = empirical_dispersion(Y).v
    expect = np.diag(C)[:, None] + np.diag(C)[None, :] - 2 * C
    iu = np.triu_indices(5, 1)
    sd = np.sqrt(2.0 / n) * expect[iu]
    assert np.all(np.abs(v[iu] - expect[iu]) < 5 * sd)


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=20, deadline=None)
def test_dispersion_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(6, 4))
    shift = rng.normal(size=4) * 10
    np.testing.assert_allclose(empirical_dispersion(Y + shift).v, empirical_dispersion(Y).v,
                               rtol=1e-9, atol=1e-9)


def _random_geometry(rng, s=12):
    X = rng.uniform(0, 5, size=(s, 2))
    return pairwise_distances(X)


def test_binning(rng):
    D = _random_geometry(rng)
    v = rng.uniform(0, 2, size=D.shape)
    v = np.triu(v, 1) + np.triu(v, 1).T
    iu = np.triu_indices(D.shape[0], 1)
    one = bin_dispersions(v, D, 1)
    assert one.bin_means[0] == pytest.approx(v[iu].mean())
    b = bin_dispersions(v, D, 7)
    assert b.bin_counts.sum() == iu[0].size
    assert np.all(np.diff(b.bin_centers) > 0)
    assert np.average(b.bin_means, weights=b.bin_counts) == pytest.approx(v[iu].mean())


def test_binning_exact_edges():
    # three pairs at distances 1, 2, 3 -> three bins with edges (0,1], (1,2], (2,3]
    D = np.array([[0, 1, 3], [1, 0, 2], [3, 2, 0]], dtype=float)
    v = np.array([[0, 5, 7], [5, 0, 6], [7, 6, 0]], dtype=float)
    b = bin_dispersions(v, D, 3)
    np.testing.assert_array_equal(b.bin_means, [5, 6, 7])


def test_fit_recovers_noise_free_parameters(rng):
    truth = VariogramParams(1, 2, 0.1)
    D = _random_geometry(rng, 20)
    v = evaluate_variogram(truth, D)
    np.fill_diagonal(v, 0)
    fit = fit_variogram(v, D)
    np.testing.assert_allclose(fit.params.as_tuple(), truth.as_tuple(), rtol=1e-3)
    assert fit.sse < 1e-12


def test_fit_zero_field(rng):
    D = _random_geometry(rng)
    fit = fit_variogram(np.zeros_like(D), D)
    assert fit.params.phi1 == 0 and fit.params.phi3 == 0 and fit.sse == 0


def test_fit_degenerate_distances():
    D = np.ones((4, 4)) - np.eye(4)
    with pytest.raises(ValueError, match="distinct"):
        fit_variogram(np.ones((4, 4)), D)


def test_fit_is_local_optimum_and_beats_init(rng):
    D = _random_geometry(rng, 25)
    truth = VariogramParams(2, 1.5, 0.3)
    iu = np.triu_indices(25, 1)
    v = evaluate_variogram(truth, D) + rng.normal(scale=0.1, size=D.shape)
    v = np.triu(v, 1) + np.triu(v, 1).T
    init = VariogramParams(1, 1, 0.1)
    fit = fit_variogram(v, D, init)
    assert fit.sse <= pair_sse(init, D[iu], v[iu])
    base = np.array(fit.params.as_tuple())
    for k in range(3):
        for f in (0.99, 1.01):
            q = base.copy()
            q[k] *= f
            assert pair_sse(VariogramParams(*q), D[iu], v[iu]) >= fit.sse - 1e-12


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_fit_respects_bounds_exactly(seed):
    rng = np.random.default_rng(seed)
    D = _random_geometry(rng, 8)
    v = np.abs(rng.normal(size=D.shape)) * rng.uniform(0, 3)
    v = np.triu(v, 1) + np.triu(v, 1).T
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        p = fit_variogram(DispersionMatrix(v, 1), D).params
    assert p.phi1 >= 0 and p.phi2 > 0 and p.phi3 >= 0
