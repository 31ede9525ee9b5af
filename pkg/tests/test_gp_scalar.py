import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from fpemu import gp_scalar as gs
from fpemu import synth
from fpemu.errors import DimensionMismatch, SchemaError, VersionMismatch
from fpemu.kernels import KernelSpec

CONST = gs.MeanBasis.constant()
ZERO = gs.MeanBasis.zero()
MATERN = KernelSpec("matern_5_2")


def noisy_data(n=15, seed=0, noise=0.05):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(0, 1, n))[:, None]
    return gs.TrainingSet(X, np.sin(6 * X[:, 0]) + noise * rng.standard_normal(n))


def test_mean_basis():
    X = np.zeros((3, 2))
    assert CONST.matrix(X).shape == (3, 1) and ZERO.matrix(X).shape == (3, 0)
    lin = gs.MeanBasis.from_functions([lambda x: 1.0, lambda x: x[0]])
    np.testing.assert_array_equal(lin.matrix([[2.0, 0.0], [3.0, 1.0]]), [[1, 2], [1, 3]])
    with pytest.raises(SchemaError):
        gs.MeanBasis.from_name("quadratic")


def test_training_set_validation():
    with pytest.raises(DimensionMismatch):
        gs.TrainingSet(np.zeros((3, 1)), np.zeros(2))
    with pytest.raises(SchemaError):
        gs.TrainingSet(np.zeros((2, 1)), [0.0, np.nan])


def test_profile_likelihood_identity_correlation():
    # points 1e6 apart: the correlation matrix is the identity to machine precision
    data = gs.TrainingSet([[0.0], [1e6]], [1.0, 4.0])
    ss = (1.0 - 2.5) ** 2 + (4.0 - 2.5) ** 2
    assert gs.log_profile_likelihood(CONST, data, MATERN) == pytest.approx(-np.log(ss), rel=1e-14)
    same = gs.TrainingSet([[0.0], [1e6]], [2.0, 2.0])
    assert gs.log_profile_likelihood(CONST, same, MATERN) == -np.inf


def test_profile_likelihood_shift_invariant():
    data = noisy_data()
    shifted = gs.TrainingSet(data.X, data.y + 17.0)
    k = MATERN.with_params(gamma=0.3, eta=0.01)
    assert gs.log_profile_likelihood(CONST, shifted, k) == pytest.approx(gs.log_profile_likelihood(CONST, data, k),
                                                                         rel=1e-10)


def test_fit_far_points_closed_forms():
    data = gs.TrainingSet([[0.0], [1e6]], [1.0, 4.0])
    m = gs.condition(CONST, data, MATERN)
    assert m.theta[0] == pytest.approx(2.5, rel=1e-14)
    assert m.sigma2 == pytest.approx(((1 - 2.5) ** 2 + (4 - 2.5) ** 2) / 2, rel=1e-14)


def test_fit_constant_outputs():
    data = gs.TrainingSet(np.linspace(0, 1, 5)[:, None], np.full(5, 3.25))
    m = gs.fit(CONST, data, MATERN)
    assert m.theta[0] == pytest.approx(3.25, abs=1e-12) and m.sigma2 == 0.0
    mean, var = gs.predict(m, [0.37])
    assert mean == pytest.approx(3.25, abs=1e-12) and var == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_closed_form_mle_vs_numeric(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 11))
    data = gs.TrainingSet(rng.uniform(0, 3, (n, 2)), rng.standard_normal(n) + 2.0)
    k = MATERN.with_params(gamma=float(rng.uniform(0.3, 2.0)), eta=float(rng.uniform(0, 0.2)))
    m = gs.condition(CONST, data, k)
    neg = lambda t: -gs.full_log_likelihood(CONST, data, k, [t[0]], np.exp(t[1]))
    res = minimize(neg, [0.0, 0.0], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000, "maxfev": 40000})
    assert res.x[0] == pytest.approx(m.theta[0], rel=1e-4, abs=1e-6)
    assert np.exp(res.x[1]) == pytest.approx(m.sigma2, rel=1e-4)


def test_fit_matches_grid_search():
    data = noisy_data(n=20, seed=3, noise=0.1)
    m = gs.fit(CONST, data, MATERN, "noisy")
    (g_lo, g_hi), (e_lo, e_hi) = gs.parameter_bounds(MATERN, data.X, "noisy")
    lg = np.linspace(g_lo, g_hi, 50)
    le = np.linspace(e_lo, e_hi, 50)
    vals = np.array([[gs.log_profile_likelihood(CONST, data, MATERN.with_params(gamma=np.exp(a), eta=np.exp(b)))
                      for b in le] for a in lg])
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    assert m.log_likelihood >= vals[i, j] - 1e-9
    assert abs(np.log(m.kernel.gamma) - lg[i]) <= lg[1] - lg[0]
    assert abs(np.log(m.kernel.eta) - le[j]) <= le[1] - le[0]


def test_interpolating_fit_interpolates():
    X, y = synth.two_sine_dataset(10)
    m = gs.fit(CONST, gs.TrainingSet(X, y), MATERN)
    assert m.eta == 0.0
    mean, var = gs.predict(m, X)
    assert np.max(np.abs(mean - y)) <= 1e-8
    assert np.max(var) <= 1e-8 * m.sigma2


def test_far_field_limit():
    data = noisy_data()
    m = gs.fit(CONST, data, MATERN, "noisy")
    mean, var = gs.predict(m, [1e6])
    assert mean == pytest.approx(m.theta[0], rel=1e-12)
    assert var == pytest.approx(m.sigma2 * (1 + m.eta), rel=1e-12)
    _, latent = gs.predict(m, [1e6], include_nugget=False)
    assert latent == pytest.approx(m.sigma2, rel=1e-12)


def test_variance_bounds_and_dimension_check():
    data = noisy_data()
    m = gs.fit(CONST, data, MATERN, "noisy")
    _, var = gs.predict(m, np.linspace(-1, 2, 300)[:, None])
    assert np.all(var >= 0) and np.all(var <= m.sigma2 * (1 + m.eta) * (1 + 1e-12))
    with pytest.raises(DimensionMismatch):
        gs.predict(m, [[0.1, 0.2]])


def test_predictive_interval():
    model = gs.TrainedGP(MATERN, ZERO, np.zeros(0), 1.0, np.array([[1e9]]), np.array([0.0]),
                         gs._factor(MATERN, [[1e9]]), np.zeros(1))
    lo, hi = gs.predictive_interval(model, [0.0], 0.95)
    assert lo == pytest.approx(-1.959963984540054, rel=1e-12) and hi == pytest.approx(1.959963984540054, rel=1e-12)
    X, y = synth.two_sine_dataset(10)
    m = gs.fit(CONST, gs.TrainingSet(X, y), MATERN)
    lo, hi = gs.predictive_interval(m, X[3], 0.95)
    assert hi - lo <= 1e-3
    grid = np.linspace(0, 10, 50)[:, None]
    lo50, hi50 = gs.predictive_interval(m, grid, 0.5)
    lo95, hi95 = gs.predictive_interval(m, grid, 0.95)
    assert np.all(lo95 <= lo50) and np.all(hi50 <= hi95)
    with pytest.raises(SchemaError):
        gs.predictive_interval(m, grid, 1.0)


def test_permutation_and_shift_invariance():
    data = noisy_data(seed=4)
    k = MATERN.with_params(gamma=0.4, eta=0.05)
    m = gs.condition(CONST, data, k)
    perm = np.random.default_rng(0).permutation(data.n)
    mp = gs.condition(CONST, gs.TrainingSet(data.X[perm], data.y[perm]), k)
    ms = gs.condition(CONST, gs.TrainingSet(data.X, data.y + 5.0), k)
    grid = np.linspace(-0.2, 1.2, 40)[:, None]
    a, va = gs.predict(m, grid)
    b, vb = gs.predict(mp, grid)
    c, vc = gs.predict(ms, grid)
    assert np.max(np.abs(a - b)) <= 1e-10 and np.max(np.abs(va - vb)) <= 1e-10
    assert np.max(np.abs(c - a - 5.0)) <= 1e-10 and np.max(np.abs(vc - va)) <= 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(3, 12), st.integers(1, 3), st.integers(0, 2**32 - 1))
def test_interpolation_property(n, p, seed):
    rng = np.random.default_rng(seed)
    data = gs.TrainingSet(rng.uniform(0, 1, (n, p)), rng.standard_normal(n))
    m = gs.fit(CONST, data, MATERN, seed=seed % 100)
    mean, var = gs.predict(m, data.X)
    assert np.max(np.abs(mean - data.y)) <= 1e-8
    assert np.max(var) <= 1e-8 * max(m.sigma2, 1e-300)


def test_fit_is_deterministic_and_product_kernel_fits():
    data = gs.TrainingSet(np.random.default_rng(2).uniform(0, 1, (12, 2)),
                          np.random.default_rng(3).standard_normal(12))
    a = gs.fit(CONST, data, MATERN, seed=5)
    b = gs.fit(CONST, data, MATERN, seed=5)
    assert a.kernel == b.kernel
    p = gs.fit(CONST, data, KernelSpec("product", gamma=(1.0,), base="matern_5_2"))
    assert len(p.kernel.gamma) == 2


def test_serialization_round_trip():
    data = noisy_data()
    m = gs.fit(CONST, data, MATERN, "noisy")
    d = m.to_dict()
    text = json.dumps(d, sort_keys=True)
    m2 = gs.TrainedGP.from_dict(json.loads(text))
    assert json.dumps(m2.to_dict(), sort_keys=True) == text
    grid = np.linspace(0, 1, 7)[:, None]
    np.testing.assert_allclose(gs.predict(m2, grid)[0], gs.predict(m, grid)[0], rtol=1e-12, atol=1e-12)
    m3 = gs.TrainedGP.from_dict(json.loads(json.dumps(m2.to_dict())))
    np.testing.assert_array_equal(gs.predict(m3, grid)[0], gs.predict(m2, grid)[0])
    with pytest.raises(VersionMismatch):
        gs.TrainedGP.from_dict({**d, "version": "2"})
    with pytest.raises(SchemaError):
        gs.TrainedGP.from_dict({k: v for k, v in d.items() if k != "theta"})


def test_fit_requires_two_points():
    with pytest.raises(SchemaError):
        gs.fit(CONST, gs.TrainingSet([[0.0]], [1.0]), MATERN)
    with pytest.raises(SchemaError):
        gs.fit(CONST, noisy_data(), MATERN, "robust")
