import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpemu import numerics
from fpemu.errors import AllStartsFailed, DimensionMismatch, NotPositiveDefinite


def cofactor_det(A):
    """Determinant by Laplace expansion along the first row."""
    n = A.shape[0]
    if n == 1:
        return A[0, 0]
    return sum((-1) ** j * A[0, j] * cofactor_det(np.delete(A[1:], j, axis=1)) for j in range(n))


def faddeev_leverrier(A):
    """Characteristic polynomial coefficients (highest degree first) without any eigensolver."""
    n = A.shape[0]
    coeffs = [1.0]
    M = np.zeros_like(A)
    c = 1.0
    for k in range(1, n + 1):
        M = A @ M + c * np.eye(n)
        c = -np.trace(A @ M) / k
        coeffs.append(c)
    return np.array(coeffs)


def random_spd(rng, n, extra=2):
    W = rng.standard_normal((n, n + extra))
    return W @ W.T + 1e-3 * np.eye(n)


# -- cholesky_decompose ---------------------------------------------------------


def test_identity_factor():
    F = numerics.cholesky_decompose(np.eye(3), [0.0])
    assert F.jitter == 0.0
    np.testing.assert_array_equal(F.L, np.eye(3))


def test_two_by_two_recomposes():
    A = np.array([[4.0, 2.0], [2.0, 3.0]])
    F = numerics.cholesky_decompose(A, [0.0])
    np.testing.assert_allclose(F.L @ F.L.T, A, rtol=0, atol=1e-15)
    assert np.allclose(F.L, np.tril(F.L))


def test_singular_needs_jitter():
    F = numerics.cholesky_decompose(np.ones((2, 2)), [0.0, 1e-8])
    assert F.jitter == 1e-8


def test_all_jitters_fail():
    with pytest.raises(NotPositiveDefinite):
        numerics.cholesky_decompose(-np.eye(2), [0.0, 1e-8])


def test_asymmetric_rejected():
    with pytest.raises(NotPositiveDefinite):
        numerics.cholesky_decompose(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_pivot_ratio_forces_jitter():
    A = np.diag([1.0, 1e-16])
    F = numerics.cholesky_decompose(A, [0.0, 1e-6], min_pivot_ratio=1e-14)
    assert F.jitter == 1e-6


def test_counter_counts_calls():
    with numerics.count_factorizations() as c:
        numerics.cholesky_decompose(np.eye(4))
        numerics.cholesky_decompose(np.eye(2))
    assert c.count == 2 and c.sizes == [4, 2]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 50), st.integers(0, 2**32 - 1))
def test_random_spd_recomposition_and_solve(n, seed):
    rng = np.random.default_rng(seed)
    A = random_spd(rng, n)
    F = numerics.cholesky_decompose(A)
    assert np.linalg.norm(F.L @ F.L.T - A - F.jitter * np.eye(n)) <= 1e-10 * np.linalg.norm(A)
    B = rng.standard_normal((n, 3))
    X = numerics.solve_with_factor(F, B)
    assert np.linalg.norm(A @ X - B) <= 1e-8 * np.linalg.norm(B)


# -- solves and determinants ----------------------------------------------------


def test_solve_identity_and_diagonal():
    B = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(numerics.solve_with_factor(numerics.cholesky_decompose(np.eye(3)), B), B)
    F = numerics.cholesky_decompose(np.diag([2.0, 4.0]))
    np.testing.assert_allclose(numerics.solve_with_factor(F, [[2.0], [4.0]]), [[1.0], [1.0]])


def test_solve_residual_5x5():
    rng = np.random.default_rng(1)
    A = random_spd(rng, 5)
    B = rng.standard_normal((5, 2))
    X = numerics.solve_with_factor(numerics.cholesky_decompose(A), B)
    assert np.linalg.norm(A @ X - B) <= 1e-8 * np.linalg.norm(B)


def test_solve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        numerics.solve_with_factor(numerics.cholesky_decompose(np.eye(3)), np.ones(2))


def test_log_det_simple():
    assert numerics.log_det_from_factor(numerics.cholesky_decompose(np.eye(4))) == 0.0
    F = numerics.cholesky_decompose(np.diag([2.0, 4.0]))
    assert numerics.log_det_from_factor(F) == pytest.approx(np.log(8.0), abs=1e-15)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_log_det_vs_cofactor(n):
    A = random_spd(np.random.default_rng(n), n)
    ref = cofactor_det(A)
    got = numerics.log_det_from_factor(numerics.cholesky_decompose(A))
    assert abs(np.exp(got) - ref) <= 1e-8 * abs(ref)


# -- eigenpairs -----------------------------------------------------------------


def test_top_eigenpairs_diagonal():
    w, V = numerics.top_eigenpairs(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(w, [3.0, 2.0])
    np.testing.assert_allclose(np.abs(V), np.eye(3)[:, :2], atol=1e-14)


def test_top_eigenpairs_rank_one():
    a = np.array([1.0, -2.0, 2.0])
    w, V = numerics.top_eigenpairs(np.outer(a, a), 1)
    assert w[0] == pytest.approx(9.0)
    assert min(np.linalg.norm(V[:, 0] - a / 3), np.linalg.norm(V[:, 0] + a / 3)) < 1e-12


def test_top_eigenpairs_vs_characteristic_polynomial():
    rng = np.random.default_rng(7)
    S = rng.standard_normal((6, 6))
    G = S + S.T
    roots = np.sort(np.roots(faddeev_leverrier(G)).real)[::-1]
    w, V = numerics.top_eigenpairs(G, 6)
    np.testing.assert_allclose(w, roots, rtol=1e-7, atol=1e-7)
    for lam, v in zip(roots, V.T):
        # oracle eigenvector: null vector of G - lam I from its SVD
        _, _, Vt = np.linalg.svd(G - lam * np.eye(6))
        u = Vt[-1]
        assert abs(abs(u @ v) - 1.0) < 1e-6
    assert np.max(np.abs(V.T @ V - np.eye(6))) <= 1e-10
    assert np.max(np.abs(G @ V - V * w)) <= 1e-8 * np.max(np.abs(w))


def test_top_eigenpairs_bad_d():
    with pytest.raises(DimensionMismatch):
        numerics.top_eigenpairs(np.eye(3), 4)


# -- optimiser ------------------------------------------------------------------


def test_maximize_quadratic():
    x, v = numerics.maximize_box_constrained(lambda x: -(x[0] - 1.0) ** 2, [(0.0, 3.0)], starts=[[2.5]])
    assert x[0] == pytest.approx(1.0, abs=1e-4)


def test_maximize_two_peaks_grid_oracle():
    def f(x):
        x = np.asarray(x, dtype=float)
        return np.exp(-((x - 0.5) ** 2) / 0.02) + 2.0 * np.exp(-((x - 2.3) ** 2) / 0.05)

    grid = np.arange(0.0, 3.0 + 1e-12, 1e-3)
    x_ref = grid[np.argmax(f(grid))]
    x, v = numerics.maximize_box_constrained(lambda z: float(f(z[0])), [(0.0, 3.0)], starts=[[0.4], [2.0]])
    assert abs(x[0] - x_ref) <= 1e-3
    assert v >= f(x_ref) - 1e-9


def test_maximize_constant_returns_start():
    x, v = numerics.maximize_box_constrained(lambda x: 4.0, [(0.0, 1.0), (0.0, 1.0)], starts=[[0.3, 0.7]])
    np.testing.assert_array_equal(x, [0.3, 0.7])
    assert v == 4.0


def test_maximize_never_worse_than_starts_and_deterministic():
    def f(x):
        return float(np.sin(5 * x[0]) * np.cos(3 * x[1]) - 0.1 * x[0] ** 2)

    bounds = [(-2.0, 2.0), (-2.0, 2.0)]
    starts = [[0.1, 0.2], [-1.5, 1.0]]
    a = numerics.maximize_box_constrained(f, bounds, starts=starts, seed=3, n_random=4)
    b = numerics.maximize_box_constrained(f, bounds, starts=starts, seed=3, n_random=4)
    assert a[1] >= max(f(s) for s in starts)
    np.testing.assert_array_equal(a[0], b[0])
    assert a[1] == b[1]


def test_maximize_all_starts_fail():
    with pytest.raises(AllStartsFailed):
        numerics.maximize_box_constrained(lambda x: np.nan, [(0.0, 1.0)], starts=[[0.5]])


# -- finite differences ---------------------------------------------------------


def test_central_difference_examples():
    assert numerics.central_difference_gradient(lambda x: x[0] ** 2, [3.0], 1e-5)[0] == pytest.approx(6.0, abs=1e-8)
    a = np.array([1.5, -2.0])
    for h in (1e-2, 1e-5):
        np.testing.assert_allclose(numerics.central_difference_gradient(lambda x: a @ x, [0.3, 0.4], h), a,
                                   rtol=1e-9)
    h = 1e-3
    assert abs(numerics.central_difference_gradient(lambda x: np.sin(x[0]), [0.0], h)[0] - 1.0) <= h**2
