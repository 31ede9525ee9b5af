"""Dense linear algebra and box-constrained optimisation shared by the emulators."""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
from scipy.optimize import minimize
from scipy.stats import qmc

from .errors import (
    AllStartsFailed,
    ConvergenceFailure,
    DimensionMismatch,
    NotPositiveDefinite,
)

log = logging.getLogger(__name__)

DEFAULT_JITTER = (0.0, 1e-10, 1e-8, 1e-6)

# Active factorisation counters; see ``count_factorizations``.
_counters: list = []


@dataclass(frozen=True)
class SymmetricFactor:
    """Lower Cholesky factor of ``A + jitter * I``."""

    L: np.ndarray
    jitter: float

    @property
    def n(self) -> int:
        return self.L.shape[0]


class FactorizationCounter:
    def __init__(self):
        self.count = 0
        self.sizes: list[int] = []


@contextlib.contextmanager
def count_factorizations():
    """Count calls to :func:`cholesky_decompose` made inside the block."""
    counter = FactorizationCounter()
    _counters.append(counter)
    try:
        yield counter
    finally:
        _counters.remove(counter)


def cholesky_decompose(
    A,
    jitter_schedule: Sequence[float] = DEFAULT_JITTER,
    min_pivot_ratio: float = 0.0,
    error: type = NotPositiveDefinite,
) -> SymmetricFactor:
    """Factor ``A + j I`` for the first jitter ``j`` in the schedule that works.

    A factorisation "works" when LAPACK succeeds and, if ``min_pivot_ratio``
    is positive, ``(min diag L / max diag L)**2`` is at least that ratio.
    Raises ``error`` (a :class:`NotPositiveDefinite` subclass) if every
    jitter fails.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {A.shape}")
    scale = max(np.max(np.abs(A)), np.finfo(float).tiny) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > 1e-12 * scale:
        raise error("matrix is not symmetric")
    for c in _counters:
        c.count += 1
        c.sizes.append(A.shape[0])
    n = A.shape[0]
    for j in sorted(jitter_schedule):
        M = A + j * np.eye(n) if j else A
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            continue
        diag = np.diag(L)
        if not np.all(np.isfinite(L)) or np.any(diag <= 0.0):
            continue
        if min_pivot_ratio > 0.0 and n and (diag.min() / diag.max()) ** 2 < min_pivot_ratio:
            continue
        if j:
            log.debug("cholesky needed jitter %g (n=%d)", j, n)
        return SymmetricFactor(L=L, jitter=float(j))
    raise error(f"matrix not positive definite for jitters {list(jitter_schedule)}")


def solve_with_factor(F: SymmetricFactor, B) -> np.ndarray:
    """Solve ``(A + jitter I) X = B``; ``B`` may be a vector or an n x m matrix."""
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != F.n:
        raise DimensionMismatch(f"factor has dimension {F.n}, right-hand side has {B.shape[0]} rows")
    if F.n == 0:
        return B.copy()
    return scipy.linalg.cho_solve((F.L, True), B, check_finite=False)


def half_solve(F: SymmetricFactor, B) -> np.ndarray:
    """Return ``L^{-1} B`` (forward substitution only)."""
    B = np.asarray(B, dtype=np.float64)
    if B.shape[0] != F.n:
        raise DimensionMismatch(f"factor has dimension {F.n}, right-hand side has {B.shape[0]} rows")
    return scipy.linalg.solve_triangular(F.L, B, lower=True, check_finite=False)


def log_det_from_factor(F: SymmetricFactor) -> float:
    return float(2.0 * np.sum(np.log(np.diag(F.L))))


def top_eigenpairs(G, d: int):
    """Largest ``d`` eigenvalues (descending) and their orthonormal eigenvectors."""
    G = np.asarray(G, dtype=np.float64)
    k = G.shape[0]
    if G.shape != (k, k):
        raise DimensionMismatch(f"expected a square matrix, got shape {G.shape}")
    if not 1 <= d <= k:
        raise DimensionMismatch(f"d={d} must lie in [1, {k}]")
    try:
        w, V = np.linalg.eigh(0.5 * (G + G.T))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(w)[::-1][:d]
    return w[order], V[:, order]


def _safe(objective):
    def f(x):
        try:
            v = float(objective(x))
        except (ArithmeticError, NotPositiveDefinite):
            return -np.inf
        return v if np.isfinite(v) else -np.inf

    return f


def maximize_box_constrained(
    objective: Callable[[np.ndarray], float],
    bounds: Sequence[tuple[float, float]],
    starts: Sequence[Sequence[float]] = (),
    seed: int = 0,
    n_random: int = 0,
    maxiter: int = 200,
):
    """Multi-start maximisation of ``objective`` over a box.

    Each start is improved by a bounded Nelder-Mead search followed by an
    L-BFGS-B polish. ``n_random`` extra starts are drawn from a scrambled
    Halton sequence seeded by ``seed``. A refined point only replaces its
    start if it is strictly better, so the result is never worse than any
    start and a flat objective returns the first start unchanged.

    Returns ``(argmax, value)``.
    """
    lo = np.array([b[0] for b in bounds], dtype=float)
    hi = np.array([b[1] for b in bounds], dtype=float)
    d = lo.size
    pts = [np.clip(np.asarray(s, dtype=float), lo, hi) for s in starts]
    if n_random:
        sampler = qmc.Halton(d=d, scramble=True, seed=seed)
        pts.extend(qmc.scale(sampler.random(n_random), lo, hi))
    if not pts:
        raise AllStartsFailed("no starting points supplied")

    f = _safe(objective)

    def neg(x):
        v = f(np.clip(x, lo, hi))
        return 1e300 if v == -np.inf else -v

    best_x, best_v = None, -np.inf
    for x0 in pts:
        v0 = f(x0)
        if v0 == -np.inf:
            continue
        x, v = x0, v0
        res = minimize(neg, x0, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                       options={"maxiter": maxiter * d, "xatol": 1e-6, "fatol": 1e-10})
        if -res.fun > v:
            x, v = np.clip(res.x, lo, hi), -res.fun
        res = minimize(neg, x, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                       options={"maxiter": maxiter})
        if np.isfinite(res.fun) and -res.fun > v:
            x, v = np.clip(res.x, lo, hi), -res.fun
        if v > best_v:
            best_x, best_v = np.array(x, dtype=float), v
    if best_x is None:
        raise AllStartsFailed("objective not finite at any start")
    return best_x, float(best_v)


def central_difference_gradient(f: Callable, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g.reshape(x.shape)
