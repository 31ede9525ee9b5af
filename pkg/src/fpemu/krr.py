"""Kernel ridge regression and its ridgeless limit.

Weights solve ``(C_XX + n*lam*I) w = y`` on the unit-variance correlation
matrix, so ``sigma2`` of the kernel cancels. With ``lam = eta / n`` the
prediction coincides with the zero-mean GP regression mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .errors import DimensionMismatch, SchemaError, SingularCorrelation
from .kernels import KernelSpec, correlation_matrix


@dataclass(frozen=True)
class KRRModel:
    weights: np.ndarray
    lam: float
    X: np.ndarray
    kernel: KernelSpec
    jitter: float = 0.0


def krr_fit(X, y, kernel: KernelSpec, lam: float) -> KRRModel:
    if lam < 0:
        raise SchemaError("regularisation must be non-negative")
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).reshape(-1)
    n = X.shape[0]
    if y.size != n:
        raise DimensionMismatch(f"{n} inputs for {y.size} outputs")
    C = correlation_matrix(kernel, X)
    C[np.diag_indices_from(C)] += n * lam
    schedule = numerics.DEFAULT_JITTER if lam == 0 else (0.0,)
    F = numerics.cholesky_decompose(C, schedule, error=SingularCorrelation)
    w = numerics.solve_with_factor(F, y)
    return KRRModel(w, float(lam), X, kernel, F.jitter)


def ridgeless_fit(X, y, kernel: KernelSpec) -> KRRModel:
    return krr_fit(X, y, kernel, 0.0)


def krr_predict(model: KRRModel, x):
    """``sum_i w_i c(x, x_i)`` at one input or a batch (m x p)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    Xs = x.reshape(1, -1) if single else x
    if Xs.shape[1] != model.X.shape[1]:
        raise DimensionMismatch(f"input of dimension {Xs.shape[1]}, model expects {model.X.shape[1]}")
    out = correlation_matrix(model.kernel, Xs, model.X) @ model.weights
    return float(out[0]) if single else out


def cv_select_lambda(X, y, kernel: KernelSpec, grid, folds: int = 5, seed: int = 0):
    """K-fold cross-validated choice of ``lam`` from ``grid``.

    Returns ``(best lam, mean squared error per grid value)``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n = y.size
    folds = max(2, min(folds, n))
    idx = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(idx, folds)
    errs = []
    for lam in grid:
        sse = 0.0
        for test in parts:
            train = np.setdiff1d(idx, test)
            m = krr_fit(X[train], y[train], kernel, lam)
            sse += float(np.sum((krr_predict(m, X[test]) - y[test]) ** 2))
        errs.append(sse / n)
    errs = np.asarray(errs)
    return float(np.asarray(grid)[int(np.argmin(errs))]), errs
