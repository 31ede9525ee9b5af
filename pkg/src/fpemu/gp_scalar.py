"""Scalar Gaussian-process emulation with a linear mean basis.

Trend and variance have closed-form maximum likelihood estimates given the
correlation; the range (and, for noisy data, the nugget) are found by
maximising the profile likelihood in log space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import norm

from . import numerics
from .errors import DimensionMismatch, OptimizationFailure, SchemaError, SingularCorrelation, VersionMismatch
from .kernels import KernelSpec, correlation_matrix

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
DEFAULT_RANGE_BOUNDS = (1e-3, 1e3)
DEFAULT_NUGGET_BOUNDS = (1e-8, 1e2)

_variance_clamps = 0


def variance_clamp_count() -> int:
    """Number of predictive variances clamped from below at zero so far."""
    return _variance_clamps


@dataclass(frozen=True)
class MeanBasis:
    """Basis functions ``h_t`` of the trend ``m(x) = h(x) theta``."""

    name: str = "constant"
    functions: tuple = ()

    @classmethod
    def constant(cls) -> "MeanBasis":
        return cls("constant")

    @classmethod
    def zero(cls) -> "MeanBasis":
        return cls("zero")

    @classmethod
    def from_functions(cls, functions: Sequence[Callable], name: str = "custom") -> "MeanBasis":
        return cls(name, tuple(functions))

    @classmethod
    def from_name(cls, name: str) -> "MeanBasis":
        if name not in ("constant", "zero"):
            raise SchemaError(f"unknown mean basis {name!r}")
        return cls(name)

    def matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.name == "constant":
            return np.ones((X.shape[0], 1))
        if self.name == "zero":
            return np.zeros((X.shape[0], 0))
        return np.column_stack([[f(x) for x in X] for f in self.functions])


@dataclass(frozen=True)
class TrainingSet:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.size:
            raise DimensionMismatch(f"{X.shape[0]} inputs for {y.size} outputs")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise SchemaError("training data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class TrainedGP:
    kernel: KernelSpec
    basis: MeanBasis
    theta: np.ndarray
    sigma2: float
    X: np.ndarray
    y: np.ndarray
    factor: numerics.SymmetricFactor
    weights: np.ndarray  # C~^{-1} (y - H theta)
    log_likelihood: float = field(default=np.nan, compare=False)

    @property
    def eta(self) -> float:
        return self.kernel.eta

    @property
    def jitter(self) -> float:
        return self.factor.jitter

    def to_dict(self) -> dict:
        if self.basis.name not in ("constant", "zero"):
            raise SchemaError("only constant and zero mean bases serialise")
        return {
            "version": SCHEMA_VERSION,
            "kind": "gp",
            "kernel": self.kernel.to_dict(),
            "basis": self.basis.name,
            "theta": [float(v) for v in self.theta],
            "sigma2": float(self.sigma2),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "jitter": float(self.jitter),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedGP":
        if str(d.get("version")) != SCHEMA_VERSION:
            raise VersionMismatch(f"model version {d.get('version')!r}, expected {SCHEMA_VERSION!r}")
        try:
            kernel = KernelSpec.from_dict(d["kernel"])
            basis = MeanBasis.from_name(d["basis"])
            data = TrainingSet(np.asarray(d["X"], dtype=float), d["y"])
            jitter = float(d["jitter"])
            theta = np.asarray(d["theta"], dtype=float)
            sigma2 = float(d["sigma2"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad model file: {exc}") from exc
        F = _factor(kernel, data.X, (jitter,))
        resid = data.y - basis.matrix(data.X) @ theta
        w = numerics.solve_with_factor(F, resid)
        return cls(kernel, basis, theta, sigma2, data.X, data.y, F, w)


# -- likelihood ---------------------------------------------------------------


def _factor(kernel: KernelSpec, X, schedule=numerics.DEFAULT_JITTER) -> numerics.SymmetricFactor:
    C = correlation_matrix(kernel, X)
    C[np.diag_indices_from(C)] = 1.0 + kernel.eta
    return numerics.cholesky_decompose(C, schedule, error=SingularCorrelation)


def _gls(F: numerics.SymmetricFactor, H: np.ndarray, Y: np.ndarray):
    """Generalised least squares for one or many output columns.

    Returns (theta q x m, residual weights C^{-1}(Y - H theta), S^2 per column,
    Y^T C^{-1} Y per column).
    """
    Ci_Y = numerics.solve_with_factor(F, Y)
    if H.shape[1]:
        Ci_H = numerics.solve_with_factor(F, H)
        theta = np.linalg.solve(H.T @ Ci_H, H.T @ Ci_Y)
        W = Ci_Y - Ci_H @ theta
    else:
        theta = np.zeros((0,) + Y.shape[1:])
        W = Ci_Y
    resid = Y - H @ theta
    S2 = np.einsum("i...,i...->...", resid, W)
    total = np.einsum("i...,i...->...", Y, Ci_Y)
    return theta, W, S2, total


def _degenerate(S2, total) -> np.ndarray:
    return np.asarray(S2 <= 1e-20 * np.maximum(total, 0.0)) | np.asarray(S2 <= 0.0)


def log_profile_likelihood(basis: MeanBasis, data: TrainingSet, kernel: KernelSpec) -> float:
    """``-1/2 log|C~| - n/2 log S^2``, or ``-inf`` when the residual vanishes."""
    F = _factor(kernel, data.X)
    _, _, S2, total = _gls(F, basis.matrix(data.X), data.y)
    if _degenerate(S2, total):
        return -np.inf
    return -0.5 * numerics.log_det_from_factor(F) - 0.5 * data.n * float(np.log(S2))


def full_log_likelihood(basis: MeanBasis, data: TrainingSet, kernel: KernelSpec, theta, sigma2: float) -> float:
    """Gaussian log likelihood at arbitrary trend and variance (constants kept)."""
    F = _factor(kernel, data.X)
    r = data.y - basis.matrix(data.X) @ np.atleast_1d(theta)
    quad = float(r @ numerics.solve_with_factor(F, r))
    n = data.n
    return -0.5 * (n * np.log(2 * np.pi * sigma2) + numerics.log_det_from_factor(F) + quad / sigma2)


# -- fitting ------------------------------------------------------------------


def condition(basis: MeanBasis, data: TrainingSet, kernel: KernelSpec,
              jitter_schedule=numerics.DEFAULT_JITTER) -> TrainedGP:
    """Closed-form trend and variance at fixed kernel parameters."""
    F = _factor(kernel, data.X, jitter_schedule)
    H = basis.matrix(data.X)
    theta, w, S2, total = _gls(F, H, data.y)
    if _degenerate(S2, total):
        sigma2, ll = 0.0, -np.inf
    else:
        sigma2 = float(S2) / data.n
        ll = -0.5 * numerics.log_det_from_factor(F) - 0.5 * data.n * float(np.log(S2))
    return TrainedGP(kernel, basis, np.atleast_1d(theta).astype(float), sigma2, data.X, data.y, F, w, ll)


def input_ranges(X) -> np.ndarray:
    X = np.atleast_2d(X)
    r = X.max(axis=0) - X.min(axis=0)
    return np.where(r > 0, r, 1.0)


def parameter_bounds(kernel: KernelSpec, X, noise_mode: str,
                     range_bounds=DEFAULT_RANGE_BOUNDS, nugget_bounds=DEFAULT_NUGGET_BOUNDS):
    """Log-space box for (log gamma..., [log eta])."""
    ranges = input_ranges(X)
    if kernel.family != "product":
        ranges = np.array([np.linalg.norm(ranges)])
    b = [(np.log(range_bounds[0] * r), np.log(range_bounds[1] * r)) for r in ranges]
    if noise_mode == "noisy":
        b.append((np.log(nugget_bounds[0]), np.log(nugget_bounds[1])))
    return b


def _unpack(kernel: KernelSpec, theta_log, noise_mode: str) -> KernelSpec:
    n_g = len(theta_log) - (1 if noise_mode == "noisy" else 0)
    g = np.exp(theta_log[:n_g])
    gamma = tuple(g) if kernel.family == "product" else float(g[0])
    eta = float(np.exp(theta_log[-1])) if noise_mode == "noisy" else 0.0
    return kernel.with_params(gamma=gamma, eta=eta)


def fit(basis: MeanBasis, data: TrainingSet, kernel_template: KernelSpec,
        noise_mode: str = "interpolating", bounds=None, seed: int = 0, n_starts: int = 5) -> TrainedGP:
    """Maximum likelihood fit of the range (and nugget in ``noisy`` mode).

    ``bounds`` is an optional list of log-space intervals, one per range
    parameter plus one for ``log eta`` in noisy mode; defaults come from
    :func:`parameter_bounds`. Interpolating mode pins the nugget at zero.
    """
    if noise_mode not in ("interpolating", "noisy"):
        raise SchemaError(f"unknown noise mode {noise_mode!r}")
    if data.n < 2:
        raise SchemaError("fitting needs at least two training points")
    if kernel_template.family == "product" and kernel_template.gammas.size == 1 and data.X.shape[1] > 1:
        kernel_template = kernel_template.with_params(gamma=tuple(np.repeat(kernel_template.gammas, data.X.shape[1])))
    if bounds is None:
        bounds = parameter_bounds(kernel_template, data.X, noise_mode)
    H = basis.matrix(data.X)

    def objective(t):
        k = _unpack(kernel_template, t, noise_mode)
        F = _factor(k, data.X)
        _, _, S2, total = _gls(F, H, data.y)
        if _degenerate(S2, total):
            return -np.inf
        return -0.5 * numerics.log_det_from_factor(F) - 0.5 * data.n * float(np.log(S2))

    try:
        t_hat, _ = numerics.maximize_box_constrained(objective, bounds, seed=seed, n_random=n_starts)
    except numerics.AllStartsFailed as exc:
        # constant outputs: nothing to estimate, keep the template kernel
        model = condition(basis, data, kernel_template.with_params(eta=0.0) if noise_mode == "interpolating" else kernel_template)
        if model.sigma2 == 0.0:
            return model
        raise OptimizationFailure(str(exc)) from exc
    return condition(basis, data, _unpack(kernel_template, t_hat, noise_mode))


# -- prediction ---------------------------------------------------------------


def predict(model: TrainedGP, x, include_nugget: bool = True):
    """Predictive mean and variance at one input (p-vector) or many (m x p).

    The variance is ``sigma2 * (1 + eta - c^T C~^{-1} c)``: the nugget is
    counted at coincident inputs, as for a new noisy observation. Pass
    ``include_nugget=False`` for the latent noise-free process.
    """
    global _variance_clamps
    x = np.asarray(x, dtype=float)
    single = x.ndim <= 1
    Xs = np.atleast_2d(x) if x.ndim else x.reshape(1, 1)
    if single and model.X.shape[1] != Xs.shape[1]:
        Xs = Xs.reshape(1, -1)
    if Xs.shape[1] != model.X.shape[1]:
        raise DimensionMismatch(f"input of dimension {Xs.shape[1]}, model expects {model.X.shape[1]}")
    c = correlation_matrix(model.kernel, Xs, model.X)  # m x n
    mean = model.basis.matrix(Xs) @ model.theta + c @ model.weights
    v = numerics.half_solve(model.factor, c.T)
    prior = 1.0 + (model.eta if include_nugget else 0.0)
    var = model.sigma2 * (prior - np.sum(v * v, axis=0))
    neg = var < 0
    if np.any(neg):
        _variance_clamps += int(np.sum(neg))
        if np.any(var < -1e-10 * max(model.sigma2, 1e-300)):
            log.warning("clamped predictive variance %g to zero", float(var.min()))
        var = np.where(neg, 0.0, var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def predictive_interval(model: TrainedGP, x, level: float = 0.95):
    if not 0.0 < level < 1.0:
        raise SchemaError("level must lie in (0, 1)")
    mean, var = predict(model, x)
    z = norm.ppf(0.5 + 0.5 * level)
    half = z * np.sqrt(var)
    return mean - half, mean + half
