"""Stationary correlation functions and their analytic derivatives.

A :class:`KernelSpec` bundles the family with range ``gamma``, roughness
``alpha`` (power exponential only), variance ``sigma2`` and nugget ``eta``.
The covariance is ``K(x, x') = sigma2 * c(x, x')``; the nugget only enters
:func:`covariance_matrix` on the diagonal.

Derivatives of an isotropic correlation ``c(r)``, ``r = |x - x'|``, are
written through two radial helpers ``g`` and ``h`` with

    grad_x c       = g(r) * d,                    d = x - x'
    d2c / dx dx'^T = -(g(r) * I + h(r) * d d^T)

which stay finite at ``r = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal, Optional, Union

import numpy as np

from . import _accel
from .errors import DimensionMismatch, NonDifferentiableKernel, SchemaError

Family = Literal["power_exponential", "matern_5_2", "product"]
FAMILIES = ("power_exponential", "matern_5_2", "product")
SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelSpec:
    family: Family = "matern_5_2"
    gamma: Union[float, tuple] = 1.0
    alpha: float = 2.0
    sigma2: float = 1.0
    eta: float = 0.0
    # per-coordinate correlation of the product family
    base: str = field(default="power_exponential")

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SchemaError(f"unknown kernel family {self.family!r}")
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if self.family == "product":
            object.__setattr__(self, "gamma", tuple(float(v) for v in g))
            if self.base not in ("power_exponential", "matern_5_2"):
                raise SchemaError(f"unknown product base {self.base!r}")
        else:
            if g.size != 1:
                raise SchemaError(f"{self.family} takes a scalar range, got {g.size} values")
            object.__setattr__(self, "gamma", float(g[0]))
        if np.any(g <= 0) or not np.all(np.isfinite(g)):
            raise SchemaError("range parameters must be positive")
        if not 0.0 < self.alpha <= 2.0:
            raise SchemaError("roughness alpha must lie in (0, 2]")
        if not self.sigma2 > 0:
            raise SchemaError("variance sigma2 must be positive")
        if not self.eta >= 0:
            raise SchemaError("nugget eta must be non-negative")

    @property
    def gammas(self) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.gamma, dtype=float))

    def with_params(self, **kw) -> "KernelSpec":
        return replace(self, **kw)

    @property
    def differentiable(self) -> bool:
        if self.family == "matern_5_2":
            return True
        if self.family == "product" and self.base == "matern_5_2":
            return True
        return self.alpha == 2.0

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "gamma": list(self.gamma) if self.family == "product" else self.gamma,
            "alpha": self.alpha,
            "sigma2": self.sigma2,
            "eta": self.eta,
        }
        if self.family == "product":
            d["base"] = self.base
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        try:
            return cls(
                family=d["family"],
                gamma=d["gamma"],
                alpha=float(d.get("alpha", 2.0)),
                sigma2=float(d.get("sigma2", 1.0)),
                eta=float(d.get("eta", 0.0)),
                base=d.get("base", "power_exponential"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad kernel object: {exc}") from exc


# -- one-dimensional radial pieces ------------------------------------------


def _radial(kind: str, r, gamma, alpha):
    """Correlation at distance ``r`` for a single isotropic family."""
    r = np.asarray(r, dtype=float)
    if kind == "matern_5_2":
        s = SQRT5 * r / gamma
        return (1.0 + s + s * s / 3.0) * np.exp(-s)
    return np.exp(-((r / gamma) ** alpha))


def _radial_gh(kind: str, r, gamma, alpha):
    r = np.asarray(r, dtype=float)
    if kind == "matern_5_2":
        s = SQRT5 * r / gamma
        e = np.exp(-s)
        g = -(5.0 / (3.0 * gamma**2)) * (1.0 + s) * e
        h = (25.0 / (3.0 * gamma**4)) * e
        return g, h
    if alpha != 2.0:
        raise NonDifferentiableKernel(f"power exponential with alpha={alpha} is not differentiable")
    c = np.exp(-((r / gamma) ** 2))
    return -(2.0 / gamma**2) * c, (4.0 / gamma**4) * c


def _check_pair(spec: KernelSpec, x, xp):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(xp, dtype=float))
    if x.shape != xp.shape:
        raise DimensionMismatch(f"inputs of length {x.size} and {xp.size}")
    if spec.family == "product" and spec.gammas.size not in (1, x.size):
        raise DimensionMismatch(f"product kernel has {spec.gammas.size} ranges for {x.size} inputs")
    return x, xp


def _product_gammas(spec: KernelSpec, p: int) -> np.ndarray:
    g = spec.gammas
    return np.full(p, g[0]) if g.size == 1 else g


# -- public API ---------------------------------------------------------------


def correlation(spec: KernelSpec, x, xp) -> float:
    x, xp = _check_pair(spec, x, xp)
    if spec.family == "product":
        gam = _product_gammas(spec, x.size)
        return float(np.prod(_radial(spec.base, np.abs(x - xp), gam, spec.alpha)))
    return float(_radial(spec.family, np.linalg.norm(x - xp), spec.gamma, spec.alpha))


def correlation_matrix(spec: KernelSpec, X, Y=None) -> np.ndarray:
    """Unit-variance cross-correlation ``c(X_i, Y_j)`` with no nugget."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if Y is None else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"inputs of dimension {X.shape[1]} and {Y.shape[1]}")
    if spec.family == "product":
        gam = _product_gammas(spec, X.shape[1])
        out = np.ones((X.shape[0], Y.shape[0]))
        for l in range(X.shape[1]):
            out *= _radial(spec.base, np.abs(X[:, l, None] - Y[None, :, l]), gam[l], spec.alpha)
        return out
    fam = _accel.MATERN_5_2 if spec.family == "matern_5_2" else _accel.POWER_EXPONENTIAL
    return _accel.radial_correlation(X, Y, spec.gamma, fam, spec.alpha)


def covariance_matrix(spec: KernelSpec, X) -> np.ndarray:
    """``sigma2 * (C_XX + eta I)``."""
    C = correlation_matrix(spec, X)
    C[np.diag_indices_from(C)] = 1.0 + spec.eta
    return spec.sigma2 * C


def kernel_first_derivative(spec: KernelSpec, x, xp) -> np.ndarray:
    """Gradient of ``K(x, x')`` with respect to ``x``."""
    x, xp = _check_pair(spec, x, xp)
    if not spec.differentiable:
        raise NonDifferentiableKernel(f"{spec.family} with alpha={spec.alpha}")
    d = x - xp
    if spec.family == "product":
        gam = _product_gammas(spec, x.size)
        c = _radial(spec.base, np.abs(d), gam, spec.alpha)
        g, _ = _radial_gh(spec.base, np.abs(d), gam, spec.alpha)
        out = np.empty(x.size)
        for l in range(x.size):
            out[l] = g[l] * d[l] * np.prod(np.delete(c, l))
        return spec.sigma2 * out
    g, _ = _radial_gh(spec.family, np.linalg.norm(d), spec.gamma, spec.alpha)
    return spec.sigma2 * g * d


def kernel_cross_hessian(spec: KernelSpec, x, xp) -> np.ndarray:
    """Mixed second derivative ``d^2 K / dx dx'^T`` (p x p)."""
    x, xp = _check_pair(spec, x, xp)
    if not spec.differentiable:
        raise NonDifferentiableKernel(f"{spec.family} with alpha={spec.alpha}")
    d = x - xp
    p = x.size
    if spec.family == "product":
        gam = _product_gammas(spec, p)
        a = np.abs(d)
        c = _radial(spec.base, a, gam, spec.alpha)
        g, h = _radial_gh(spec.base, a, gam, spec.alpha)
        first = g * d  # dc_l/dd_l
        second = g + h * d * d  # d2c_l/dd_l^2
        H = np.empty((p, p))
        for l in range(p):
            for m in range(p):
                rest = np.prod(np.delete(c, [l, m]))
                H[l, m] = -(second[l] if l == m else first[l] * first[m]) * rest
        return spec.sigma2 * H
    g, h = _radial_gh(spec.family, np.linalg.norm(d), spec.gamma, spec.alpha)
    return -spec.sigma2 * (g * np.eye(p) + h * np.outer(d, d))


def radial_derivative_terms(spec: KernelSpec, X, Y):
    """Pairwise ``(g, h)`` arrays for an isotropic differentiable kernel.

    Used to assemble many cross-Hessian blocks at once; scaled by ``sigma2``.
    """
    if spec.family == "product":
        raise NotImplementedError("radial terms exist only for isotropic families")
    if not spec.differentiable:
        raise NonDifferentiableKernel(f"{spec.family} with alpha={spec.alpha}")
    from scipy.spatial.distance import cdist

    r = cdist(np.atleast_2d(X), np.atleast_2d(Y))
    g, h = _radial_gh(spec.family, r, spec.gamma, spec.alpha)
    return spec.sigma2 * g, spec.sigma2 * h
