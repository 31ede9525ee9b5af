"""Gradient-domain force emulation.

An energy GP on the inverse-distance descriptor induces a GP on forces
``F = -grad E`` whose covariance blocks are ``J_a^T H(x_a, x_b) J_b`` with
``H = d^2 K / dx dx'^T`` and ``J`` the descriptor jacobian. Predicted force
fields are therefore gradients of a scalar and conserve energy.

Force vectors are ordered ``(F_1x, F_1y, F_1z, F_2x, ...)``; stacked training
forces follow configuration order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from . import numerics
from .descriptors import (
    MolecularConfiguration,
    align_permutation,
    distance_matrix,
    inverse_distance_descriptor,
)
from .errors import AtomCountMismatch, SchemaError, SingularCovariance, VersionMismatch
from .kernels import KernelSpec, kernel_cross_hessian, radial_derivative_terms

SCHEMA_VERSION = "1"
JITTER_STEPS = (1e-10, 1e-8, 1e-6)
MIN_PIVOT_RATIO = 1e-14


@dataclass(frozen=True)
class ForceTrainingSet:
    configs: tuple
    forces: np.ndarray  # n x 3N

    def __post_init__(self):
        configs = tuple(self.configs)
        if not configs:
            raise SchemaError("empty force dataset")
        N = configs[0].n_atoms
        ref = np.sort(configs[0].charges)
        for c in configs:
            if c.n_atoms != N or not np.array_equal(np.sort(c.charges), ref):
                raise AtomCountMismatch("all configurations must share atom count and charges")
        F = np.asarray(self.forces, dtype=float).reshape(len(configs), -1)
        if F.shape[1] != 3 * N:
            raise SchemaError(f"expected {3 * N} force components, got {F.shape[1]}")
        if not np.all(np.isfinite(F)):
            raise SchemaError("forces must be finite")
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "forces", F)

    @property
    def n_atoms(self) -> int:
        return self.configs[0].n_atoms


def _descriptors(configs: Sequence[MolecularConfiguration]):
    """Stacked descriptors (n x p) and transposed jacobians (n x 3N x p)."""
    ds = [inverse_distance_descriptor(c, with_jacobian=True) for c in configs]
    X = np.array([d.values for d in ds])
    T = np.array([d.jacobian.T for d in ds])
    return X, T


def hessian_blocks(kernel: KernelSpec, XA, TA, XB, TB) -> np.ndarray:
    """Matrix of ``d^2 K(x_a, x_b) / dr_a dr_b^T`` blocks, (nA*m) x (nB*m)."""
    nA, m, p = TA.shape
    nB = TB.shape[0]
    if kernel.family != "product":
        g, h = radial_derivative_terms(kernel, XA, XB)
        gram = np.einsum("amk,bqk->ambq", TA, TB)
        u = np.einsum("amk,ak->am", TA, XA)[:, None, :] - np.einsum("amk,bk->abm", TA, XB)
        w = np.einsum("bqk,ak->abq", TB, XA) - np.einsum("bqk,bk->bq", TB, XB)[None, :, :]
        M = -(g[:, None, :, None] * gram + h[:, None, :, None] * np.einsum("abm,abq->ambq", u, w))
        return M.reshape(nA * m, nB * m)
    M = np.empty((nA, m, nB, m))
    for a in range(nA):
        for b in range(nB):
            M[a, :, b, :] = TA[a] @ kernel_cross_hessian(kernel, XA[a], XB[b]) @ TB[b].T
    return M.reshape(nA * m, nB * m)


def build_force_covariance(configs: Sequence[MolecularConfiguration], kernel: KernelSpec) -> np.ndarray:
    X, T = _descriptors(configs)
    M = hessian_blocks(kernel, X, T, X, T)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class GDMLModel:
    kernel: KernelSpec
    configs: tuple
    forces: np.ndarray
    X: np.ndarray
    T: np.ndarray
    weights: np.ndarray
    factor: numerics.SymmetricFactor
    lam_c: float

    @property
    def n_atoms(self) -> int:
        return self.configs[0].n_atoms

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kind": "gdml",
            "kernel": self.kernel.to_dict(),
            "lambda_c": self.lam_c,
            "configs": [c.to_dict() for c in self.configs],
            "forces": self.forces.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GDMLModel":
        if str(d.get("version")) != SCHEMA_VERSION:
            raise VersionMismatch(f"model version {d.get('version')!r}, expected {SCHEMA_VERSION!r}")
        if d.get("kind") != "gdml":
            raise SchemaError("not a force model")
        try:
            data = ForceTrainingSet(tuple(MolecularConfiguration.from_dict(c) for c in d["configs"]), d["forces"])
            kernel = KernelSpec.from_dict(d["kernel"])
            lam_c = float(d["lambda_c"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad force model: {exc}") from exc
        return fit_forces(data, kernel, lam_c)


def fit_forces(data: ForceTrainingSet, kernel: KernelSpec, lam_c: Optional[float] = None) -> GDMLModel:
    """Solve ``(grad K grad^T + lam_c I) w = F`` for the force weights.

    The default ``lam_c`` is ``1e-10`` times the mean diagonal. The blocks
    are singular along rigid-motion directions, so if the first attempt fails
    the factorisation retries with extra jitter scaled the same way.
    """
    X, T = _descriptors(data.configs)
    M = hessian_blocks(kernel, X, T, X, T)
    M = 0.5 * (M + M.T)
    scale = float(np.trace(M)) / M.shape[0]
    if lam_c is None:
        lam_c = 1e-10 * scale
    if lam_c < 0:
        raise SchemaError("lambda_c must be non-negative")
    schedule = [lam_c] + [lam_c + t * scale for t in JITTER_STEPS]
    F = numerics.cholesky_decompose(M, schedule, min_pivot_ratio=MIN_PIVOT_RATIO, error=SingularCovariance)
    w = numerics.solve_with_factor(F, data.forces.reshape(-1))
    return GDMLModel(kernel, data.configs, data.forces, X, T, w, F, float(lam_c))


def _check_config(model: GDMLModel, config: MolecularConfiguration):
    if config.n_atoms != model.n_atoms or not np.array_equal(np.sort(config.charges), np.sort(model.configs[0].charges)):
        raise AtomCountMismatch(f"model trained on {model.n_atoms} atoms, got {config.n_atoms}")


def predict_force_mean(model: GDMLModel, configs: Sequence[MolecularConfiguration]) -> np.ndarray:
    """Predicted forces for several configurations, (m x 3N)."""
    for c in configs:
        _check_config(model, c)
    Xs, Ts = _descriptors(configs)
    K = hessian_blocks(model.kernel, Xs, Ts, model.X, model.T)
    return (K @ model.weights).reshape(len(configs), -1)


def predict_force(model: GDMLModel, config: MolecularConfiguration):
    """Predictive mean (3N) and covariance (3N x 3N) of the force."""
    _check_config(model, config)
    Xs, Ts = _descriptors([config])
    K = hessian_blocks(model.kernel, Xs, Ts, model.X, model.T)
    mean = K @ model.weights
    prior = hessian_blocks(model.kernel, Xs, Ts, Xs, Ts)
    V = numerics.half_solve(model.factor, K.T)
    cov = prior - V.T @ V
    cov = 0.5 * (cov + cov.T)
    lam, U = np.linalg.eigh(cov)
    cov = (U * np.maximum(lam, 0.0)) @ U.T
    return mean, cov


def _segment_configs(template: MolecularConfiguration, ra, rb, t):
    return [template.moved(ra + ti * (rb - ra)) for ti in t]


def _closed(loop):
    loop = list(loop)
    if not np.allclose(loop[0].positions, loop[-1].positions):
        loop.append(loop[0])
    return loop


def conservativity_check(model: GDMLModel, loop: Sequence[MolecularConfiguration], points_per_segment: int = 33) -> float:
    """Circulation of the predicted force along a closed polyline (trapezoid rule)."""
    loop = _closed(loop)
    t = np.linspace(0.0, 1.0, points_per_segment)
    total = 0.0
    for a, b in zip(loop[:-1], loop[1:]):
        ra, rb = a.positions, b.positions
        F = predict_force_mean(model, _segment_configs(a, ra, rb, t))
        total += trapezoid(F @ (rb - ra).reshape(-1), t)
    return float(total)


def loop_length(loop: Sequence[MolecularConfiguration]) -> float:
    loop = _closed(loop)
    return float(sum(np.linalg.norm(b.positions - a.positions) for a, b in zip(loop[:-1], loop[1:])))


def integrate_energy(model: GDMLModel, config: MolecularConfiguration, reference: MolecularConfiguration,
                     nodes: int = 32) -> float:
    """``E(config) - E(reference)`` by Gauss-Legendre quadrature of ``-F . dr`` on the straight path."""
    x, wts = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (x + 1.0)
    ra, rb = reference.positions, config.positions
    F = predict_force_mean(model, _segment_configs(reference, ra, rb, t))
    return float(-0.5 * np.sum(wts * (F @ (rb - ra).reshape(-1))))


def symmetrize(data: ForceTrainingSet, reference_index: int = 0) -> ForceTrainingSet:
    """Relabel every configuration (and its forces) to best match the reference."""
    ref = data.configs[reference_index]
    B = distance_matrix(ref)
    configs, forces = [], []
    N = data.n_atoms
    for c, f in zip(data.configs, data.forces):
        perm = align_permutation(distance_matrix(c), B, c.charges, ref.charges)
        configs.append(c.relabeled(perm))
        forces.append(f.reshape(N, 3)[perm].reshape(-1))
    return ForceTrainingSet(tuple(configs), np.array(forces))
