"""Vector-output emulation of densities on a fixed spatial grid.

Three routes share the ``k x n`` observation matrix ``P`` (column i is the
density for input i):

* many single GPs, one independent scalar fit per grid point;
* the parallel partial GP, where all grid points share one correlation
  matrix and differ in trend and variance, so one factorisation serves all;
* the latent factor model ``rho(x) = A z(x) + noise`` with orthonormal
  loadings ``A`` and independent GP factors.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import subspace_angles

from . import numerics
from .errors import (
    ConvergenceFailure,
    DimensionMismatch,
    NonOrthonormalBasis,
    OptimizationFailure,
    RankDeficiency,
    SchemaError,
    SingularCorrelation,
    VersionMismatch,
)
from .gp_scalar import (
    MeanBasis,
    TrainedGP,
    TrainingSet,
    _degenerate,
    _factor,
    _gls,
    _unpack,
    fit as fit_scalar,
    parameter_bounds,
)
from .kernels import KernelSpec, correlation_matrix
from .krr import KRRModel, krr_fit, krr_predict

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"


@dataclass(frozen=True)
class DensityDataset:
    X: np.ndarray  # n x p
    P: np.ndarray  # k x n
    grid: Optional[np.ndarray] = None  # k x 3, metadata only

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        if P.shape[1] != X.shape[0]:
            raise DimensionMismatch(f"P has {P.shape[1]} columns for {X.shape[0]} inputs")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(P))):
            raise SchemaError("density data must be finite")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "P", P)
        if self.grid is not None:
            object.__setattr__(self, "grid", np.asarray(self.grid, dtype=float).reshape(-1, 3))

    @property
    def k(self) -> int:
        return self.P.shape[0]

    @property
    def n(self) -> int:
        return self.P.shape[1]


def _check_version(d: dict, kind: str) -> None:
    if str(d.get("version")) != SCHEMA_VERSION:
        raise VersionMismatch(f"model version {d.get('version')!r}, expected {SCHEMA_VERSION!r}")
    if d.get("kind") != kind:
        raise SchemaError(f"expected a {kind!r} model, got {d.get('kind')!r}")


def thread_count(threads: Optional[int] = None) -> int:
    env = os.environ.get("FPEMU_THREADS")
    if env:
        return max(1, int(env))
    return max(1, threads or 1)


# -- many single GPs ------------------------------------------------------------


def fit_ms(dataset: DensityDataset, basis: MeanBasis, kernel_template: KernelSpec,
           noise_mode: str = "interpolating", seed: int = 0, threads: Optional[int] = None) -> list:
    """Independent :func:`gp_scalar.fit` per grid row."""

    def one(j):
        try:
            return fit_scalar(basis, TrainingSet(dataset.X, dataset.P[j]), kernel_template, noise_mode, seed=seed)
        except Exception as exc:
            raise type(exc)(f"grid {j}: {exc}") from exc

    workers = thread_count(threads)
    if workers == 1:
        return [one(j) for j in range(dataset.k)]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(one, range(dataset.k)))


# -- parallel partial GP -------------------------------------------------------


@dataclass(frozen=True)
class PPGPModel:
    kernel: KernelSpec
    basis: MeanBasis
    theta: np.ndarray  # q x k
    sigma2: np.ndarray  # k
    X: np.ndarray
    P: np.ndarray
    factor: numerics.SymmetricFactor
    weights: np.ndarray  # n x k

    @property
    def k(self) -> int:
        return self.P.shape[0]

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kind": "ppgp",
            "kernel": self.kernel.to_dict(),
            "basis": self.basis.name,
            "jitter": self.factor.jitter,
            "X": self.X.tolist(),
            "P": self.P.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PPGPModel":
        _check_version(d, "ppgp")
        try:
            ds = DensityDataset(d["X"], d["P"])
            return condition_pp(ds, MeanBasis.from_name(d["basis"]), KernelSpec.from_dict(d["kernel"]),
                                jitter_schedule=(float(d["jitter"]),))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad PP GP model: {exc}") from exc


def _pp_loglik(F, H, P_T, n):
    _, _, S2, total = _gls(F, H, P_T)
    if np.any(_degenerate(S2, total)):
        return -np.inf
    k = P_T.shape[1]
    return -0.5 * k * numerics.log_det_from_factor(F) - 0.5 * n * float(np.sum(np.log(S2)))


def pp_log_likelihood(dataset: DensityDataset, basis: MeanBasis, kernel: KernelSpec) -> float:
    """Sum over grid rows of the scalar profile log likelihoods."""
    F = _factor(kernel, dataset.X)
    return _pp_loglik(F, basis.matrix(dataset.X), dataset.P.T, dataset.n)


def condition_pp(dataset: DensityDataset, basis: MeanBasis, kernel: KernelSpec,
                 jitter_schedule=numerics.DEFAULT_JITTER) -> PPGPModel:
    """Per-row closed-form trends and variances under one shared factorisation."""
    F = _factor(kernel, dataset.X, jitter_schedule)
    theta, W, S2, total = _gls(F, basis.matrix(dataset.X), dataset.P.T)
    sigma2 = np.where(_degenerate(S2, total), 0.0, S2 / dataset.n)
    return PPGPModel(kernel, basis, theta, sigma2, dataset.X, dataset.P, F, W)


def fit_pp(dataset: DensityDataset, basis: MeanBasis, kernel_template: KernelSpec,
           noise_mode: str = "interpolating", bounds=None, seed: int = 0, n_starts: int = 5) -> PPGPModel:
    """Shared (gamma, eta) by maximising the summed profile likelihood."""
    if dataset.n < 2:
        raise SchemaError("fitting needs at least two inputs")
    if bounds is None:
        bounds = parameter_bounds(kernel_template, dataset.X, noise_mode)
    H = basis.matrix(dataset.X)
    P_T = dataset.P.T

    def objective(t):
        F = _factor(_unpack(kernel_template, t, noise_mode), dataset.X)
        return _pp_loglik(F, H, P_T, dataset.n)

    try:
        t_hat, _ = numerics.maximize_box_constrained(objective, bounds, seed=seed, n_random=n_starts)
    except numerics.AllStartsFailed as exc:
        raise OptimizationFailure(f"PP GP likelihood not finite: {exc}") from exc
    return condition_pp(dataset, basis, _unpack(kernel_template, t_hat, noise_mode))


def predict_pp(model: PPGPModel, x):
    """Predictive means and variances for all k grid rows at one input."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != model.X.shape[1]:
        raise DimensionMismatch(f"input of dimension {x.size}, model expects {model.X.shape[1]}")
    c = correlation_matrix(model.kernel, x[None, :], model.X)[0]
    v = numerics.half_solve(model.factor, c)
    mean = model.basis.matrix(x[None, :])[0] @ model.theta + c @ model.weights
    var = np.maximum(model.sigma2 * (1.0 + model.kernel.eta - float(v @ v)), 0.0)
    return mean, var


# -- latent factor model -------------------------------------------------------


def _sign_convention(A: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(A), axis=0)
    s = np.sign(A[idx, np.arange(A.shape[1])])
    s[s == 0] = 1.0
    return A * s


def _shrinkage(X, kernel: KernelSpec, noise_var: float) -> np.ndarray:
    """``(noise_var * Sigma^{-1} + I)^{-1} = Sigma (Sigma + noise_var I)^{-1}``, symmetrised."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    Sigma = kernel.sigma2 * correlation_matrix(kernel, X)
    n = Sigma.shape[0]
    if noise_var == 0.0:
        return np.eye(n)
    F = numerics.cholesky_decompose(Sigma + noise_var * np.eye(n), error=SingularCorrelation)
    M = numerics.solve_with_factor(F, Sigma).T
    return 0.5 * (M + M.T)


def loading_matrix_G(P, X, kernel: KernelSpec, noise_var: float) -> np.ndarray:
    """``G = P (noise_var Sigma^{-1} + I_n)^{-1} P^T`` (k x k)."""
    P = np.asarray(P, dtype=float)
    G = P @ _shrinkage(X, kernel, noise_var) @ P.T
    return 0.5 * (G + G.T)


def _check_rank(vals, d, scale):
    if vals[d - 1] <= 1e-12 * max(scale, np.finfo(float).tiny):
        raise RankDeficiency(f"d={d} exceeds the numerical rank of G")


def estimate_loadings(P, X, kernel: KernelSpec, d: int, noise_var: float) -> np.ndarray:
    """Top-d eigenvectors of G with rotation fixed to the identity.

    Column signs make the largest-magnitude entry of each column positive.
    When ``k > n`` the eigenvectors are obtained from the n x n problem
    ``B^T P^T P B`` with ``B B^T`` the shrinkage matrix.
    """
    P = np.asarray(P, dtype=float)
    k, n = P.shape
    if not 1 <= d <= min(k, n):
        raise DimensionMismatch(f"d={d} must lie in [1, min(k, n)={min(k, n)}]")
    M = _shrinkage(X, kernel, noise_var)
    if k <= n:
        G = P @ M @ P.T
        vals, U = numerics.top_eigenpairs(0.5 * (G + G.T), d)
        _check_rank(vals, d, vals[0])
    else:
        lam, V = np.linalg.eigh(M)
        B = V * np.sqrt(np.maximum(lam, 0.0))
        PB = P @ B
        vals, W = numerics.top_eigenpairs(PB.T @ PB, d)
        _check_rank(vals, d, vals[0])
        U = PB @ W / np.sqrt(vals)
        U, _ = np.linalg.qr(U)  # restore orthonormality lost to rounding
        U = U * np.sign(np.sum(U * (PB @ W), axis=0))
    return _sign_convention(U)


def heterogeneous_objective(A, Gs) -> float:
    return float(sum(A[:, l] @ G @ A[:, l] for l, G in enumerate(Gs)))


def estimate_loadings_heterogeneous(P, X, kernels: Sequence[KernelSpec], noise_var: float,
                                    max_sweeps: int = 500, tol: float = 1e-10,
                                    return_history: bool = False):
    """Maximise ``sum_l a_l^T G_l a_l`` subject to ``A^T A = I``.

    Block coordinate ascent: each column is replaced by the top eigenvector of
    ``G_l`` restricted to the orthogonal complement of the other columns,
    which never lowers the objective. Starts from the shared-kernel solution
    for the averaged ``G``.
    """
    P = np.asarray(P, dtype=float)
    k = P.shape[0]
    d = len(kernels)
    if not 1 <= d <= min(P.shape):
        raise DimensionMismatch(f"d={d} must lie in [1, {min(P.shape)}]")
    Gs = [loading_matrix_G(P, X, kern, noise_var) for kern in kernels]
    Gbar = sum(Gs) / d
    vals, A = numerics.top_eigenpairs(Gbar, d)
    _check_rank(vals, d, vals[0])
    obj = heterogeneous_objective(A, Gs)
    history = [obj]
    for _ in range(max_sweeps):
        for l in range(d):
            others = np.delete(A, l, axis=1)
            Q = np.eye(k) - others @ others.T
            _, v = numerics.top_eigenpairs(Q @ Gs[l] @ Q, 1)
            a = Q @ v[:, 0]
            A[:, l] = a / np.linalg.norm(a)
        if np.max(np.abs(A.T @ A - np.eye(d))) > 1e-12:
            A, _ = np.linalg.qr(A)
        new = heterogeneous_objective(A, Gs)
        history.append(new)
        gain = new - obj
        obj = new
        if gain < tol * max(1.0, abs(obj)):
            break
    else:
        raise ConvergenceFailure(f"loading ascent did not converge in {max_sweeps} sweeps")
    A = _sign_convention(A)
    return (A, history) if return_history else A


@dataclass(frozen=True)
class LatentFactorModel:
    A: np.ndarray  # k x d
    kernels: tuple  # one KernelSpec per factor (sigma2 = factor variance)
    noise_var: float
    X: np.ndarray
    P: np.ndarray
    factors: tuple  # SymmetricFactor of Sigma_l + noise_var I
    weights: np.ndarray  # n x d

    @property
    def d(self) -> int:
        return self.A.shape[1]

    def to_dict(self) -> dict:
        return {
            "version": SCHEMA_VERSION,
            "kind": "latent",
            "A": self.A.tolist(),
            "kernels": [k.to_dict() for k in self.kernels],
            "noise_var": self.noise_var,
            "X": self.X.tolist(),
            "P": self.P.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatentFactorModel":
        _check_version(d, "latent")
        try:
            return build_latent(d["P"], d["X"], np.asarray(d["A"], dtype=float),
                                [KernelSpec.from_dict(k) for k in d["kernels"]], float(d["noise_var"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad latent factor model: {exc}") from exc


def _check_orthonormal(A, tol=1e-10):
    if np.max(np.abs(A.T @ A - np.eye(A.shape[1]))) > tol:
        raise NonOrthonormalBasis("loading/basis matrix columns are not orthonormal")


def build_latent(P, X, A, kernels: Sequence[KernelSpec], noise_var: float) -> LatentFactorModel:
    """Condition the factor GPs on projected data ``P^T a_l`` for given loadings."""
    P = np.asarray(P, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    A = np.asarray(A, dtype=float)
    _check_orthonormal(A)
    if len(kernels) != A.shape[1]:
        raise DimensionMismatch(f"{len(kernels)} kernels for {A.shape[1]} factors")
    if P.shape != (A.shape[0], X.shape[0]):
        raise DimensionMismatch(f"P has shape {P.shape}, expected {(A.shape[0], X.shape[0])}")
    n = X.shape[0]
    Z = P.T @ A  # n x d
    factors, W = [], np.empty((n, A.shape[1]))
    for l, kern in enumerate(kernels):
        S = kern.sigma2 * correlation_matrix(kern, X) + noise_var * np.eye(n)
        F = numerics.cholesky_decompose(S, error=SingularCorrelation)
        factors.append(F)
        W[:, l] = numerics.solve_with_factor(F, Z[:, l])
    return LatentFactorModel(A, tuple(kernels), float(noise_var), X, P, tuple(factors), W)


def residual_noise_variance(P, A) -> float:
    """Mean squared residual of ``P`` outside the span of ``A``."""
    P = np.asarray(P, dtype=float)
    R = P - A @ (A.T @ P)
    dof = (A.shape[0] - A.shape[1]) * P.shape[1]
    return float(np.sum(R * R) / dof) if dof > 0 else 0.0


def fit_latent(dataset: DensityDataset, kernels: Sequence[KernelSpec], noise_var: Optional[float] = None,
               d: Optional[int] = None) -> LatentFactorModel:
    """Estimate loadings (shared or heterogeneous kernels) and condition the factors.

    If ``noise_var`` is omitted it is estimated from the PCA residual.
    """
    kernels = list(kernels)
    d = d or len(kernels)
    if len(kernels) == 1 and d > 1:
        kernels = kernels * d
    if noise_var is None:
        U = estimate_loadings(dataset.P, dataset.X, kernels[0], d, 0.0)
        noise_var = residual_noise_variance(dataset.P, U)
    if all(k == kernels[0] for k in kernels):
        A = estimate_loadings(dataset.P, dataset.X, kernels[0], d, noise_var)
    else:
        A = estimate_loadings_heterogeneous(dataset.P, dataset.X, kernels, noise_var)
    return build_latent(dataset.P, dataset.X, A, kernels, noise_var)


def predict_latent(model: LatentFactorModel, x):
    """Predictive mean (k) and covariance (k x k) of the density at ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != model.X.shape[1]:
        raise DimensionMismatch(f"input of dimension {x.size}, model expects {model.X.shape[1]}")
    z = np.empty(model.d)
    D = np.empty(model.d)
    for l, (kern, F) in enumerate(zip(model.kernels, model.factors)):
        s = kern.sigma2 * correlation_matrix(kern, x[None, :], model.X)[0]
        z[l] = s @ model.weights[:, l]
        v = numerics.half_solve(F, s)
        D[l] = kern.sigma2 + model.noise_var - v @ v
    A = model.A
    mean = A @ z
    cov = (A * D) @ A.T + model.noise_var * (np.eye(A.shape[0]) - A @ A.T)
    return mean, 0.5 * (cov + cov.T)


# -- fixed-basis estimator ------------------------------------------------------


@dataclass(frozen=True)
class FixedBasisModel:
    basis: np.ndarray  # k x d, orthonormal columns
    models: tuple  # one KRRModel per coefficient


def fit_fixed_basis(P, X, basis, kernels: Sequence[KernelSpec], lambdas: Sequence[float]) -> FixedBasisModel:
    """Project densities on ``basis`` and fit ``z_l(x) = C_l(x)(C_l + lam_l I)^{-1} z_l``.

    ``lam_l`` multiplies the identity directly; choosing
    ``lam_l = noise_var / sigma2_l`` reproduces the latent-factor mean.
    """
    basis = np.asarray(basis, dtype=float)
    _check_orthonormal(basis)
    P = np.asarray(P, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if len(kernels) != basis.shape[1] or len(lambdas) != basis.shape[1]:
        raise DimensionMismatch("need one kernel and one lambda per basis column")
    Z = P.T @ basis
    models = tuple(krr_fit(X, Z[:, l], kern, lam / n) for l, (kern, lam) in enumerate(zip(kernels, lambdas)))
    return FixedBasisModel(basis, models)


def predict_fixed_basis(model: FixedBasisModel, x) -> np.ndarray:
    z = np.array([krr_predict(m, x) for m in model.models])
    return model.basis @ z


def dct_basis(k: int, d: int) -> np.ndarray:
    """First ``d`` orthonormal DCT-II vectors on ``k`` points."""
    j = np.arange(k)
    B = np.cos(np.pi * (j[:, None] + 0.5) * np.arange(d)[None, :] / k) * np.sqrt(2.0 / k)
    B[:, 0] /= np.sqrt(2.0)
    return B


def fit_factor_model(dataset: DensityDataset, kernel_template: KernelSpec, d: int,
                     loadings: Optional[np.ndarray] = None, seed: int = 0) -> LatentFactorModel:
    """Latent factor model with data-driven factor kernels.

    Starts from the principal-component loadings (or the given fixed
    ``loadings``), estimates the noise variance from the residual, fits each
    factor's range and variance by maximum likelihood on the projected data,
    then re-estimates the loadings under those kernels unless they are fixed.
    """
    if loadings is None:
        A0 = estimate_loadings(dataset.P, dataset.X, kernel_template, d, 0.0)
    else:
        A0 = np.asarray(loadings, dtype=float)
        _check_orthonormal(A0)
        d = A0.shape[1]
    noise_var = residual_noise_variance(dataset.P, A0)
    Z = dataset.P.T @ A0
    kernels = []
    zero = MeanBasis.zero()
    for l in range(d):
        try:
            g = fit_scalar(zero, TrainingSet(dataset.X, Z[:, l]), kernel_template, "interpolating", seed=seed)
        except Exception as exc:
            raise type(exc)(f"factor {l}: {exc}") from exc
        kernels.append(g.kernel.with_params(sigma2=max(g.sigma2, np.finfo(float).tiny), eta=0.0))
    if loadings is not None:
        A = A0
    elif all(k == kernels[0] for k in kernels):
        A = estimate_loadings(dataset.P, dataset.X, kernels[0], d, noise_var)
    else:
        A = estimate_loadings_heterogeneous(dataset.P, dataset.X, kernels, noise_var)
    return build_latent(dataset.P, dataset.X, A, kernels, noise_var)


def max_principal_angle(A, B) -> float:
    """Largest principal angle (radians) between the column spans of A and B."""
    return float(np.max(subspace_angles(np.asarray(A, dtype=float), np.asarray(B, dtype=float))))
