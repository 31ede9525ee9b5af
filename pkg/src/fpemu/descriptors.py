"""Molecular configurations, invariant descriptors and permutation alignment.

Positions are in angstrom. Descriptor matrices are vectorised column-major
(stacking columns), and jacobians are taken with respect to the flattened
positions ``(x_1, y_1, z_1, x_2, ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _accel
from .errors import CoincidentAtoms, DimensionMismatch, SchemaError, TooManyAtoms

BOHR_IN_ANGSTROM = 0.529177210903
MAX_EXACT_ATOMS = 8
MIN_SEPARATION = 1e-6


@dataclass(frozen=True)
class MolecularConfiguration:
    charges: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.charges, dtype=np.int64).reshape(-1)
        R = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        if Z.size < 1 or Z.size != R.shape[0]:
            raise SchemaError(f"{Z.size} charges for {R.shape[0]} positions")
        if np.any(Z < 1):
            raise SchemaError("nuclear charges must be positive integers")
        Z.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "charges", Z)
        object.__setattr__(self, "positions", R)

    @property
    def n_atoms(self) -> int:
        return self.charges.size

    def moved(self, positions) -> "MolecularConfiguration":
        return MolecularConfiguration(self.charges, positions)

    def relabeled(self, perm) -> "MolecularConfiguration":
        perm = np.asarray(perm)
        return MolecularConfiguration(self.charges[perm], self.positions[perm])

    def to_dict(self) -> dict:
        return {"atoms": [{"Z": int(z), "r": [float(v) for v in r]}
                          for z, r in zip(self.charges, self.positions)]}

    @classmethod
    def from_dict(cls, d: dict) -> "MolecularConfiguration":
        try:
            atoms = d["atoms"]
            return cls([a["Z"] for a in atoms], [a["r"] for a in atoms])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad configuration object: {exc}") from exc


@dataclass(frozen=True)
class DescriptorVector:
    values: np.ndarray
    jacobian: Optional[np.ndarray] = None


def distance_matrix(config: MolecularConfiguration) -> np.ndarray:
    R = config.positions
    diff = R[:, None, :] - R[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _pair_geometry(config: MolecularConfiguration):
    R = config.positions
    diff = R[:, None, :] - R[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    off = ~np.eye(config.n_atoms, dtype=bool)
    if np.any(dist[off] <= MIN_SEPARATION):
        raise CoincidentAtoms("two nuclei closer than 1e-6 angstrom")
    return diff, dist


def _vec(M: np.ndarray) -> np.ndarray:
    return M.reshape(-1, order="F")


def _pair_jacobian(N: int, weights_vec: np.ndarray) -> np.ndarray:
    """Scatter per-pair gradients into an (N*N, 3N) jacobian.

    ``weights_vec[i, j]`` is the gradient of entry (i, j) with respect to r_i;
    the gradient with respect to r_j is its negative.
    """
    J = np.zeros((N * N, 3 * N))
    for i in range(N):
        for j in range(N):
            if i == j or not np.any(weights_vec[i, j]):
                continue
            row = i + N * j  # column-major index of entry (i, j)
            J[row, 3 * i:3 * i + 3] += weights_vec[i, j]
            J[row, 3 * j:3 * j + 3] -= weights_vec[i, j]
    return J


def inverse_distance_descriptor(config: MolecularConfiguration, with_jacobian: bool = False) -> DescriptorVector:
    """N*N vector with 1/|r_i - r_j| below the diagonal and zeros elsewhere."""
    N = config.n_atoms
    diff, dist = _pair_geometry(config)
    lower = np.tril(np.ones((N, N), dtype=bool), k=-1)
    D = np.zeros((N, N))
    D[lower] = 1.0 / dist[lower]
    jac = None
    if with_jacobian:
        w = np.zeros((N, N, 3))
        w[lower] = -diff[lower] / dist[lower][:, None] ** 3
        jac = _pair_jacobian(N, w)
    return DescriptorVector(_vec(D), jac)


def coulomb_matrix(config: MolecularConfiguration, with_jacobian: bool = False) -> DescriptorVector:
    """Z_i Z_j / |r_i - r_j| off the diagonal, 0.5 Z_i^2.4 on it."""
    N = config.n_atoms
    Z = config.charges.astype(float)
    diff, dist = _pair_geometry(config)
    off = ~np.eye(N, dtype=bool)
    ZZ = np.outer(Z, Z)
    M = np.zeros((N, N))
    M[off] = ZZ[off] / dist[off]
    M[np.diag_indices(N)] = 0.5 * Z**2.4
    jac = None
    if with_jacobian:
        w = np.zeros((N, N, 3))
        w[off] = -(ZZ[off] / dist[off] ** 3)[:, None] * diff[off]
        jac = _pair_jacobian(N, w)
    return DescriptorVector(_vec(M), jac)


def gaussian_potential(config: MolecularConfiguration, grid, width: float, with_jacobian: bool = False) -> DescriptorVector:
    """sum_a Z_a exp(-|g_j - r_a|^2 / (2 width^2)) at each grid point g_j."""
    if not width > 0:
        raise SchemaError("Gaussian width must be positive")
    G = np.asarray(grid, dtype=float).reshape(-1, 3)
    diff = G[:, None, :] - config.positions[None, :, :]  # k x N x 3
    e = config.charges[None, :] * np.exp(-np.sum(diff * diff, axis=-1) / (2.0 * width**2))
    jac = None
    if with_jacobian:
        jac = (e[:, :, None] * diff / width**2).reshape(G.shape[0], -1)
    return DescriptorVector(e.sum(axis=1), jac)


def rigid_motion(config: MolecularConfiguration, rotation, shift) -> MolecularConfiguration:
    return config.moved(config.positions @ np.asarray(rotation).T + np.asarray(shift))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((3, 3)))
    Q = Q * np.sign(np.diag(R))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Q


# -- permutation alignment ---------------------------------------------------


def _alignment_cost(A, B, perm):
    return float(np.sum((A[np.ix_(perm, perm)] - B) ** 2))


def _heuristic_alignment(A, B, la, lb):
    n = A.shape[0]
    sa = np.sort(A, axis=1)
    sb = np.sort(B, axis=1)
    cost = np.sum((sb[:, None, :] - sa[None, :, :]) ** 2, axis=-1)
    cost[la[None, :] != lb[:, None]] = np.inf
    if not np.all(np.isfinite(cost).any(axis=1)):
        raise SchemaError("label multisets differ")
    big = np.where(np.isfinite(cost), cost, 1e300)
    rows, cols = linear_sum_assignment(big)
    perm = cols[np.argsort(rows)]
    best = _alignment_cost(A, B, perm)
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                if la[perm[i]] != lb[j] or la[perm[j]] != lb[i]:
                    continue
                trial = perm.copy()
                trial[i], trial[j] = trial[j], trial[i]
                c = _alignment_cost(A, B, trial)
                if c < best - 1e-12 * max(1.0, best):
                    perm, best, improved = trial, c, True
    return perm


def align_permutation(A, B, labels_a=None, labels_b=None, heuristic: bool = False) -> np.ndarray:
    """Permutation ``perm`` minimising ||A[perm][:, perm] - B||_F.

    With ``P`` the permutation matrix whose row i selects ``perm[i]``, this is
    ``P A P^T ~ B``: atom ``i`` of the B-labelling is atom ``perm[i]`` of the
    A-labelling. Indices are 0-based. Optional labels (e.g. nuclear charges)
    forbid matching atoms of different species. Exhaustive search returns the
    lexicographically smallest optimal permutation; ``heuristic=True`` is
    required above ``MAX_EXACT_ATOMS`` atoms.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise DimensionMismatch(f"distance matrices of shape {A.shape} and {B.shape}")
    la = np.zeros(n, dtype=np.int64) if labels_a is None else np.asarray(labels_a, dtype=np.int64)
    lb = np.zeros(n, dtype=np.int64) if labels_b is None else np.asarray(labels_b, dtype=np.int64)
    if heuristic:
        return _heuristic_alignment(A, B, la, lb)
    if n > MAX_EXACT_ATOMS:
        raise TooManyAtoms(f"exact alignment limited to {MAX_EXACT_ATOMS} atoms, got {n}")
    tol = 1e-12 * max(1.0, float(np.sum(A * A) + np.sum(B * B)))
    perm, _ = _accel.exhaustive_alignment(A, B, la, lb, tol)
    if perm[0] < 0:
        raise SchemaError("label multisets differ")
    return np.asarray(perm, dtype=np.int64)
