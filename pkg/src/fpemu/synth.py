"""Seeded toy datasets: a 1-D test function, a diatomic force field and low-rank densities."""

from __future__ import annotations

import numpy as np

from .descriptors import MolecularConfiguration, random_rotation
from .kernels import KernelSpec, correlation_matrix

TWO_SINE_DOMAIN = (0.0, 10.0)
DIATOMIC_R0 = 2.0
DIATOMIC_RANGE = (1.4, 2.6)


def two_sine_function(x):
    x = np.asarray(x, dtype=float)
    return np.sin(2 * np.pi * x / 10.0) + np.sin(2 * np.pi * x / 2.5) / 5.0


def two_sine_dataset(n: int):
    """Equally spaced design of size ``n`` on [0, 10] with noise-free outputs."""
    X = np.linspace(*TWO_SINE_DOMAIN, n)[:, None]
    return X, two_sine_function(X[:, 0])


def diatomic_energy(r):
    return (np.asarray(r, dtype=float) - DIATOMIC_R0) ** 2


def diatomic_config(r: float, direction=(1.0, 0.0, 0.0), charges=(1, 1)) -> MolecularConfiguration:
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return MolecularConfiguration(charges, np.vstack([np.zeros(3), r * u]))


def diatomic_forces(config: MolecularConfiguration) -> np.ndarray:
    """Exact forces ``-grad E`` of the harmonic toy, flattened (6,)."""
    d = config.positions[1] - config.positions[0]
    r = np.linalg.norm(d)
    f1 = 2.0 * (r - DIATOMIC_R0) * d / r  # pulls atom 0 toward atom 1 when stretched
    return np.concatenate([f1, -f1])


def diatomic_dataset(n: int, seed: int = 0, random_orientation: bool = True):
    """Configurations at ``n`` equally spaced bond lengths, exact energies and forces."""
    rng = np.random.default_rng(seed)
    configs = []
    for r in np.linspace(*DIATOMIC_RANGE, n):
        u = random_rotation(rng)[:, 0] if random_orientation else np.array([1.0, 0.0, 0.0])
        configs.append(diatomic_config(r, u))
    energies = np.array([diatomic_energy(np.linalg.norm(c.positions[1] - c.positions[0])) for c in configs])
    forces = np.array([diatomic_forces(c) for c in configs])
    return configs, energies, forces


def low_rank_density(k: int, n: int, d: int, noise_var: float = 1e-4, seed: int = 0, p: int = 2,
                     gammas=None):
    """``P = A Z + noise`` with orthonormal ``A`` (k x d) and GP factor rows ``Z``.

    Returns ``(X, P, A, grid)``; the grid is k equally spaced points on the x axis.
    """
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, p))
    if gammas is None:
        gammas = [0.3 + 0.2 * l for l in range(d)]
    Z = np.empty((d, n))
    for l, g in enumerate(gammas):
        C = correlation_matrix(KernelSpec("matern_5_2", gamma=g), X)
        L = np.linalg.cholesky(C + 1e-10 * np.eye(n))
        Z[l] = L @ rng.standard_normal(n)
    A, _ = np.linalg.qr(rng.standard_normal((k, d)))
    P = A @ Z + np.sqrt(noise_var) * rng.standard_normal((k, n))
    grid = np.column_stack([np.linspace(0.0, 1.0, k), np.zeros(k), np.zeros(k)])
    return X, P, A, grid
