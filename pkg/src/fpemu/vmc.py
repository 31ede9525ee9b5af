"""Variational Monte Carlo with analytic hydrogen and particle-in-a-box references.

Atomic units throughout (hbar = m_e = e = 4 pi eps0 = 1); energies in hartree.
The Metropolis proposal displaces every coordinate by ``delta * U(-1, 1)``,
so the proposal is symmetric and acceptance is ``min(1, |psi_new/psi_old|^2)``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Protocol

import numpy as np

from . import _accel
from .errors import NonFiniteLocalEnergy, SchemaError, TuningFailure, ZeroRadius

log = logging.getLogger(__name__)

HARTREE_IN_EV = 27.211
NEAR_NUCLEUS = 1e-12
MAX_NEAR_HITS = 100


class TrialWavefunction(Protocol):
    n_electrons: int

    def log_psi(self, x: np.ndarray) -> float: ...

    def local_energy(self, x: np.ndarray) -> float: ...


def hydrogen_local_energy(alpha: float, r: float) -> float:
    """Local energy of ``exp(-alpha r)`` for the hydrogen Hamiltonian."""
    if not r > 0:
        raise ZeroRadius(f"radial distance must be positive, got {r}")
    return -0.5 * alpha * alpha + (alpha - 1.0) / r


def hydrogen_energy(alpha: float) -> float:
    """Exact variational energy ``alpha^2/2 - alpha`` of the trial ``exp(-alpha r)``."""
    return 0.5 * alpha * alpha - alpha


@dataclass(frozen=True)
class HydrogenTrial:
    alpha: float = 1.0
    n_electrons: int = 1
    nuclei: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)), compare=False, repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise SchemaError("alpha must be positive")

    def log_psi(self, x) -> float:
        return -self.alpha * math.sqrt(float(np.dot(x, x)))

    def local_energy(self, x) -> float:
        return hydrogen_local_energy(self.alpha, math.sqrt(float(np.dot(x, x))))


@dataclass(frozen=True)
class VMCConfig:
    delta: float = 1.0
    samples: int = 10000
    burn_in: int = 1000
    thinning: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.delta > 0:
            raise SchemaError("step length must be positive")
        if self.samples < 1 or self.thinning < 1 or self.burn_in < 0:
            raise SchemaError("need samples >= 1, thinning >= 1, burn_in >= 0")

    @property
    def steps(self) -> int:
        return self.burn_in + self.samples * self.thinning


@dataclass(frozen=True)
class VMCResult:
    energy: float
    stderr: float
    acceptance: float
    samples: int
    near_hits: int = 0
    local_energies: np.ndarray = field(default=None, compare=False, repr=False)
    radii: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @property
    def energy_ev(self) -> float:
        return self.energy * HARTREE_IN_EV

    def to_dict(self) -> dict:
        return {"E_v": self.energy, "stderr": self.stderr, "acceptance": self.acceptance, "M": self.samples}


def metropolis_step(state, trial: TrialWavefunction, delta: float, rng: np.random.Generator):
    """One Metropolis move; returns ``(new state, accepted)``."""
    state = np.asarray(state, dtype=float)
    xi = rng.uniform(-1.0, 1.0, state.shape)
    u = 1.0 - rng.random()
    return _propose(state, trial, delta, xi, u)


def _near_nucleus(trial, y) -> bool:
    nuclei = getattr(trial, "nuclei", None)
    if nuclei is None:
        return False
    e = y.reshape(-1, 3)
    d = np.sqrt(np.sum((e[:, None, :] - np.asarray(nuclei)[None, :, :]) ** 2, axis=-1))
    return bool(np.any(d < NEAR_NUCLEUS))


def _propose(x, trial, delta, xi, u):
    y = x + delta * xi
    if _near_nucleus(trial, y):
        return x, False
    if math.log(u) <= 2.0 * (trial.log_psi(y) - trial.log_psi(x)):
        return y, True
    return x, False


def blocking_error(samples) -> float:
    """Standard error of the mean by repeated pairwise block averaging.

    Takes the first level whose error changes by less than its own
    uncertainty at the next level (the plateau), considering levels with at
    least 16 blocks; falls back to the largest such estimate.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < 2 or np.all(x == x[0]):
        return 0.0
    ses, errs = [], []
    while x.size >= 16:
        nb = x.size
        se = math.sqrt(float(np.var(x, ddof=1)) / nb)
        ses.append(se)
        errs.append(se / math.sqrt(2.0 * (nb - 1)))
        x = 0.5 * (x[: nb - nb % 2 : 2] + x[1: nb - nb % 2 : 2])
    if not ses:
        return math.sqrt(float(np.var(np.asarray(samples, dtype=float), ddof=1)) / np.size(samples))
    for b in range(len(ses) - 1):
        if abs(ses[b + 1] - ses[b]) < errs[b]:
            return ses[b]
    return max(ses)


def _draws(config: VMCConfig, dim: int):
    rng = np.random.default_rng(config.seed)
    T = config.steps
    xi = rng.uniform(-1.0, 1.0, (T, dim))
    u = 1.0 - rng.random(T)  # in (0, 1], log is finite
    return xi, u


def _initial_state(trial) -> np.ndarray:
    if isinstance(trial, HydrogenTrial):
        return np.array([1.0 / trial.alpha, 0.0, 0.0])
    x = np.zeros(3 * trial.n_electrons)
    x[0::3] = 1.0 + np.arange(trial.n_electrons)
    return x


def run_vmc(trial: TrialWavefunction, config: VMCConfig, generic: bool = False) -> VMCResult:
    """Average the local energy over post-burn-in, thinned Metropolis samples.

    Proposals within ``1e-12`` of a nucleus are rejected and counted; more
    than ``MAX_NEAR_HITS`` such events raise :class:`NonFiniteLocalEnergy`.
    Hydrogen trials use the compiled chain unless ``generic`` is set.
    """
    x0 = _initial_state(trial)
    xi, u = _draws(config, x0.size)
    if isinstance(trial, HydrogenTrial) and not generic:
        E, radii, accepted, near_hits = _accel.hydrogen_chain(
            x0, trial.alpha, config.delta, xi, u, config.burn_in, config.thinning, NEAR_NUCLEUS)
    else:
        E = np.empty(config.samples)
        radii = np.empty(config.samples) if trial.n_electrons == 1 else None
        x = x0
        accepted = near_hits = k = 0
        for t in range(config.steps):
            y = x + config.delta * xi[t]
            if _near_nucleus(trial, y):
                near_hits += 1
            elif math.log(u[t]) <= 2.0 * (trial.log_psi(y) - trial.log_psi(x)):
                x = y
                accepted += 1
            if t >= config.burn_in and (t - config.burn_in) % config.thinning == config.thinning - 1:
                E[k] = trial.local_energy(x)
                if radii is not None:
                    radii[k] = math.sqrt(float(x @ x))
                k += 1
    if near_hits > MAX_NEAR_HITS:
        raise NonFiniteLocalEnergy(f"{near_hits} proposals landed on a nucleus")
    if not np.all(np.isfinite(E)):
        raise NonFiniteLocalEnergy("non-finite local energy sampled")
    return VMCResult(
        energy=float(np.mean(E)),
        stderr=blocking_error(E),
        acceptance=accepted / config.steps,
        samples=int(E.size),
        near_hits=int(near_hits),
        local_energies=E,
        radii=radii,
    )


def tune_step(trial: TrialWavefunction, target: float = 0.5, tolerance: float = 0.02, seed: int = 0,
              pilot_steps: int = 5000, max_iter: int = 60, bounds=(1e-6, 1e3)) -> float:
    """Bisection on ``log delta`` until the pilot acceptance is within ``tolerance`` of ``target``."""
    if not 0.0 < target < 1.0:
        raise SchemaError("target acceptance must lie in (0, 1)")

    def acceptance(delta):
        cfg = VMCConfig(delta=float(delta), samples=pilot_steps, burn_in=0, seed=seed)
        return run_vmc(trial, cfg).acceptance

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        acc = acceptance(math.exp(mid))
        if abs(acc - target) <= tolerance:
            return math.exp(mid)
        if acc > target:
            lo = mid
        else:
            hi = mid
    raise TuningFailure(f"no step length reached acceptance {target} +- {tolerance}")


# -- particle in a box -----------------------------------------------------------


class EnergyLevel(NamedTuple):
    energy: float
    degeneracy: int
    triples: tuple


def box_energy_levels(L: float, m: float, max_n: int, h: float = 1.0, complete_only: bool = True) -> list:
    """Levels ``h^2/(2 m L^2) (nx^2 + ny^2 + nz^2)`` with ``n_i in {0, +-1, ..., +-max_n}``.

    The all-zero triple is excluded. With ``complete_only`` only shells with
    ``nx^2 + ny^2 + nz^2 <= max_n^2`` are returned; higher shells would miss
    triples with a component beyond ``max_n``.
    """
    if max_n < 1:
        raise SchemaError("max_n must be at least 1")
    if not (L > 0 and m > 0):
        raise SchemaError("box side and mass must be positive")
    unit = h * h / (2.0 * m * L * L)
    shells: dict = {}
    rng = range(-max_n, max_n + 1)
    for t in itertools.product(rng, rng, rng):
        s = t[0] * t[0] + t[1] * t[1] + t[2] * t[2]
        if s == 0 or (complete_only and s > max_n * max_n):
            continue
        shells.setdefault(s, []).append(t)
    return [EnergyLevel(unit * s, len(ts), tuple(ts)) for s, ts in sorted(shells.items())]
