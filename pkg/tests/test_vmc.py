import math
from dataclasses import dataclass

import numpy as np
import pytest
from scipy import integrate, stats

from fpemu import vmc
from fpemu.errors import NonFiniteLocalEnergy, SchemaError, TuningFailure, ZeroRadius


def radial_energy_oracle(alpha):
    """<E_L> under |psi|^2 by direct radial quadrature."""
    w = lambda r: r * r * math.exp(-2 * alpha * r)
    num = integrate.quad(lambda r: vmc.hydrogen_local_energy(alpha, r) * w(r), 0, np.inf, limit=200)[0]
    den = integrate.quad(w, 0, np.inf)[0]
    return num / den


def radial_distribution(alpha):
    # |psi|^2 r^2 ~ r^2 exp(-2 alpha r) is a gamma law with shape 3
    return stats.gamma(3, scale=1.0 / (2 * alpha))


@dataclass(frozen=True)
class FlatTrial:
    n_electrons: int = 1

    def log_psi(self, x):
        return 0.0

    def local_energy(self, x):
        return 1.0


def test_local_energy_examples():
    for r in (0.1, 1.0, 7.3):
        assert vmc.hydrogen_local_energy(1.0, r) == -0.5
    assert vmc.hydrogen_local_energy(2.0, 1.0) == -1.0
    assert vmc.hydrogen_local_energy(0.7, 1e12) == pytest.approx(-0.245, abs=1e-12)
    with pytest.raises(ZeroRadius):
        vmc.hydrogen_local_energy(1.0, 0.0)


@pytest.mark.parametrize("alpha", [0.6, 0.8, 1.0, 1.2, 1.5])
def test_analytic_energy_vs_quadrature(alpha):
    assert vmc.hydrogen_energy(alpha) == pytest.approx(radial_energy_oracle(alpha), abs=1e-10)


def test_unit_conversion():
    ev = -0.5 * vmc.HARTREE_IN_EV
    assert ev == pytest.approx(-13.6055, abs=1e-10)
    assert abs(ev - (-13.598)) / 13.598 < 6e-4


def test_config_validation():
    with pytest.raises(SchemaError):
        vmc.VMCConfig(delta=0.0)
    with pytest.raises(SchemaError):
        vmc.VMCConfig(samples=0)
    with pytest.raises(SchemaError):
        vmc.HydrogenTrial(alpha=-1.0)
    assert vmc.VMCConfig(samples=10, burn_in=5, thinning=3).steps == 35


def test_metropolis_uphill_always_accepted():
    trial = vmc.HydrogenTrial(1.0)
    rng = np.random.default_rng(0)
    for _ in range(200):
        # flat trial: every ratio is 1
        x = np.array([50.0, 0.0, 0.0])
        y, acc = vmc.metropolis_step(x, FlatTrial(), 0.5, rng)
        assert acc and np.all(np.abs(y - x) <= 0.5)
    # a proposal that does not lower |psi| is accepted whatever u is
    x = np.array([3.0, 0.0, 0.0])
    y, acc = vmc._propose(x, trial, 1.0, np.array([-1.0, 0.0, 0.0]), 1.0)
    assert acc and np.array_equal(y, [2.0, 0.0, 0.0])
    y, acc = vmc._propose(x, trial, 1.0, np.array([1.0, 0.0, 0.0]), 1.0)
    assert not acc and np.array_equal(y, x)


def test_tiny_step_accepts_almost_everything():
    r = vmc.run_vmc(vmc.HydrogenTrial(0.8), vmc.VMCConfig(delta=1e-6, samples=5000, burn_in=0))
    assert r.acceptance > 0.999


def test_exact_ground_state_zero_variance():
    r = vmc.run_vmc(vmc.HydrogenTrial(1.0), vmc.VMCConfig(delta=1.0, samples=20000))
    assert r.energy == -0.5 and r.stderr == 0.0
    assert np.all(r.local_energies == -0.5)


def test_alpha_08_energy():
    trial = vmc.HydrogenTrial(0.8)
    delta = vmc.tune_step(trial, seed=1)
    r = vmc.run_vmc(trial, vmc.VMCConfig(delta=delta, samples=100_000, seed=1))
    assert r.samples == 100_000
    assert abs(r.energy - (-0.48)) <= 3 * r.stderr
    assert 0.0 <= r.acceptance <= 1.0 and r.stderr > 0


@pytest.mark.parametrize("alpha", [0.6, 0.8, 1.0, 1.2, 1.5])
def test_variational_bound_and_energy_curve(alpha):
    trial = vmc.HydrogenTrial(alpha)
    r = vmc.run_vmc(trial, vmc.VMCConfig(delta=1.5 / alpha, samples=100_000, seed=7))
    assert r.energy + 3 * r.stderr >= -0.5
    assert abs(r.energy - vmc.hydrogen_energy(alpha)) <= 3 * r.stderr + 1e-15


def test_radial_histogram_chi_square():
    alpha = 1.0
    r = vmc.run_vmc(vmc.HydrogenTrial(alpha), vmc.VMCConfig(delta=1.5, samples=20_000, thinning=20, seed=3))
    dist = radial_distribution(alpha)
    edges = dist.ppf(np.linspace(0, 1, 21))
    counts, _ = np.histogram(r.radii, bins=edges)
    expected = r.samples / 20
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < stats.chi2(19).ppf(0.999)


def test_ks_statistic_decreases_with_samples():
    alpha = 0.9
    dist = radial_distribution(alpha)
    ks = []
    for M in (1_000, 10_000, 100_000):
        r = vmc.run_vmc(vmc.HydrogenTrial(alpha), vmc.VMCConfig(delta=1.6, samples=M, seed=11))
        ks.append(stats.kstest(r.radii, dist.cdf).statistic)
    assert ks[0] > ks[1] > ks[2]


def test_bitwise_reproducible():
    cfg = vmc.VMCConfig(delta=1.2, samples=5000, seed=42)
    a = vmc.run_vmc(vmc.HydrogenTrial(0.9), cfg)
    b = vmc.run_vmc(vmc.HydrogenTrial(0.9), cfg)
    assert a == b
    np.testing.assert_array_equal(a.local_energies, b.local_energies)
    c = vmc.run_vmc(vmc.HydrogenTrial(0.9), vmc.VMCConfig(delta=1.2, samples=5000, seed=43))
    assert c.energy != a.energy


def test_generic_path_matches_compiled():
    cfg = vmc.VMCConfig(delta=1.1, samples=3000, burn_in=100, thinning=2, seed=5)
    a = vmc.run_vmc(vmc.HydrogenTrial(0.85), cfg)
    b = vmc.run_vmc(vmc.HydrogenTrial(0.85), cfg, generic=True)
    np.testing.assert_allclose(a.local_energies, b.local_energies, rtol=0, atol=1e-12)
    assert a.acceptance == b.acceptance


def test_near_nucleus_rejected_then_error(monkeypatch):
    monkeypatch.setattr(vmc, "NEAR_NUCLEUS", 0.2)
    r = vmc.run_vmc(vmc.HydrogenTrial(1.0), vmc.VMCConfig(delta=0.5, samples=2000, burn_in=0, seed=2))
    assert 0 < r.near_hits <= vmc.MAX_NEAR_HITS
    assert np.all(r.radii >= 0.2)
    monkeypatch.setattr(vmc, "NEAR_NUCLEUS", 0.8)
    with pytest.raises(NonFiniteLocalEnergy):
        vmc.run_vmc(vmc.HydrogenTrial(1.0), vmc.VMCConfig(delta=0.5, samples=5000, seed=2))


def test_tune_step():
    trial = vmc.HydrogenTrial(1.0)
    d = vmc.tune_step(trial, target=0.5, seed=0)
    assert d == vmc.tune_step(trial, target=0.5, seed=0)
    fresh = vmc.run_vmc(trial, vmc.VMCConfig(delta=d, samples=20_000, seed=99))
    assert 0.45 <= fresh.acceptance <= 0.55
    assert vmc.tune_step(trial, target=0.99, seed=0) < d / 10
    with pytest.raises(TuningFailure):
        vmc.tune_step(trial, target=0.5, tolerance=1e-9, max_iter=3)
    with pytest.raises(SchemaError):
        vmc.tune_step(trial, target=1.0)


def test_blocking_error():
    rng = np.random.default_rng(0)
    assert vmc.blocking_error(np.full(100, 2.0)) == 0.0
    x = rng.standard_normal(2**16)
    assert vmc.blocking_error(x) == pytest.approx(1 / 256, rel=0.1)
    rho = 0.9
    y = np.empty(2**17)
    y[0] = rng.standard_normal()
    e = rng.standard_normal(y.size) * math.sqrt(1 - rho * rho)
    for t in range(1, y.size):
        y[t] = rho * y[t - 1] + e[t]
    true_se = math.sqrt((1 + rho) / (1 - rho) / y.size)
    assert vmc.blocking_error(y) == pytest.approx(true_se, rel=0.25)


def r3_theta_series(smax):
    """Representation counts of s as a sum of three squares: coefficients of theta(q)^3."""
    theta = np.zeros(smax + 1, dtype=np.int64)
    n = 0
    while n * n <= smax:
        theta[n * n] += 1 if n == 0 else 2
        n += 1
    t2 = np.convolve(theta, theta)[: smax + 1]
    return np.convolve(t2, theta)[: smax + 1]


def test_box_levels_against_theta_series():
    levels = vmc.box_energy_levels(1.0, 0.5, 4)  # unit energy h^2/(2 m L^2) = 1
    r3 = r3_theta_series(16)
    expected = [(s, int(r3[s])) for s in range(1, 17) if r3[s] > 0]
    assert [(round(l.energy), l.degeneracy) for l in levels] == expected
    for l in levels:
        assert len(l.triples) == l.degeneracy == len(set(l.triples))
        assert all(a * a + b * b + c * c == round(l.energy) for a, b, c in l.triples)


def test_box_examples_and_scaling():
    levels = vmc.box_energy_levels(2.0, 1.0, 3)
    assert levels[0].degeneracy == 6 and levels[1].degeneracy == 12 and levels[2].degeneracy == 8
    assert levels[0].energy == pytest.approx(1 / 8)
    assert all(l.energy > 0 for l in levels)
    half = vmc.box_energy_levels(1.0, 1.0, 3)
    np.testing.assert_allclose([l.energy for l in half], [4 * l.energy for l in levels])
    # enumeration restricted to complete shells matches a brute-force count for s <= 12
    brute = {}
    for a in range(-4, 5):
        for b in range(-4, 5):
            for c in range(-4, 5):
                s = a * a + b * b + c * c
                if 0 < s <= 12:
                    brute[s] = brute.get(s, 0) + 1
    got = {round(l.energy / levels[0].energy): l.degeneracy for l in vmc.box_energy_levels(2.0, 1.0, 4)}
    assert {s: got[s] for s in brute} == brute
    with pytest.raises(SchemaError):
        vmc.box_energy_levels(1.0, 1.0, 0)


def test_result_dict():
    r = vmc.run_vmc(vmc.HydrogenTrial(1.0), vmc.VMCConfig(samples=100))
    assert set(r.to_dict()) == {"E_v", "stderr", "acceptance", "M"}
    assert r.energy_ev == pytest.approx(-13.6055)
