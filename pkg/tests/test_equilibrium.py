import json
import math

import numpy as np
import pytest
import scipy.constants as sc
from hypothesis import given
from hypothesis import strategies as st

from heliotrap.equilibrium import (ElectronConfiguration, chemical_potential,
                                   energy_and_gradient, load_trap, minimize, total_energy)
from heliotrap.errors import DomainError, InputError, SingularityError, UnconfinedError
from heliotrap.harness.presets import LOAD_OPEN_BIAS, UNLOAD_BIAS
from heliotrap.potential import BiasConfig, HarmonicBowl

TAU = 2 * math.pi


def _pair_separation(omega_e):
    """d = (e^2 / (2 pi eps0 m_e omega_e^2))^(1/3), in um."""
    return (sc.e**2 / (2 * math.pi * sc.epsilon_0 * sc.m_e * omega_e**2)) ** (1 / 3) * 1e6


# -- energy -------------------------------------------------------------------------

def test_empty_configuration_energy(bowl):
    assert total_energy(np.zeros((0, 2)), bowl.field, bowl.bias(TAU * 20e9)) == 0.0


def test_single_electron_at_bowl_centre(bowl):
    bias = bowl.bias(TAU * 20e9)
    u, g = energy_and_gradient([[0.0, 0.0]], bowl.field, bias)
    # phi(0) = V_b * depth; the resonator arms sit at 0 V.
    assert u == pytest.approx(-sc.e * bias["bottom"] * bowl.depth, rel=1e-12)
    assert np.max(np.abs(g)) <= 1e-12 * sc.e


def test_pair_coulomb_energy_in_zero_potential(bowl):
    u = total_energy([[-0.5, 0.0], [0.5, 0.0]], bowl.field, BiasConfig.standard())
    oracle = sc.e**2 / (4 * math.pi * sc.epsilon_0 * 1e-6)
    assert u == pytest.approx(oracle, rel=1e-12)
    assert u == pytest.approx(2.307e-22, rel=1e-3)


def test_coincident_electrons_rejected(bowl):
    with pytest.raises(SingularityError):
        total_energy([[0.0, 0.0], [0.0005, 0.0]], bowl.field, bowl.bias(TAU * 20e9))


def test_positions_outside_domain_rejected(bowl):
    with pytest.raises(DomainError):
        total_energy([[0.99, 0.0]], bowl.field, bowl.bias(TAU * 20e9))


def test_gradient_matches_finite_differences_at_random_configurations(standin):
    rng = np.random.default_rng(11)
    bias = BiasConfig.standard(0.3, -0.2, 0.1, -0.4, sg_asymmetry=0.02)
    h = 1e-5
    for _ in range(100):
        n = int(rng.integers(1, 7))
        pos = rng.uniform(-0.6, 0.6, (n, 2))
        if n > 1:
            d = np.sqrt(((pos[:, None] - pos[None]) ** 2).sum(-1)) + np.eye(n)
            if d.min() < 0.05:
                continue
        _, g = energy_and_gradient(pos, standin, bias)
        fd = np.zeros_like(pos)
        for i in range(n):
            for k in range(2):
                step = np.zeros_like(pos)
                step[i, k] = h
                fd[i, k] = (total_energy(pos + step, standin, bias)
                            - total_energy(pos - step, standin, bias)) / (2 * h)
        assert np.linalg.norm(g - fd) <= 1e-6 * np.linalg.norm(g)


@given(st.permutations(range(5)))
def test_energy_is_permutation_invariant(perm):
    bowl = HarmonicBowl()
    pos = np.array([[0.1, 0.0], [-0.2, 0.15], [0.0, -0.3], [0.25, 0.2], [-0.1, -0.1]])
    bias = bowl.bias(TAU * 20e9)
    u1, g1 = energy_and_gradient(pos, bowl.field, bias)
    u2, g2 = energy_and_gradient(pos[list(perm)], bowl.field, bias)
    assert u2 == pytest.approx(u1, rel=1e-14)
    assert np.allclose(g2, g1[list(perm)], rtol=1e-12, atol=0)


# -- minimisation ---------------------------------------------------------------------

def test_single_electron_sits_at_centre(bowl):
    cfg = minimize(bowl.field, bowl.bias(TAU * 20e9), 1, seed=3)
    assert cfg.converged
    assert np.linalg.norm(cfg.positions[0]) <= 1e-6


def test_zero_electrons(bowl):
    cfg = minimize(bowl.field, bowl.bias(TAU * 20e9), 0)
    assert cfg.n == 0 and cfg.energy == 0.0


def test_negative_count_rejected(bowl):
    with pytest.raises(InputError):
        minimize(bowl.field, bowl.bias(TAU * 20e9), -1)


@pytest.mark.parametrize("f_e", [5e9, 10e9, 20e9, 35e9, 50e9])
def test_pair_separation_matches_force_balance(bowl, f_e):
    cfg = minimize(bowl.field, bowl.bias(TAU * f_e), 2, seed=0)
    d = np.linalg.norm(cfg.positions[0] - cfg.positions[1])
    assert cfg.converged
    assert d == pytest.approx(_pair_separation(TAU * f_e), rel=1e-6)


def test_pair_separation_at_20_ghz_value():
    assert _pair_separation(TAU * 20e9) == pytest.approx(0.318, abs=0.0005)


def test_three_electrons_form_equilateral_triangle(bowl):
    omega = TAU * 20e9
    cfg = minimize(bowl.field, bowl.bias(omega), 3, seed=1)
    p = cfg.positions
    d = np.array([np.linalg.norm(p[i] - p[j]) for i, j in ((0, 1), (1, 2), (0, 2))])
    assert np.max(np.abs(d - d.mean())) <= 1e-6 * d.mean()
    # Coarse brute-force oracle: scan the radius of an equilateral triangle,
    # U(r) = (3/2) m omega^2 r^2 + 3 e^2 / (4 pi eps0 sqrt(3) r).
    r = np.linspace(0.05, 0.6, 2201) * 1e-6
    u = 1.5 * sc.m_e * omega**2 * r**2 + 3 * sc.e**2 / (4 * math.pi * sc.epsilon_0 * math.sqrt(3) * r)
    r_best = r[np.argmin(u)] * 1e6
    assert np.linalg.norm(p - p.mean(axis=0), axis=1).mean() == pytest.approx(r_best, abs=5e-4)


def test_minimizer_energy_is_monotone(standin):
    energies = []
    # One start, so the callback sees a single descent.
    minimize(standin, UNLOAD_BIAS, 5, seed=2, restarts=1, callback=energies.append)
    assert len(energies) > 3
    steps = np.diff(energies)
    slack = 4 * np.spacing(np.abs(np.array(energies[1:])))
    assert np.all(steps <= slack)


def test_minimize_is_deterministic(standin):
    a = minimize(standin, UNLOAD_BIAS, 4, seed=5, restarts=3)
    b = minimize(standin, UNLOAD_BIAS, 4, seed=5, restarts=3)
    assert np.array_equal(a.positions, b.positions) and a.energy == b.energy


def test_equilibrium_positions_permutation_invariant(bowl):
    bias = bowl.bias(TAU * 15e9)
    cfg = minimize(bowl.field, bias, 4, seed=0)
    start = np.array(cfg.positions)[::-1] + 1e-3
    cfg2 = minimize(bowl.field, bias, 4, seed=0, restarts=0, initial=start)
    key = lambda p: np.array(sorted(map(tuple, np.round(p, 6))))
    assert cfg2.energy == pytest.approx(cfg.energy, rel=1e-12)
    assert np.allclose(key(cfg2.positions), key(cfg.positions), atol=1e-5)


def test_unconfined_raises(bowl):
    hill = BiasConfig.standard(v_b=-0.5)
    with pytest.raises(UnconfinedError):
        minimize(bowl.field, hill, 2, seed=0, restarts=2)


def test_configuration_json_round_trip(bowl):
    cfg = minimize(bowl.field, bowl.bias(TAU * 20e9), 2, seed=0)
    d = json.loads(cfg.to_json())
    assert set(d) == {"n", "positions_um", "energy_J", "converged", "gradient_norm"}
    back = ElectronConfiguration.from_json(cfg.to_json())
    assert np.array_equal(back.positions, cfg.positions) and back.energy == cfg.energy


def test_configuration_rejects_coincident_positions():
    with pytest.raises(InputError):
        ElectronConfiguration([[0.0, 0.0], [0.0, 0.00005]], 0.0, False, 1.0)


# -- occupancy ------------------------------------------------------------------------

def test_chemical_potential_is_energy_difference(bowl):
    bias = bowl.bias(TAU * 20e9)
    c1 = minimize(bowl.field, bias, 1)
    c2 = minimize(bowl.field, bias, 2)
    assert chemical_potential(c2, c1) == c2.energy - c1.energy


def test_no_favourable_site_gives_empty_trap(standin):
    repelling = BiasConfig.standard(v_b=-0.5, v_sg=-0.5, v_r=-0.5, v_un=-0.5)
    n, cfg = load_trap(standin, repelling)
    assert n == 0 and cfg.n == 0


def test_load_trap_returns_largest_favourable_n(bowl):
    # Reservoir level just below mu(3): exactly two electrons are favourable.
    bias = bowl.bias(TAU * 20e9)
    u = [minimize(bowl.field, bias, n).energy for n in range(4)]
    mu3 = u[3] - u[2]
    level = -(mu3 - 1e-25) / sc.e
    n, cfg = load_trap(bowl.field, bias, reservoir_potential=level)
    assert n == 2 and cfg.n == 2


def test_load_trap_warns_at_cap(bowl):
    with pytest.warns(RuntimeWarning):
        n, _ = load_trap(bowl.field, bowl.bias(TAU * 20e9), n_max=2)
    assert n == 2


def test_occupancy_does_not_grow_as_unload_gate_goes_negative(standin):
    base = BiasConfig.standard(v_b=0.3, v_sg=-0.05, v_r=-0.6, v_un=-0.4, sg_asymmetry=0.02)
    counts = [load_trap(standin, base.replace(unload=v), restarts=2)[0]
              for v in np.linspace(-0.4, -5.0, 6)]
    assert counts[0] > 0
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_loading_bias_holds_order_thirty_electrons(standin):
    n, cfg = load_trap(standin, LOAD_OPEN_BIAS, n_max=300, restarts=2)
    print(f"loading-bias occupancy N = {n}")
    assert cfg.converged
    assert 3 <= n <= 300
