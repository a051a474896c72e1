import math

import numpy as np
import pytest
import scipy.constants as sc
from hypothesis import given
from hypothesis import strategies as st

from heliotrap.constants import PhysicalConstants
from heliotrap.equilibrium import ElectronConfiguration, energy_and_gradient, minimize
from heliotrap.errors import InputError
from heliotrap.harness.presets import READOUT_BIAS
from heliotrap.modes import (DEFAULT_GAMMA, ModeSpectrum, ResonatorMode, couplings,
                             eigenmodes, hessian_matrix)
from heliotrap.potential import BiasConfig, HarmonicBowl

TAU = 2 * math.pi
C_TOTAL = 0.24e-12
GAMMA_SCALE = 0.85
KE2 = sc.e**2 / (4 * math.pi * sc.epsilon_0)


def _g_single(e_per_um, c=C_TOTAL, gamma=GAMMA_SCALE):
    """g_e = sqrt(2) e E / (2 sqrt(m_e gamma C)), rad/s."""
    return math.sqrt(2) * sc.e * e_per_um * 1e6 / (2 * math.sqrt(sc.m_e * gamma * c))


def _spectrum(cfg, field, bias, mode=ResonatorMode()):
    return couplings(eigenmodes(cfg, field, bias), cfg, field, mode, C_TOTAL, GAMMA_SCALE)


# -- dynamical matrix ------------------------------------------------------------------

def test_single_electron_in_bowl_is_pure_curvature(bowl):
    omega = TAU * 20e9
    cfg = minimize(bowl.field, bowl.bias(omega), 1)
    m = hessian_matrix(cfg, bowl.field, bowl.bias(omega)).entries
    assert m[0, 0] == pytest.approx(omega**2, rel=1e-9)
    assert m[1, 1] == pytest.approx(omega**2, rel=1e-9)
    assert abs(m[0, 1]) <= 1e-9 * omega**2


def test_single_electron_modes_at_trap_frequency(bowl):
    omega = TAU * 20e9
    cfg = minimize(bowl.field, bowl.bias(omega), 1)
    spec = eigenmodes(cfg, bowl.field, bowl.bias(omega))
    assert spec.omegas / TAU == pytest.approx([20e9, 20e9], rel=1e-9)
    assert spec.stable
    assert np.all(spec.gammas == DEFAULT_GAMMA)


def test_self_consistent_pair_eigenvalues(bowl):
    omega = TAU * 20e9
    bias = bowl.bias(omega)
    cfg = minimize(bowl.field, bias, 2)
    lam = eigenmodes(cfg, bowl.field, bias).omega_sq
    # Rigid rotation, two in-phase translations, and the stretch mode at 3 omega^2.
    assert abs(lam[0]) <= 1e-6 * omega**2
    assert lam[1:] == pytest.approx([omega**2, omega**2, 3 * omega**2], rel=1e-6)


def test_pinned_pair_stretch_mode():
    bowl = HarmonicBowl(aspect=0.5)
    omega = TAU * 20e9
    bias = bowl.bias(omega)
    d = 1e-6
    omega_c = math.sqrt(2 * KE2 / (sc.m_e * d**3))
    assert omega_c / TAU == pytest.approx(3.58e9, rel=2e-3)
    # Pair along y, where the bowl frequency is omega.
    cfg = ElectronConfiguration.pinned_at([[0.0, -0.5], [0.0, 0.5]], bowl.field, bias)
    spec = eigenmodes(cfg, bowl.field, bias)
    stretch = math.sqrt(omega**2 + 2 * omega_c**2)
    assert stretch / TAU == pytest.approx(20.63e9, rel=5e-4)
    assert spec.omegas[-1] == pytest.approx(stretch, rel=1e-9)
    v = spec.eigenvectors[:, -1]
    assert np.abs(v) == pytest.approx([0, 1 / math.sqrt(2), 0, 1 / math.sqrt(2)], abs=1e-9)


def test_in_phase_longitudinal_eigenvector():
    bowl = HarmonicBowl(aspect=0.5)
    bias = bowl.bias(TAU * 20e9)
    cfg = ElectronConfiguration.pinned_at([[0.0, -0.5], [0.0, 0.5]], bowl.field, bias)
    spec = eigenmodes(cfg, bowl.field, bias)
    s = 1 / math.sqrt(2)
    y_like = [k for k in range(4) if np.hypot(*spec.eigenvectors[[1, 3], k]) > 0.99]
    in_phase = min(y_like, key=lambda k: spec.omega_sq[k])
    assert spec.eigenvectors[:, in_phase] == pytest.approx([0, s, 0, s], abs=1e-9)


def test_matrix_matches_finite_differences(standin):
    cfg = minimize(standin, READOUT_BIAS, 4, seed=0)
    m = hessian_matrix(cfg, standin, READOUT_BIAS).entries
    h = 1e-5
    x = np.array(cfg.positions)
    fd = np.zeros_like(m)
    for k in range(x.size):
        step = np.zeros(x.size)
        step[k] = h
        gp = energy_and_gradient((x.ravel() + step).reshape(-1, 2), standin, READOUT_BIAS)[1]
        gm = energy_and_gradient((x.ravel() - step).reshape(-1, 2), standin, READOUT_BIAS)[1]
        fd[:, k] = (gp - gm).ravel() / (2 * h)
    fd = fd / 1e-12 / sc.m_e  # J/um^2 -> s^-2
    assert np.max(np.abs(m - fd)) <= 1e-6 * np.max(np.abs(m))


def test_flat_ground_reduces_to_coulomb_curvature(bowl):
    flat = BiasConfig.standard()
    pos = np.array([[0.0, 0.0], [0.3, 0.4]])
    cfg = ElectronConfiguration.pinned_at(pos, bowl.field, flat)
    m = hessian_matrix(cfg, bowl.field, flat).entries
    r = pos[0] - pos[1]
    d = np.linalg.norm(r)
    t = KE2 * (3 * np.outer(r, r) - d**2 * np.eye(2)) / (d**5 * 1e-6**3) / sc.m_e
    oracle = np.block([[t, -t], [-t, t]])
    assert np.max(np.abs(m - oracle)) <= 1e-9 * np.max(np.abs(oracle))
    lam = eigenmodes(cfg, bowl.field, flat).omega_sq
    # Two rigid translations; the transverse relative mode is unstable on flat ground.
    assert np.sort(np.abs(lam))[:2] == pytest.approx([0, 0], abs=1e-9 * lam[-1])
    assert lam[0] < 0


def test_unconverged_configuration_rejected(bowl):
    cfg = ElectronConfiguration([[0.1, 0.0]], 0.0, False, 1.0)
    with pytest.raises(InputError):
        hessian_matrix(cfg, bowl.field, bowl.bias(TAU * 20e9))


def test_empty_configuration_gives_empty_spectrum(bowl):
    spec = eigenmodes(ElectronConfiguration.empty(), bowl.field, bowl.bias(TAU * 20e9))
    assert spec.n_modes == 0


def test_hill_is_flagged_unstable(bowl):
    hill = BiasConfig.standard(v_b=-0.1)
    cfg = ElectronConfiguration.pinned_at([[0.0, 0.0]], bowl.field, hill)
    spec = eigenmodes(cfg, bowl.field, hill)
    assert not spec.stable
    assert np.all(spec.omegas == 0.0)


def test_eigenvectors_are_orthonormal(standin):
    cfg = minimize(standin, READOUT_BIAS, 6, seed=0)
    v = eigenmodes(cfg, standin, READOUT_BIAS).eigenvectors
    assert np.max(np.abs(v.T @ v - np.eye(12))) <= 1e-10


# -- couplings -----------------------------------------------------------------------

def test_single_electron_coupling_value():
    g = _g_single(0.23)
    assert g / TAU == pytest.approx(9.8e6, rel=0.05)
    bowl = HarmonicBowl(aspect=0.5)
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 1)
    spec = _spectrum(cfg, bowl.field, bias)
    # Modes ascend: x (softer, aspect 0.5) then y.
    assert spec.couplings[0] == pytest.approx(0.0, abs=1e-9 * g)
    assert abs(spec.couplings[1]) == pytest.approx(g, rel=1e-9)


def test_common_mode_does_not_couple_at_symmetric_trap(bowl):
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 1)
    spec = _spectrum(cfg, bowl.field, bias, ResonatorMode("common"))
    assert np.max(np.abs(spec.couplings)) <= 1e-12 * _g_single(0.23)


def test_pair_in_uniform_field_couples_only_in_phase():
    # aspect 0.6 keeps the in-phase x mode (0.6 w^2) clear of the transverse
    # out-of-phase mode (0.4 w^2).
    bowl = HarmonicBowl(aspect=0.6)
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 2)
    mode = ResonatorMode.uniform_field(e_y=0.0, e_x=0.23)
    spec = _spectrum(cfg, bowl.field, bias, mode)
    g = np.abs(spec.couplings)
    g_e = _g_single(0.23)
    k_max = int(np.argmax(g))
    assert g[k_max] == pytest.approx(math.sqrt(2) * g_e, rel=1e-9)
    others = np.delete(g, k_max)
    assert np.all(others <= 1e-6 * g_e)
    # The coupled mode is the in-phase motion along the pair axis.
    v = spec.eigenvectors[:, k_max]
    assert np.abs(v) == pytest.approx([1 / math.sqrt(2), 0, 1 / math.sqrt(2), 0], abs=1e-6)


@pytest.mark.parametrize("n", [1, 3, 7])
def test_coupling_sum_rule_without_interactions(bowl, n):
    weak = PhysicalConstants(eps0=sc.epsilon_0 * 1e9)
    rng = np.random.default_rng(n)
    pos = rng.uniform(-0.5, 0.5, (n, 2))
    bias = bowl.bias(TAU * 20e9)
    cfg = ElectronConfiguration.pinned_at(pos, bowl.field, bias, constants=weak)
    spec = couplings(eigenmodes(cfg, bowl.field, bias, constants=weak), cfg, bowl.field,
                     ResonatorMode.uniform_field(0.23), C_TOTAL, GAMMA_SCALE, constants=weak)
    g_e = math.sqrt(2) * weak.e * 0.23e6 / (2 * math.sqrt(weak.m_e * GAMMA_SCALE * C_TOTAL))
    assert np.sum(spec.couplings**2) == pytest.approx(n * g_e**2, rel=1e-12)


@given(st.permutations(range(4)))
def test_permutation_leaves_frequencies_and_couplings(perm):
    bowl = HarmonicBowl(aspect=0.7)
    bias = bowl.bias(TAU * 15e9)
    pos = np.array([[0.2, 0.1], [-0.3, 0.0], [0.05, -0.35], [-0.1, 0.4]])
    ref = _spectrum(ElectronConfiguration.pinned_at(pos, bowl.field, bias), bowl.field, bias)
    per = _spectrum(ElectronConfiguration.pinned_at(pos[list(perm)], bowl.field, bias),
                    bowl.field, bias)
    scale = ref.omega_sq[-1]
    assert np.max(np.abs(per.omega_sq - ref.omega_sq)) <= 1e-9 * scale
    assert np.sort(np.abs(per.couplings)) == pytest.approx(np.sort(np.abs(ref.couplings)),
                                                           rel=1e-6, abs=1e-6 * _g_single(0.23))


def test_stable_spectra_have_real_frequencies(standin):
    for n in (1, 2, 5):
        cfg = minimize(standin, READOUT_BIAS, n, seed=0)
        spec = _spectrum(cfg, standin, READOUT_BIAS)
        assert spec.stable
        assert np.all(np.isfinite(spec.omegas)) and np.all(np.isfinite(spec.couplings))
        assert np.all(spec.gammas > 0)


@pytest.mark.parametrize("c, gamma", [(0.0, 0.85), (-1e-12, 0.85), (C_TOTAL, 0.0)])
def test_couplings_reject_bad_capacitance(bowl, c, gamma):
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 1)
    with pytest.raises(InputError):
        couplings(eigenmodes(cfg, bowl.field, bias), cfg, bowl.field, ResonatorMode(), c, gamma)


def test_couplings_reject_mismatched_spectrum(bowl):
    bias = bowl.bias(TAU * 20e9)
    one = minimize(bowl.field, bias, 1)
    two = minimize(bowl.field, bias, 2)
    with pytest.raises(InputError):
        couplings(eigenmodes(two, bowl.field, bias), one, bowl.field, ResonatorMode(), C_TOTAL)


def test_spectrum_from_modes_and_json():
    spec = ModeSpectrum.from_modes([TAU * 5e9, TAU * 6e9], [TAU * 1e7, 0.0])
    d = spec.to_dict()
    assert d["omega_over_2pi_hz"] == pytest.approx([5e9, 6e9])
    assert d["g_over_2pi_hz"] == pytest.approx([1e7, 0.0])
    with pytest.raises(InputError):
        ModeSpectrum.from_modes([1.0], [1.0], gammas=-1.0)
