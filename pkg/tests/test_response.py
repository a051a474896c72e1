import contextlib
import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from heliotrap.equilibrium import ElectronConfiguration, minimize
from heliotrap.errors import FitError, InputError
from heliotrap.harness.presets import READOUT_BIAS
from heliotrap.modes import ModeSpectrum, ResonatorMode, couplings, eigenmodes
from heliotrap.response import (ReflectionTrace, ResonatorParams,
                                common_and_differential_frequencies, fit_s11,
                                frequency_shift, s11_model, simulate_driven,
                                single_electron_capacitance, susceptibility,
                                synthesize_trace)

TAU = 2 * math.pi
F_R = 6.04383e9
PARAMS = ResonatorParams()


# -- susceptibility ------------------------------------------------------------------

def test_empty_spectrum_has_zero_susceptibility():
    assert susceptibility(ModeSpectrum.empty(), TAU * F_R) == 0
    assert np.all(susceptibility(ModeSpectrum.empty(), np.array([1.0, 2.0])) == 0)


def test_static_single_mode_value():
    g, w = TAU * 9.8e6, TAU * 6.1e9
    chi = susceptibility(ModeSpectrum.from_modes([w], [g]), 0.0)
    assert chi.real == pytest.approx(4 * g**2 / w**2, rel=1e-14)
    assert chi.real == pytest.approx(1.03e-5, rel=0.01)
    assert chi.imag == 0.0


def test_negative_frequency_rejected():
    with pytest.raises(InputError):
        susceptibility(ModeSpectrum.from_modes([1.0], [1.0]), -1.0)


spectra = st.lists(
    st.tuples(st.floats(1e9, 1e11), st.floats(1e5, 1e8), st.floats(1e6, 1e10)),
    min_size=1, max_size=6,
).map(lambda m: ModeSpectrum.from_modes(*map(list, zip(*m))))


@given(spectra, st.floats(1e6, 1e12))
def test_absorptive_part_is_negative(spec, omega):
    assert susceptibility(spec, omega).imag < 0


@given(spectra)
def test_susceptibility_decays_as_inverse_square(spec):
    w1, w2 = 1e14, 1e15
    c1, c2 = abs(susceptibility(spec, w1)), abs(susceptibility(spec, w2))
    assert c2 <= c1 / 99


# -- frequency shift -----------------------------------------------------------------

def test_empty_spectrum_gives_no_shift():
    assert frequency_shift(ModeSpectrum.empty(), PARAMS) == 0.0


def test_thirty_uniformly_coupled_electrons():
    # All coupling lands in the centre-of-mass mode, g = sqrt(N) g_e.
    g = math.sqrt(30) * TAU * 9.8e6
    spec = ModeSpectrum.from_modes([TAU * 50e9], [g])
    df = frequency_shift(spec, PARAMS)
    assert -14e3 * 1.5 <= df <= -14e3 / 1.5


@pytest.mark.parametrize("f_e", [6.5e9, 10e9, 25e9])
def test_lossless_single_mode_closed_form(f_e):
    g_f = 9.8e6
    spec = ModeSpectrum.from_modes([TAU * f_e], [TAU * g_f], gammas=0.0)
    oracle = -F_R * 2 * g_f**2 / (f_e**2 - F_R**2)
    assert frequency_shift(spec, PARAMS) == pytest.approx(oracle, rel=1e-12)


def test_dispersive_shift_is_negative_above_resonance():
    spec = ModeSpectrum.from_modes(TAU * np.array([8e9, 15e9, 40e9]), TAU * 5e6)
    assert frequency_shift(spec, PARAMS) < 0


@given(spectra, spectra)
def test_shift_is_additive_over_independent_modes(a, b):
    joint = ModeSpectrum.from_modes(np.r_[a.omegas, b.omegas], np.r_[a.couplings, b.couplings],
                                    np.r_[a.gammas, b.gammas])
    total = frequency_shift(a, PARAMS) + frequency_shift(b, PARAMS)
    assert frequency_shift(joint, PARAMS) == pytest.approx(total, rel=1e-9, abs=1e-12)


# -- capacitance and lumped frequencies ---------------------------------------------------

def test_capacitance_from_susceptibility():
    params = ResonatorParams(C_r=0.24e-12, C_dot=0.0)
    w = TAU * 6.1e9
    g = math.sqrt(1e-5) * w / 2  # chi(0) = 4 g^2 / w^2 = 1e-5
    spec = ModeSpectrum.from_modes([w], [g])
    assert single_electron_capacitance(spec, params, 0.0) == pytest.approx(2.4e-18, rel=1e-12)
    assert single_electron_capacitance(ModeSpectrum.empty(), params, 0.0) == 0.0


def test_capacitance_tracks_real_susceptibility():
    spec = ModeSpectrum.from_modes([TAU * 8e9, TAU * 20e9], [TAU * 9e6, TAU * 4e6])
    w = TAU * np.linspace(1e9, 7e9, 13)
    dc = [single_electron_capacitance(spec, PARAMS, x) for x in w]
    assert dc == pytest.approx(susceptibility(spec, w).real * PARAMS.c_total, rel=1e-14)


def test_lumped_mode_frequencies():
    f_r, f_c = common_and_differential_frequencies(PARAMS)
    assert 6.0e9 <= f_r <= 6.2e9
    assert f_r == pytest.approx(F_R, rel=0.05)
    assert f_c < 4e9
    f_bare, _ = common_and_differential_frequencies(PARAMS.replace(C_dot=0.0))
    assert abs(f_bare - f_r) / f_r <= 1e-4


def test_resonator_params_validation():
    with pytest.raises(InputError):
        ResonatorParams(Q_i=0.0)
    with pytest.raises(InputError):
        ResonatorParams(f_r=8e9)
    assert ResonatorParams(f_r=8e9, lumped_tolerance=None).f_r == 8e9
    with pytest.raises(InputError):
        ResonatorParams.from_dict({"f_r": F_R, "bogus": 1})


# -- S11 -----------------------------------------------------------------------------

def test_s11_on_resonance():
    s = s11_model(F_R, PARAMS)
    q_t = 1 / (1 / 5800 + 1 / 4800)
    assert s == pytest.approx(1 - 2 * q_t / 4800, abs=1e-15)
    assert s.real == pytest.approx(-0.094, abs=5e-4)


def test_s11_far_from_resonance():
    width = F_R / PARAMS.q_t
    assert abs(s11_model(F_R + 1e4 * width, PARAMS) - 1) <= 1e-3


def test_s11_shift_moves_the_dip():
    assert s11_model(F_R - 25e3, PARAMS, delta_f=-25e3) == s11_model(F_R, PARAMS)
    with pytest.raises(InputError):
        s11_model(F_R, PARAMS, delta_f=-2 * F_R)


@given(st.floats(100, 1e5), st.floats(100, 1e5), st.floats(0.1, 2.0), st.floats(-3.1, 3.1),
       st.floats(-1e-2, 1e-2))
def test_s11_is_bounded(q_i, q_c, a, theta, detune):
    p = ResonatorParams(Q_i=q_i, Q_c=q_c, a=a, theta=theta)
    s = s11_model(F_R * (1 + detune), p)
    assert abs(s) <= a * 2 * p.q_t / q_c + 1 + 1e-12


# -- synthetic traces ----------------------------------------------------------------

def test_noiseless_trace_is_the_model():
    tr = synthesize_trace(PARAMS, delta_f=-1e4, n_points=101)
    assert np.array_equal(tr.s11, s11_model(tr.frequencies, PARAMS, -1e4))


def test_trace_is_seed_deterministic():
    a = synthesize_trace(PARAMS, noise_sigma=0.01, seed=4)
    b = synthesize_trace(PARAMS, noise_sigma=0.01, seed=4)
    c = synthesize_trace(PARAMS, noise_sigma=0.01, seed=5)
    assert np.array_equal(a.s11, b.s11) and not np.array_equal(a.s11, c.s11)


def test_trace_noise_scale():
    tr = synthesize_trace(PARAMS, n_points=10_000, noise_sigma=0.01, seed=0)
    r = tr.s11 - s11_model(tr.frequencies, PARAMS)
    assert math.sqrt(np.mean(np.abs(r) ** 2)) == pytest.approx(0.01, rel=0.2)


def test_trace_validation():
    with pytest.raises(InputError):
        synthesize_trace(PARAMS, n_points=7)
    with pytest.raises(InputError):
        ReflectionTrace([1.0, 1.0], [0, 0])
    with pytest.raises(InputError):
        ReflectionTrace([1.0, 2.0], [0])


def test_trace_csv_round_trip(tmp_path):
    tr = synthesize_trace(PARAMS, noise_sigma=0.01, n_points=64, seed=1)
    path = tr.to_csv(tmp_path / "trace.csv")
    assert path.read_text().splitlines()[0] == "freq_hz,re_s11,im_s11"
    back = ReflectionTrace.from_csv(path)
    assert np.array_equal(back.frequencies, tr.frequencies) and np.array_equal(back.s11, tr.s11)


def test_trace_csv_rejects_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("f,re,im\n1,0,0\n")
    with pytest.raises(InputError):
        ReflectionTrace.from_csv(p)


# -- fitting -------------------------------------------------------------------------

GUESS = ResonatorParams(f_r=F_R + 200e3, Q_i=5000, Q_c=5500, theta=0.1, lumped_tolerance=None)


def _rel(a, b):
    return abs(a - b) / abs(b)


def test_noiseless_fit_recovers_parameters():
    truth = PARAMS.replace(theta=0.05)
    tr = synthesize_trace(truth, n_points=801)
    fit = fit_s11(tr, GUESS)
    assert fit.converged
    for name in ("f_r", "Q_i", "Q_c", "a"):
        assert _rel(getattr(fit.params, name), getattr(truth, name)) <= 1e-6
    assert fit.params.theta == pytest.approx(0.05, abs=1e-6)


def test_noiseless_fit_recovers_asymmetry_when_q_c_is_held():
    truth = PARAMS.replace(a=0.9, theta=-0.2)
    tr = synthesize_trace(truth, n_points=801)
    fit = fit_s11(tr, GUESS.replace(Q_c=truth.Q_c, a=1.0), hold=("Q_c",))
    for name in ("f_r", "Q_i", "a"):
        assert _rel(getattr(fit.params, name), getattr(truth, name)) <= 1e-6
    assert fit.params.theta == pytest.approx(-0.2, abs=1e-6)
    assert fit.stderr["Q_c"] == 0.0


def test_fitting_all_five_parameters_is_singular():
    tr = synthesize_trace(PARAMS, n_points=801, noise_sigma=0.005, seed=0)
    with pytest.raises(FitError) as exc:
        fit_s11(tr, GUESS, hold=())
    assert "singular_values" in exc.value.diagnostics


def test_fit_rejects_short_trace():
    tr = ReflectionTrace([1.0, 2.0, 3.0, 4.0], [1, 1, 1, 1])
    with pytest.raises(FitError):
        fit_s11(tr)


def test_fit_warns_when_guess_is_outside_span():
    tr = synthesize_trace(PARAMS, n_points=401)
    # Started that far off, the fit may also fail outright; only the warning is promised.
    with pytest.warns(RuntimeWarning, match="outside the trace span"):
        with contextlib.suppress(FitError):
            fit_s11(tr, GUESS.replace(f_r=F_R + 1e9), seed_from_dip=False)


def _noisy(delta_f, seed, n_points=40001):
    sigma = 0.01 * abs(1 - s11_model(F_R, PARAMS))
    span = 6 * F_R / PARAMS.q_t
    return synthesize_trace(PARAMS, delta_f, f_span=span, n_points=n_points,
                            noise_sigma=sigma, seed=seed), sigma


@pytest.mark.parametrize("seed", range(5))
def test_noisy_fit_accuracy(seed):
    tr, sigma = _noisy(0.0, seed)
    fit = fit_s11(tr, GUESS)
    assert abs(fit.params.f_r - F_R) <= 1e3
    assert _rel(fit.params.Q_i, 5800) <= 0.03 and _rel(fit.params.Q_c, 4800) <= 0.03
    assert fit.residual_rms <= 1.1 * sigma
    assert 0 < fit.stderr["f_r"] < 1e3


def test_fit_resolves_single_electron_shift():
    bare, _ = _noisy(0.0, 11)
    loaded, _ = _noisy(-25e3, 12)
    f0 = fit_s11(bare, GUESS).params.f_r
    f1 = fit_s11(loaded, GUESS).params.f_r
    assert f1 - f0 == pytest.approx(-25e3, abs=1e3)


def test_fit_report_keys():
    fit = fit_s11(synthesize_trace(PARAMS, n_points=201), GUESS)
    d = fit.to_dict()
    assert set(d) == {"f_r_hz", "q_i", "q_c", "a", "theta_rad", "stderr", "converged"}
    assert set(d["stderr"]) == {"f_r_hz", "q_i", "q_c", "a", "theta_rad"}


# -- time-domain oracle -----------------------------------------------------------------

def test_zero_drive_gives_zero_response(bowl):
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 1)
    assert simulate_driven(cfg, bowl.field, bias, ResonatorMode(), TAU * 5e9, 1e10, 0.0) == 0


def test_quasi_static_response_is_in_phase(bowl):
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 1)
    gamma = TAU * 1.5e9
    p = simulate_driven(cfg, bowl.field, bias, ResonatorMode(), TAU * 0.5e9, gamma, 1e-3)
    chi = p / 1e-3
    assert chi.real > 0
    assert abs(chi.imag) <= 0.05 * chi.real


def test_driven_oracle_matches_modal_sum(standin):
    cfg = minimize(standin, READOUT_BIAS, 3, seed=0)
    gamma = TAU * 1.5e9
    mode = ResonatorMode()
    spec = couplings(eigenmodes(cfg, standin, READOUT_BIAS, gamma), cfg, standin, mode,
                     PARAMS.c_total, PARAMS.gamma_scale)
    assert spec.stable
    start = time.perf_counter()
    for f in (1e9, 3e9, 6e9, 12e9, 24e9):
        chi = susceptibility(spec, TAU * f)
        oracle = simulate_driven(cfg, standin, READOUT_BIAS, mode, TAU * f, gamma, 1e-3,
                                 PARAMS) / 1e-3
        assert abs(oracle - chi) <= 0.01 * abs(chi), f
    print(f"driven oracle: 5 frequencies in {time.perf_counter() - start:.1f} s")


def test_driven_oracle_rejects_bad_inputs(bowl):
    bias = bowl.bias(TAU * 20e9)
    cfg = minimize(bowl.field, bias, 1)
    with pytest.raises(InputError):
        simulate_driven(cfg, bowl.field, bias, ResonatorMode(), TAU * 5e9, 0.0, 1e-3)
    with pytest.raises(InputError):
        simulate_driven(cfg, bowl.field, bias, ResonatorMode(), 0.0, 1e10, 1e-3)
    with pytest.raises(InputError):
        simulate_driven(ElectronConfiguration([[0.0, 0.0]], 0.0, False, 1.0), bowl.field, bias,
                        ResonatorMode(), TAU * 5e9, 1e10, 1e-3)
