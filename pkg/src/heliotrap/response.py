"""Electron susceptibility, dispersive resonator shift and reflection spectra.

Also holds a time-domain integrator of the driven, damped linearised
equations of motion. It shares no code with the modal sum, so the two can
check each other.
"""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import least_squares

from .constants import CONSTANTS, PhysicalConstants
from .equilibrium import ElectronConfiguration
from .errors import ConvergenceError, FitError, InputError
from .modes import ModeSpectrum, ResonatorMode, coupling_vector, hessian_matrix
from .potential.grid import BiasConfig, PotentialField

__all__ = [
    "ResonatorParams",
    "ReflectionTrace",
    "FitResult",
    "susceptibility",
    "frequency_shift",
    "single_electron_capacitance",
    "common_and_differential_frequencies",
    "s11_model",
    "synthesize_trace",
    "fit_s11",
    "simulate_driven",
]


@dataclass(frozen=True)
class ResonatorParams:
    """Lumped resonator description and reflection-fit parameters.

    Attributes
    ----------
    f_r : measured differential-mode resonance (Hz)
    L_r, C_r : lumped inductance (H) and capacitance (F) of the resonator
    C_dot : capacitance of each arm end to the trap (F)
    L_t : inductance of the arm sections that only the common mode sees (H)
    Q_i, Q_c : internal and coupling quality factors
    a, theta : magnitude and phase of the coupling asymmetry in S11
    gamma_scale : effective-capacitance factor of the electron coupling
    lumped_tolerance : allowed relative mismatch between ``f_r`` and the
        lumped estimate 1/(2 pi sqrt(L_r C)); None skips the check.
    """

    f_r: float = 6.04383e9
    L_r: float = 2.8e-9
    C_r: float = 0.24e-12
    C_dot: float = 20e-18
    L_t: float = 2.5e-9
    Q_i: float = 5800.0
    Q_c: float = 4800.0
    a: float = 1.0
    theta: float = 0.0
    gamma_scale: float = 0.85
    lumped_tolerance: float | None = 0.05

    def __post_init__(self):
        for name in ("f_r", "Q_i", "Q_c", "a", "gamma_scale", "L_r", "C_r", "L_t"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"{name} must be finite and positive, got {v}")
        if not (math.isfinite(self.C_dot) and self.C_dot >= 0):
            raise InputError("C_dot must be finite and non-negative")
        if not math.isfinite(self.theta):
            raise InputError("theta must be finite")
        if self.lumped_tolerance is not None:
            mismatch = abs(self.f_lumped - self.f_r) / self.f_r
            if mismatch > self.lumped_tolerance:
                raise InputError(
                    f"f_r={self.f_r:.6g} Hz is {mismatch:.1%} from the lumped estimate "
                    f"{self.f_lumped:.6g} Hz (tolerance {self.lumped_tolerance:.0%})")

    @property
    def c_total(self) -> float:
        """C = C_r + 2 C_dot (F)."""
        return self.C_r + 2 * self.C_dot

    @property
    def f_lumped(self) -> float:
        return 1.0 / (2 * math.pi * math.sqrt(self.L_r * self.c_total))

    @property
    def omega_r(self) -> float:
        return 2 * math.pi * self.f_r

    @property
    def q_t(self) -> float:
        return 1.0 / (1.0 / self.Q_i + 1.0 / self.Q_c)

    def replace(self, **kw) -> "ResonatorParams":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d) -> "ResonatorParams":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise InputError(f"unknown resonator parameters {sorted(unknown)}")
        return cls(**d)


def susceptibility(spectrum: ModeSpectrum, omega) -> complex | np.ndarray:
    """chi_e(omega) = sum_n 4 g_n^2 / (omega_n^2 - omega^2 + 2 i omega Gamma_n).

    ``omega`` may be a scalar or an array (rad/s, >= 0).
    """
    w = np.asarray(omega, dtype=float)
    if np.any(w < 0):
        raise InputError("omega must be non-negative")
    if spectrum.n_modes == 0:
        return complex(0.0) if w.ndim == 0 else np.zeros(w.shape, dtype=complex)
    wn2 = spectrum.omega_sq
    g2 = spectrum.couplings**2
    gam = spectrum.gammas
    wb = w[..., None]
    chi = np.sum(4 * g2 / (wn2 - wb**2 + 2j * wb * gam), axis=-1)
    return complex(chi) if w.ndim == 0 else chi


def frequency_shift(spectrum: ModeSpectrum, params: ResonatorParams) -> float:
    """Dispersive shift Delta f = -f_r Re chi_e(2 pi f_r) / 2 (Hz)."""
    if spectrum.n_modes == 0:
        return 0.0
    return -params.f_r * susceptibility(spectrum, params.omega_r).real / 2


def single_electron_capacitance(spectrum: ModeSpectrum, params: ResonatorParams,
                                omega: float) -> float:
    """Capacitance added by the electrons, Re chi_e(omega) * (C_r + 2 C_dot) (F)."""
    if spectrum.n_modes == 0:
        return 0.0
    return susceptibility(spectrum, omega).real * params.c_total


def common_and_differential_frequencies(params: ResonatorParams) -> tuple[float, float]:
    """Lumped-model differential and common mode frequencies (f_r, f_c) in Hz.

    f_r = 1/(2 pi sqrt(L_r (C_r + 2 C_dot))) and
    f_c = 1/(2 pi sqrt((L_r + 2 L_t) C_r)).
    """
    f_r = 1.0 / (2 * math.pi * math.sqrt(params.L_r * params.c_total))
    f_c = 1.0 / (2 * math.pi * math.sqrt((params.L_r + 2 * params.L_t) * params.C_r))
    return f_r, f_c


def s11_model(f, params: ResonatorParams, delta_f: float = 0.0):
    """Reflection coefficient near resonance.

    S11 = 1 - (2 Q_t / Q_c) a e^{i theta} / (1 + 2 i Q_t delta) with
    delta = (f - f_0) / f_0 and f_0 = f_r + delta_f.
    """
    f0 = params.f_r + delta_f
    if not f0 > 0:
        raise InputError("shifted resonance frequency must be positive")
    q_t = params.q_t
    delta = (np.asarray(f, dtype=float) - f0) / f0
    s = 1 - (2 * q_t / params.Q_c) * params.a * np.exp(1j * params.theta) / (1 + 2j * q_t * delta)
    return complex(s) if np.ndim(s) == 0 else s


# -- traces and fitting -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReflectionTrace:
    """Complex S11 sampled at strictly increasing frequencies (Hz)."""

    frequencies: np.ndarray
    s11: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        f = np.array(self.frequencies, dtype=float).reshape(-1)
        s = np.array(self.s11, dtype=complex).reshape(-1)
        if len(f) != len(s):
            raise InputError("frequencies and s11 differ in length")
        if len(f) >= 2 and not np.all(np.diff(f) > 0):
            raise InputError("frequencies must be strictly increasing")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(s))):
            raise InputError("trace holds non-finite values")
        f.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "s11", s)

    def __len__(self):
        return len(self.frequencies)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "re_s11", "im_s11"])
            for f, s in zip(self.frequencies, self.s11):
                w.writerow([repr(float(f)), repr(float(s.real)), repr(float(s.imag))])
        return path

    @classmethod
    def from_csv(cls, path) -> "ReflectionTrace":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["freq_hz", "re_s11", "im_s11"]:
            raise InputError(f"{path}: header must be freq_hz,re_s11,im_s11")
        try:
            data = np.array([[float(c) for c in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
        if data.ndim != 2 or data.shape[1] != 3:
            raise InputError(f"{path}: every row needs three values")
        return cls(data[:, 0], data[:, 1] + 1j * data[:, 2])


def synthesize_trace(params: ResonatorParams, delta_f: float = 0.0, f_span: float | None = None,
                     n_points: int = 801, noise_sigma: float = 0.0, seed: int = 0,
                     center: float | None = None) -> ReflectionTrace:
    """Model S11 on an even frequency grid plus complex Gaussian noise.

    The noise has E|n|^2 = noise_sigma^2 (each quadrature carries
    noise_sigma/sqrt(2)). ``f_span`` defaults to ten linewidths and the grid
    is centred on the bare f_r unless ``center`` is given.
    """
    if n_points < 8:
        raise InputError("n_points must be at least 8")
    if noise_sigma < 0:
        raise InputError("noise_sigma must be non-negative")
    if f_span is None:
        f_span = 10 * params.f_r / params.q_t
    c = params.f_r if center is None else center
    f = np.linspace(c - f_span / 2, c + f_span / 2, n_points)
    s = s11_model(f, params, delta_f)
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        s = s + noise_sigma / math.sqrt(2) * (rng.standard_normal(n_points)
                                              + 1j * rng.standard_normal(n_points))
    return ReflectionTrace(f, s, noise_sigma)


_FIT_NAMES = ("f_r", "Q_i", "Q_c", "a", "theta")


@dataclass(frozen=True)
class FitResult:
    params: ResonatorParams
    stderr: dict
    covariance: np.ndarray = field(repr=False)
    converged: bool
    residual_rms: float
    n_evaluations: int

    def to_dict(self) -> dict:
        p = self.params
        return {
            "f_r_hz": p.f_r,
            "q_i": p.Q_i,
            "q_c": p.Q_c,
            "a": p.a,
            "theta_rad": p.theta,
            "stderr": {
                "f_r_hz": self.stderr["f_r"],
                "q_i": self.stderr["Q_i"],
                "q_c": self.stderr["Q_c"],
                "a": self.stderr["a"],
                "theta_rad": self.stderr["theta"],
            },
            "converged": bool(self.converged),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _wrap(theta: float) -> float:
    w = math.remainder(theta, 2 * math.pi)
    return math.pi if w == -math.pi else w


def fit_s11(trace: ReflectionTrace, initial: ResonatorParams | None = None, *,
            seed_from_dip: bool | None = None, max_nfev: int = 2000,
            hold: tuple = ("a",)) -> FitResult:
    """Least-squares fit of f_r, Q_i, Q_c, a and theta to a reflection trace.

    Minimises sum |S11_data - S11_model|^2 with scipy's Levenberg-Marquardt
    driver. The quality factors are fitted in log form and f_r as an offset
    in units of the initial linewidth, which keeps the problem well scaled.

    Parameters
    ----------
    initial : ResonatorParams, optional
        Starting point; fields outside the five fitted ones are carried over.
    seed_from_dip : bool, optional
        Start f_r at the sample farthest from S11 = 1. Defaults to True when
        ``initial`` is None or its f_r lies outside the trace.
    hold : tuple of str
        Parameters kept at their initial values (stderr 0). S11 depends on
        Q_i, Q_c and a only through Q_t and a*Q_t/Q_c, so one of the three
        must be fixed for the rest to be identifiable; the default holds a.
        ``hold=()`` fits all five and then fails on the singular Jacobian.

    Raises
    ------
    FitError
        Fewer points than parameters, or a rank-deficient Jacobian.
    """
    if len(trace) < len(_FIT_NAMES):
        raise FitError("trace too short for a five-parameter fit",
                       {"n_points": len(trace)})
    f = trace.frequencies
    s = trace.s11
    initial = initial or ResonatorParams(lumped_tolerance=None)
    init = replace(initial, lumped_tolerance=None)
    inside = f[0] <= init.f_r <= f[-1]
    if seed_from_dip is None:
        seed_from_dip = not inside
    f_start = float(f[np.argmax(np.abs(s - 1))]) if seed_from_dip else init.f_r
    if not f[0] <= f_start <= f[-1]:
        warnings.warn("initial resonance lies outside the trace span; the fit is poorly "
                      "conditioned", RuntimeWarning, stacklevel=2)
    width = f_start / init.q_t
    unknown = set(hold) - set(_FIT_NAMES)
    if unknown:
        raise InputError(f"cannot hold unknown parameters {sorted(unknown)}")
    free = [k for k, name in enumerate(_FIT_NAMES) if name not in hold]
    full0 = np.array([0.0, math.log(init.Q_i), math.log(init.Q_c), init.a, init.theta])

    def unpack(p):
        q = full0.copy()
        q[free] = p
        # Clamp log Q so a wild trial step cannot overflow.
        return replace(init, f_r=f_start + q[0] * width, Q_i=math.exp(min(q[1], 700.0)),
                       Q_c=math.exp(min(q[2], 700.0)), a=q[3], theta=q[4])

    def resid(p):
        d = s - s11_model(f, unpack(p))
        return np.concatenate([d.real, d.imag])

    p0 = full0[free]
    with np.errstate(all="ignore"):
        res = least_squares(resid, p0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                            max_nfev=max_nfev)
    fitted = unpack(res.x)
    if not (fitted.f_r > 0 and fitted.a > 0 and math.isfinite(fitted.Q_i)
            and math.isfinite(fitted.Q_c)):
        raise FitError("fit left the physical parameter range",
                       {"x": res.x.tolist(), "status": int(res.status)})
    fitted = replace(fitted, theta=_wrap(fitted.theta))
    if not f[0] <= fitted.f_r <= f[-1]:
        warnings.warn("fitted resonance lies outside the trace span; the fit is poorly "
                      "conditioned", RuntimeWarning, stacklevel=2)
    J = res.jac
    sv = np.linalg.svd(J, compute_uv=False)
    # Finite-difference Jacobians resolve singular values to about sqrt(eps).
    if sv[-1] <= 1e-8 * sv[0]:
        raise FitError("singular Jacobian at the fitted point",
                       {"singular_values": sv.tolist(), "x": res.x.tolist()})
    dof = max(2 * len(f) - len(free), 1)
    s2 = float(np.sum(res.fun**2)) / dof
    cov_p = s2 * np.linalg.inv(J.T @ J)
    # Chain rule from (offset/width, log Qi, log Qc, a, theta) to physical units.
    jac_phys = np.diag([width, fitted.Q_i, fitted.Q_c, 1.0, 1.0])[np.ix_(free, free)]
    cov = np.zeros((len(_FIT_NAMES), len(_FIT_NAMES)))
    cov[np.ix_(free, free)] = jac_phys @ cov_p @ jac_phys
    stderr = dict(zip(_FIT_NAMES, np.sqrt(np.clip(np.diag(cov), 0, None)).tolist()))
    rms = float(np.sqrt(np.mean(np.abs(s - s11_model(f, fitted)) ** 2)))
    return FitResult(fitted, stderr, cov, bool(res.success), rms, int(res.nfev))


# -- time-domain oracle -----------------------------------------------------

def _gershgorin_max(m: np.ndarray) -> float:
    return float(np.max(np.abs(np.diag(m)) + np.sum(np.abs(m), axis=1) - np.abs(np.diag(m))))


def simulate_driven(cfg: ElectronConfiguration, field: PotentialField | None, bias: BiasConfig,
                    mode: ResonatorMode, omega: float, gamma: float, drive_amplitude: float,
                    params: ResonatorParams | None = None, *, steps_per_period: int = 40,
                    drift_tol: float = 1e-6, max_duration_factor: float = 400.0,
                    constants: PhysicalConstants = CONSTANTS) -> complex:
    """Steady-state polarisation under a cosine drive, by direct integration.

    Integrates  y'' + 2 gamma y' + M y = -(e V0 / m_e) E cos(omega t)  from
    rest with fixed-step RK4, then lock-in demodulates the projection E . y
    over whole drive periods. Returns the complex amplitude

        P = -e (E . Y) / (gamma_scale C)

    in volts, so that P / drive_amplitude is the electron susceptibility.

    The step is at most 1/``steps_per_period`` of the shortest period
    present (drive or Gershgorin bound on M). Integration runs at least
    20/gamma, then until the demodulated amplitude drifts by less than
    ``drift_tol`` (relative) from one period to the next.

    Raises
    ------
    ConvergenceError
        Steady state not reached within ``max_duration_factor / gamma``.
    """
    params = params or ResonatorParams()
    if not gamma > 0:
        raise InputError("gamma must be positive")
    if omega <= 0:
        raise InputError("drive frequency must be positive")
    if drive_amplitude == 0:
        return 0j
    m = np.array(hessian_matrix(cfg, field, bias, constants))
    ev = coupling_vector(cfg, field, mode)
    force = -constants.e * drive_amplitude / constants.m_e * ev
    w_max = max(math.sqrt(max(_gershgorin_max(m), 0.0)), omega)
    period = 2 * math.pi / omega
    k = max(int(math.ceil(steps_per_period * w_max / omega)), steps_per_period)
    dt = period / k
    n = len(ev)
    y = np.zeros(n)
    v = np.zeros(n)
    phase = np.exp(-1j * omega * dt * np.arange(k))

    def acc(t, y_, v_):
        return -m @ y_ - 2 * gamma * v_ + force * math.cos(omega * t)

    min_periods = int(math.ceil(20.0 / gamma / period))
    max_periods = max(int(math.ceil(max_duration_factor / gamma / period)), min_periods + 2)
    prev = None
    t0 = 0.0
    for period_index in range(max_periods):
        proj = np.empty(k)
        for j in range(k):
            t = t0 + j * dt
            proj[j] = ev @ y
            k1v = acc(t, y, v)
            k1y = v
            k2v = acc(t + dt / 2, y + dt / 2 * k1y, v + dt / 2 * k1v)
            k2y = v + dt / 2 * k1v
            k3v = acc(t + dt / 2, y + dt / 2 * k2y, v + dt / 2 * k2v)
            k3y = v + dt / 2 * k2v
            k4v = acc(t + dt, y + dt * k3y, v + dt * k3v)
            k4y = v + dt * k3v
            y = y + dt / 6 * (k1y + 2 * k2y + 2 * k3y + k4y)
            v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        # The period starts at t0 = period_index * period, a whole number of
        # periods, so the demodulation phase is the same every time.
        amp = 2.0 / k * complex(np.sum(proj * phase))
        t0 = (period_index + 1) * period
        if period_index + 1 >= min_periods and prev is not None:
            if abs(amp - prev) <= drift_tol * max(abs(amp), 1e-300):
                return -constants.e * amp / (params.gamma_scale * params.c_total)
        prev = amp
    raise ConvergenceError(
        f"driven response still drifting after {max_periods} periods",
        residual=abs(amp - prev) / max(abs(amp), 1e-300))
