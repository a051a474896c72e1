"""Small-oscillation modes of a trapped electron cluster and their resonator couplings.

Coordinates are interleaved as (x1, y1, x2, y2, ...). The dynamical matrix
is the full mass-scaled Hessian of the total energy, so in-plane mixing and
the Coulomb cross terms come out without a quasi-1D reduction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .constants import CONSTANTS, UM, PhysicalConstants
from .equilibrium import ElectronConfiguration, energy_hessian
from .errors import InputError
from .linalg import SymmetricMatrix, eig_symmetric
from .potential.grid import BiasConfig, PotentialField
from .potential.synthetic import RESONATOR_ARMS

__all__ = [
    "ModeSpectrum",
    "ResonatorMode",
    "hessian_matrix",
    "eigenmodes",
    "couplings",
    "coupling_vector",
    "DEFAULT_GAMMA",
    "STABILITY_RTOL",
]

DEFAULT_GAMMA = 2 * math.pi * 1.5e9
# Eigenvalues within this fraction of the largest |lambda| count as zero
# (continuous symmetries of the trap, rigid translation on flat ground).
STABILITY_RTOL = 1e-7


@dataclass(frozen=True, eq=False)
class ModeSpectrum:
    """Eigenmodes of the linearised equations of motion.

    Attributes
    ----------
    omega_sq : ndarray
        Eigenvalues of the dynamical matrix (rad^2/s^2), ascending.
    eigenvectors : ndarray, shape (2N, 2N)
        Orthonormal columns over the displacement coordinates.
    couplings : ndarray
        g_n (rad/s); zero until :func:`couplings` fills them.
    gammas : ndarray
        Damping Gamma_n (rad/s).
    stable : bool
        False when some eigenvalue is significantly negative.
    """

    omega_sq: np.ndarray
    eigenvectors: np.ndarray
    couplings: np.ndarray
    gammas: np.ndarray
    stable: bool = True

    def __post_init__(self):
        arrays = {}
        for name in ("omega_sq", "couplings", "gammas"):
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            a.setflags(write=False)
            arrays[name] = a
        n = len(arrays["omega_sq"])
        v = np.array(self.eigenvectors, dtype=float)
        if v.shape != (n, n) or not len(arrays["couplings"]) == len(arrays["gammas"]) == n:
            raise InputError("omega_sq, couplings, gammas and eigenvectors disagree in length")
        v.setflags(write=False)
        if np.any(arrays["gammas"] < 0):
            raise InputError("damping rates must be non-negative")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)
        object.__setattr__(self, "eigenvectors", v)

    @classmethod
    def from_modes(cls, omegas, couplings, gammas=DEFAULT_GAMMA) -> "ModeSpectrum":
        """Spectrum of independent modes given by frequency and coupling (rad/s).

        Eigenvectors are the identity; useful for closed-form checks.
        """
        w = np.atleast_1d(np.asarray(omegas, dtype=float))
        g = np.broadcast_to(np.asarray(couplings, dtype=float), w.shape)
        gam = np.broadcast_to(np.asarray(gammas, dtype=float), w.shape)
        return cls(w**2, np.eye(len(w)), g, gam, True)

    @classmethod
    def empty(cls) -> "ModeSpectrum":
        return cls(np.zeros(0), np.zeros((0, 0)), np.zeros(0), np.zeros(0), True)

    @property
    def omegas(self) -> np.ndarray:
        """Mode frequencies (rad/s); unstable directions report 0."""
        return np.sqrt(np.clip(self.omega_sq, 0.0, None))

    @property
    def n_modes(self) -> int:
        return len(self.omega_sq)

    def with_gammas(self, gamma) -> "ModeSpectrum":
        return replace(self, gammas=np.broadcast_to(np.asarray(gamma, dtype=float),
                                                    self.omega_sq.shape))

    def to_dict(self) -> dict:
        tau = 2 * math.pi
        return {
            "omega_over_2pi_hz": (self.omegas / tau).tolist(),
            "g_over_2pi_hz": (self.couplings / tau).tolist(),
            "gamma_over_2pi_hz": (self.gammas / tau).tolist(),
            "stable": bool(self.stable),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


@dataclass(frozen=True)
class ResonatorMode:
    """Which resonator voltage pattern drives the electrons.

    ``differential`` puts the two arms at +V and -V, ``common`` at +V and +V.
    The field per volt at each electron is ``(grad alpha_a -+ grad alpha_b)/2``.
    ``uniform`` overrides the field with a fixed vector (1/um), for
    idealised uniform-coupling checks.
    """

    kind: str = "differential"
    electrode_a: str = RESONATOR_ARMS[0]
    electrode_b: str = RESONATOR_ARMS[1]
    uniform: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("differential", "common"):
            raise InputError(f"resonator mode kind must be differential or common, not {self.kind!r}")
        if self.uniform is not None:
            object.__setattr__(self, "uniform", tuple(float(v) for v in self.uniform))

    @classmethod
    def uniform_field(cls, e_y: float, e_x: float = 0.0) -> "ResonatorMode":
        return cls(uniform=(e_x, e_y))

    def field_per_volt(self, field: PotentialField | None, positions) -> np.ndarray:
        """Field per volt at each position, shape (N, 2), in 1/um."""
        p = np.atleast_2d(np.asarray(positions, dtype=float)).reshape(-1, 2)
        if self.uniform is not None:
            return np.tile(np.asarray(self.uniform), (len(p), 1))
        if field is None:
            raise InputError("a potential field is needed unless the mode is uniform")
        if len(p) == 0:
            return np.zeros((0, 2))
        ga = field.unit_gradient(self.electrode_a, p)
        gb = field.unit_gradient(self.electrode_b, p)
        sign = -1.0 if self.kind == "differential" else 1.0
        return (ga + sign * gb) / 2


def hessian_matrix(cfg: ElectronConfiguration, field: PotentialField, bias: BiasConfig,
                   constants: PhysicalConstants = CONSTANTS) -> SymmetricMatrix:
    """Dynamical matrix (1/m_e) d^2U/dr_i dr_j in s^-2 at an equilibrium.

    Raises
    ------
    InputError
        ``cfg`` is neither converged nor explicitly pinned.
    """
    if not (cfg.converged or cfg.pinned):
        raise InputError("modes need a converged (or explicitly pinned) configuration")
    if cfg.n == 0:
        raise InputError("no electrons")
    h = energy_hessian(cfg, field, bias, constants) / UM**2  # J/m^2
    return SymmetricMatrix(h / constants.m_e)


def eigenmodes(cfg: ElectronConfiguration, field: PotentialField, bias: BiasConfig,
               gamma_default: float = DEFAULT_GAMMA,
               constants: PhysicalConstants = CONSTANTS) -> ModeSpectrum:
    """Normal modes about ``cfg``; couplings are left at zero.

    An empty configuration gives an empty spectrum.
    """
    if not gamma_default > 0:
        raise InputError("gamma_default must be positive")
    if cfg.n == 0:
        return ModeSpectrum.empty()
    lam, vec = eig_symmetric(hessian_matrix(cfg, field, bias, constants))
    scale = float(np.max(np.abs(lam)))
    stable = bool(lam[0] >= -STABILITY_RTOL * scale)
    return ModeSpectrum(lam, vec, np.zeros_like(lam), np.full_like(lam, gamma_default), stable)


def coupling_vector(cfg: ElectronConfiguration, field: PotentialField | None,
                    mode: ResonatorMode) -> np.ndarray:
    """Drive vector over the 2N coordinates in 1/m.

    The resonator mode voltage is normalised as (1, -+1)/sqrt(2) on the two
    arms, so the force per unit mode amplitude is e * sqrt(2) * (field per volt).
    """
    e_field = mode.field_per_volt(field, cfg.positions)
    return math.sqrt(2.0) * e_field.reshape(-1) / UM


def couplings(spectrum: ModeSpectrum, cfg: ElectronConfiguration, field: PotentialField | None,
              mode: ResonatorMode, c_total: float, gamma_scale: float = 0.85,
              constants: PhysicalConstants = CONSTANTS) -> ModeSpectrum:
    """Fill g_n = e (E . x_n) / (2 sqrt(m_e gamma C)) for every mode (rad/s).

    Parameters
    ----------
    c_total : float
        Resonator capacitance C = C_r + 2 C_dot (F).
    gamma_scale : float
        Effective-capacitance factor gamma; the oscillator sees gamma * C.
    """
    if not c_total > 0:
        raise InputError("resonator capacitance must be positive")
    if not gamma_scale > 0:
        raise InputError("gamma_scale must be positive")
    if spectrum.n_modes == 0:
        return spectrum
    if spectrum.n_modes != 2 * cfg.n:
        raise InputError("spectrum and configuration disagree in size")
    ev = coupling_vector(cfg, field, mode)
    g = constants.e * (ev @ spectrum.eigenvectors) / (
        2 * math.sqrt(constants.m_e * gamma_scale * c_total))
    return replace(spectrum, couplings=g)
