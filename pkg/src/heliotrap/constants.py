"""Physical constants and unit conventions.

Everything is SI internally except lengths handed across module boundaries,
which are in micrometres. Ordinary frequencies are named ``f_*`` (Hz) and
angular ones ``omega_*`` (rad/s).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import scipy.constants as sc

UM = 1e-6  # metres per micrometre


@dataclass(frozen=True)
class PhysicalConstants:
    e: float = sc.elementary_charge
    m_e: float = sc.electron_mass
    eps0: float = sc.epsilon_0
    eps_he: float = 1.057
    kB: float = sc.Boltzmann
    hbar: float = sc.hbar

    def __post_init__(self):
        for name in ("e", "m_e", "eps0", "eps_he", "kB", "hbar"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"constant {name} must be finite and positive, got {value}")

    @property
    def coulomb_k(self) -> float:
        """e^2 / (4 pi eps0) in J*m."""
        return self.e**2 / (4 * math.pi * self.eps0)

    @property
    def coulomb_ev_um(self) -> float:
        """Pair Coulomb energy prefactor in eV*um (energy in eV for distance in um)."""
        return self.e / (4 * math.pi * self.eps0) / UM


CONSTANTS = PhysicalConstants()


def hz(omega: float) -> float:
    """Angular frequency (rad/s) to ordinary frequency (Hz)."""
    return omega / (2 * math.pi)


def rad(f: float) -> float:
    """Ordinary frequency (Hz) to angular frequency (rad/s)."""
    return 2 * math.pi * f
