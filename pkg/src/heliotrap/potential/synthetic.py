"""Closed-form test potentials and the default stand-in trap geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping

import numpy as np

from ..constants import CONSTANTS, UM, PhysicalConstants
from .grid import BiasConfig, GridGeometry, PotentialField, UnitPotentialGrid
from .laplace import Electrode, ElectrodeGeometry2D, solve_unit_potentials

__all__ = [
    "sampled_field",
    "HarmonicBowl",
    "DoubleWell",
    "standin_geometry",
    "standin_field",
    "RESONATOR_ARMS",
]

RESONATOR_ARMS = ("resonator_upper", "resonator_lower")


def sampled_field(functions: Mapping[str, Callable], half_width: float, spacing: float,
                  **kwargs) -> PotentialField:
    """Sample closed-form unit potentials alpha_k(x, y) onto a square grid
    centred on the origin."""
    n = int(round(2 * half_width / spacing)) + 1
    g = GridGeometry(n, n, -half_width, -half_width, spacing, spacing)
    X, Y = np.meshgrid(g.x, g.y)
    grids = [UnitPotentialGrid(name, g, np.broadcast_to(f(X, Y), X.shape).astype(float))
             for name, f in functions.items()]
    return PotentialField(grids, **kwargs)


def _curvature_per_volt(omega: float, c: PhysicalConstants) -> float:
    # m omega^2 / e in V/um^2
    return c.m_e * omega**2 / c.e * UM**2


@dataclass(frozen=True)
class HarmonicBowl:
    """Isotropic (or elliptical) parabolic trap with a uniform resonator field.

    Unit potentials, with r2 = aspect*x^2 + y^2 and R2 = 2*half_width^2::

        bottom          = depth * (1 - r2 / R2)
        resonator_upper = arm * (1/2 + e_y * y / arm)
        resonator_lower = arm * (1/2 - e_y * y / arm)

    so the differential-mode field per volt is exactly ``e_y`` (1/um) along y
    everywhere, and the common-mode field vanishes. The dc resonator bias only
    shifts phi by a constant.
    """

    half_width: float = 1.0
    spacing: float = 0.025
    depth: float = 0.5
    arm: float = 0.5
    e_y: float = 0.23
    aspect: float = 1.0

    def __post_init__(self):
        if self.depth + self.arm > 1 + 1e-12:
            raise ValueError("depth + arm must not exceed 1")
        if abs(self.e_y) * self.half_width > self.arm / 2:
            raise ValueError("e_y too large for the arm amplitude on this domain")
        if not 0 < self.aspect <= 1:
            raise ValueError("aspect must lie in (0, 1]")

    @property
    def field(self) -> PotentialField:
        return _bowl_field(self)

    def bottom_voltage(self, omega_e: float, constants: PhysicalConstants = CONSTANTS) -> float:
        """Bottom bias giving y-motion frequency ``omega_e`` (rad/s)."""
        return _curvature_per_volt(omega_e, constants) * self.half_width**2 / self.depth

    def omega_y(self, v_b: float, constants: PhysicalConstants = CONSTANTS) -> float:
        k = v_b * self.depth / self.half_width**2  # V/um^2
        return math.sqrt(k / _curvature_per_volt(1.0, constants))

    def bias(self, omega_e: float, constants: PhysicalConstants = CONSTANTS, **kw) -> BiasConfig:
        return BiasConfig.standard(v_b=self.bottom_voltage(omega_e, constants), **kw)


@lru_cache(maxsize=32)
def _bowl_field(b: HarmonicBowl) -> PotentialField:
    R2 = 2 * b.half_width**2
    return sampled_field(
        {
            "bottom": lambda x, y: b.depth * (1 - (b.aspect * x**2 + y**2) / R2),
            "resonator_upper": lambda x, y: b.arm / 2 + b.e_y * y,
            "resonator_lower": lambda x, y: b.arm / 2 - b.e_y * y,
        },
        b.half_width,
        b.spacing,
        bias_map={a: "resonator" for a in RESONATOR_ARMS},
        name="harmonic-bowl",
    )


@dataclass(frozen=True)
class DoubleWell:
    """Quartic trap whose y-curvature is linear in both V_r and V_b.

    With L = half_width::

        bottom          = ab * (1 - (x^2 + y^2) / (2 L^2))
        resonator_upper = ar * (1 + 2 y / L)^2 / 9
        resonator_lower = ar * (1 - 2 y / L)^2 / 9
        quartic         = aq * (1 - (y / L)^4)
        split_gate_*    = s * (1 +- y / L) / 2

    The electron energy has quadratic y coefficient
    ``ab*V_b/(2 L^2) - 8*ar*V_r/(9 L^2)``; where it changes sign the single
    well splits in two. A split-gate voltage difference tilts the well.
    """

    half_width: float = 1.5
    spacing: float = 0.05
    ab: float = 0.35
    ar: float = 0.18
    aq: float = 0.2
    s: float = 0.2

    @property
    def field(self) -> PotentialField:
        return _double_well_field(self)

    @property
    def e_y(self) -> float:
        """Differential-mode field per volt along y (1/um)."""
        return 4 * self.ar / (9 * self.half_width)

    def y_curvature(self, v_b: float, v_r: float) -> float:
        """Quadratic y coefficient of phi's negative, times 2 (V/um^2)."""
        L2 = self.half_width**2
        return 2 * (self.ab * v_b / (2 * L2) - 8 * self.ar * v_r / (9 * L2))


@lru_cache(maxsize=32)
def _double_well_field(d: DoubleWell) -> PotentialField:
    L = d.half_width
    return sampled_field(
        {
            "bottom": lambda x, y: d.ab * (1 - (x**2 + y**2) / (2 * L**2)),
            "resonator_upper": lambda x, y: d.ar * (1 + 2 * y / L) ** 2 / 9,
            "resonator_lower": lambda x, y: d.ar * (1 - 2 * y / L) ** 2 / 9,
            "quartic": lambda x, y: d.aq * (1 - (y / L) ** 4),
            "split_gate_upper": lambda x, y: d.s * (1 + y / L) / 2,
            "split_gate_lower": lambda x, y: d.s * (1 - y / L) / 2,
        },
        L,
        d.spacing,
        bias_map={a: "resonator" for a in RESONATOR_ARMS},
        name="double-well",
    )


def standin_geometry(spacing: float = 0.05, height: float = 0.3) -> ElectrodeGeometry2D:
    """In-plane electrode layout standing in for the measured device.

    x runs along the reservoir channel (reservoir at negative x, unload gate
    at positive x); y runs between the two resonator arms. The trap sits at
    the origin above a bottom-electrode pad roughly 1 um across. The pad is
    split along x by a 0.6 um slot so that the resonator arms, not the pad,
    set the y-curvature; the channel and both pad halves share the
    ``bottom`` bias.
    """
    E = Electrode
    electrodes = (
        E.rect("bottom", -6.0, -1.9, -0.6, 0.6),
        E.rect("bottom_pad_upper", -0.7, 0.7, 0.3, 0.5, bias="bottom"),
        E.rect("bottom_pad_lower", -0.7, 0.7, -0.5, -0.3, bias="bottom"),
        E.rect("split_gate_upper", -1.8, -0.9, 0.3, 4.0),
        E.rect("split_gate_lower", -1.8, -0.9, -4.0, -0.3),
        E.rect("resonator_upper", -0.8, 0.8, 0.55, 4.0, bias="resonator"),
        E.rect("resonator_lower", -0.8, 0.8, -4.0, -0.55, bias="resonator"),
        E.rect("unload", 0.8, 4.0, -0.5, 0.5),
    )
    return ElectrodeGeometry2D(
        domain=(-6.0, 5.0, -4.0, 4.0),
        electrodes=electrodes,
        spacing=spacing,
        height=height,
        trap_region=(-0.75, 0.75, -0.7, 0.7),
        reservoir_point=(-4.0, 0.0),
        name="standin",
    )


@lru_cache(maxsize=4)
def standin_field(spacing: float = 0.05, height: float = 0.3) -> PotentialField:
    """Unit potentials of :func:`standin_geometry` (cached per process)."""
    return solve_unit_potentials(standin_geometry(spacing, height))
