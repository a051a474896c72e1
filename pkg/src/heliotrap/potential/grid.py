"""Unit-potential grids, bias configurations and the superposed trap potential."""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np
from scipy.interpolate import RectBivariateSpline

from ..constants import CONSTANTS, UM, PhysicalConstants
from ..errors import DomainError, GeometryError, InputError

__all__ = [
    "GridGeometry",
    "UnitPotentialGrid",
    "BiasConfig",
    "PotentialField",
    "BiasedPotential",
    "REQUIRED_BIAS_NAMES",
    "phi_at",
    "grad_phi_at",
    "hess_phi_at",
    "reservoir_density",
]

REQUIRED_BIAS_NAMES = ("bottom", "split_gate_upper", "split_gate_lower", "resonator", "unload")

# Nodes kept clear of the grid edge when evaluating the interpolant.
INTERIOR_MARGIN = 2

_ALPHA_TOL = 1e-9
_SUM_TOL = 1e-6


@dataclass(frozen=True)
class GridGeometry:
    nx: int
    ny: int
    x0: float
    y0: float
    dx: float
    dy: float

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise GeometryError("nx, ny must be integers")
        if self.nx < 4 or self.ny < 4:
            raise GeometryError(f"grid needs at least 4x4 nodes, got {self.nx}x{self.ny}")
        if not (self.dx > 0 and self.dy > 0):
            raise GeometryError("grid spacing must be positive")
        if not all(math.isfinite(v) for v in (self.x0, self.y0, self.dx, self.dy)):
            raise GeometryError("grid origin and spacing must be finite")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def interior(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the region where evaluation is allowed."""
        m = INTERIOR_MARGIN
        return (
            self.x0 + m * self.dx,
            self.x0 + (self.nx - 1 - m) * self.dx,
            self.y0 + m * self.dy,
            self.y0 + (self.ny - 1 - m) * self.dy,
        )


@dataclass(frozen=True, eq=False)
class UnitPotentialGrid:
    """Dimensionless potential of one electrode held at 1 V, all others grounded.

    ``values`` has shape ``(ny, nx)``: row ``j`` is ``y = y0 + j*dy``.
    """

    electrode: str
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        if not self.electrode or any(ch.isspace() for ch in self.electrode):
            raise InputError(f"invalid electrode name {self.electrode!r}")
        v = np.array(self.values, dtype=float)
        g = self.geometry
        if v.shape != (g.ny, g.nx):
            raise GeometryError(f"values shape {v.shape} does not match grid ({g.ny}, {g.nx})")
        if not np.all(np.isfinite(v)):
            raise InputError(f"non-finite unit potential values for {self.electrode!r}")
        if v.min() < -_ALPHA_TOL or v.max() > 1 + _ALPHA_TOL:
            raise InputError(
                f"unit potential of {self.electrode!r} leaves [0, 1]: "
                f"range [{v.min():.3g}, {v.max():.3g}]"
            )
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class BiasConfig:
    """Electrode voltages (V) by bias name, plus the bath temperature (K)."""

    voltages: Mapping[str, float]
    temperature: float = 1.1

    def __post_init__(self):
        volts = {str(k): float(v) for k, v in dict(self.voltages).items()}
        missing = [n for n in REQUIRED_BIAS_NAMES if n not in volts]
        if missing:
            raise InputError(f"bias config missing voltages for {missing}")
        bad = [k for k, v in volts.items() if not math.isfinite(v)]
        if bad:
            raise InputError(f"non-finite voltages for {bad}")
        object.__setattr__(self, "voltages", MappingProxyType(dict(sorted(volts.items()))))

    @classmethod
    def standard(cls, v_b=0.0, v_sg=0.0, v_r=0.0, v_un=0.0, *, sg_asymmetry=0.0,
                 temperature=1.1, **extra):
        """Bias from the usual four knobs.

        ``sg_asymmetry`` is split symmetrically: the upper split gate gets
        ``v_sg + sg_asymmetry/2`` and the lower one ``v_sg - sg_asymmetry/2``.
        """
        volts = {
            "bottom": v_b,
            "split_gate_upper": v_sg + sg_asymmetry / 2,
            "split_gate_lower": v_sg - sg_asymmetry / 2,
            "resonator": v_r,
            "unload": v_un,
        }
        volts.update(extra)
        return cls(volts, temperature)

    def __getitem__(self, name: str) -> float:
        return self.voltages[name]

    def replace(self, **volts) -> "BiasConfig":
        new = dict(self.voltages)
        new.update(volts)
        return BiasConfig(new, self.temperature)

    def scaled(self, factor: float) -> "BiasConfig":
        return BiasConfig({k: factor * v for k, v in self.voltages.items()}, self.temperature)

    def __add__(self, other: "BiasConfig") -> "BiasConfig":
        names = set(self.voltages) | set(other.voltages)
        return BiasConfig(
            {n: self.voltages.get(n, 0.0) + other.voltages.get(n, 0.0) for n in names},
            self.temperature,
        )

    def key(self) -> tuple:
        return tuple(self.voltages.items())

    def __hash__(self):
        return hash((self.key(), self.temperature))

    def __eq__(self, other):
        if not isinstance(other, BiasConfig):
            return NotImplemented
        return self.key() == other.key() and self.temperature == other.temperature

    def to_dict(self) -> dict:
        return {"voltages": dict(self.voltages), "temperature": self.temperature}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BiasConfig":
        return cls(d["voltages"], d.get("temperature", 1.1))


def _spline(geom: GridGeometry, values: np.ndarray) -> RectBivariateSpline:
    # First spline coordinate is y (rows), second is x.
    return RectBivariateSpline(geom.y, geom.x, values, kx=3, ky=3, s=0)


def _as_points(points) -> tuple[np.ndarray, bool]:
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[-1] != 2:
        raise InputError(f"points must have shape (n, 2), got {p.shape}")
    return p, single


class BiasedPotential:
    """phi(x, y) = sum_k alpha_k(x, y) V_k for one fixed bias, as a C2 bicubic spline.

    Lengths in um, potential in V, gradient in V/um, Hessian in V/um^2.
    """

    def __init__(self, geometry: GridGeometry, node_values: np.ndarray):
        self.geometry = geometry
        self.node_values = node_values
        self._s = _spline(geometry, node_values)
        self.bounds = geometry.interior

    def _check(self, p: np.ndarray):
        xmin, xmax, ymin, ymax = self.bounds
        x, y = p[:, 0], p[:, 1]
        ok = (x >= xmin) & (x <= xmax) & (y >= ymin) & (y <= ymax)
        if not np.all(ok):
            bad = p[~ok][0]
            raise DomainError(
                f"point ({bad[0]:.4g}, {bad[1]:.4g}) um outside evaluation interior "
                f"x in [{xmin:.4g}, {xmax:.4g}], y in [{ymin:.4g}, {ymax:.4g}]"
            )

    def value(self, points):
        p, single = _as_points(points)
        self._check(p)
        out = self._s.ev(p[:, 1], p[:, 0])
        return out[0] if single else out

    def gradient(self, points):
        p, single = _as_points(points)
        self._check(p)
        gx = self._s.ev(p[:, 1], p[:, 0], dx=0, dy=1)
        gy = self._s.ev(p[:, 1], p[:, 0], dx=1, dy=0)
        out = np.stack([gx, gy], axis=-1)
        return out[0] if single else out

    def hessian(self, points):
        p, single = _as_points(points)
        self._check(p)
        yy, xx = p[:, 1], p[:, 0]
        hxx = self._s.ev(yy, xx, dx=0, dy=2)
        hyy = self._s.ev(yy, xx, dx=2, dy=0)
        hxy = self._s.ev(yy, xx, dx=1, dy=1)
        out = np.empty((len(p), 2, 2))
        out[:, 0, 0] = hxx
        out[:, 1, 1] = hyy
        out[:, 0, 1] = hxy
        out[:, 1, 0] = hxy
        return out[0] if single else out


class PotentialField:
    """A set of unit potentials on a shared grid.

    Parameters
    ----------
    grids : iterable of UnitPotentialGrid or mapping name -> UnitPotentialGrid
    bias_map : mapping electrode name -> bias name, optional
        Electrodes that share a voltage (the two resonator arms, say) map to
        the same bias name. Unmapped electrodes use their own name.
    trap_region : (xmin, xmax, ymin, ymax), optional
        Where trapped electrons are allowed to sit (um). Defaults to the full
        evaluation interior.
    reservoir_point : (x, y), optional
        A point inside the electron reservoir, used to locate the barrier.
    """

    def __init__(self, grids, *, bias_map: Mapping[str, str] | None = None,
                 trap_region=None, reservoir_point=None, name: str | None = None):
        if isinstance(grids, Mapping):
            grids = list(grids.values())
        grids = list(grids)
        if not grids:
            raise InputError("a potential field needs at least one electrode")
        by_name: dict[str, UnitPotentialGrid] = {}
        for g in grids:
            if g.electrode in by_name:
                raise GeometryError(f"duplicate electrode {g.electrode!r}")
            by_name[g.electrode] = g
        geom = grids[0].geometry
        for g in grids[1:]:
            if g.geometry != geom:
                raise GeometryError(
                    f"grid geometry mismatch: {g.electrode!r} has {g.geometry}, expected {geom}"
                )
        total = sum(g.values for g in grids)
        if total.max() > 1 + _SUM_TOL:
            raise InputError(f"sum of unit potentials reaches {total.max():.6g} > 1")
        self._grids = dict(sorted(by_name.items()))
        self.geometry = geom
        self.bias_map = MappingProxyType(dict(bias_map or {}))
        unknown = set(self.bias_map) - set(self._grids)
        if unknown:
            raise InputError(f"bias_map names unknown electrodes {sorted(unknown)}")
        self.trap_region = tuple(float(v) for v in trap_region) if trap_region is not None \
            else geom.interior
        self.reservoir_point = tuple(float(v) for v in reservoir_point) \
            if reservoir_point is not None else None
        self.name = name
        self._cache: OrderedDict = OrderedDict()
        self._unit_splines: dict = {}
        self._lock = threading.Lock()

    @property
    def electrodes(self) -> tuple[str, ...]:
        return tuple(self._grids)

    @property
    def grids(self) -> Mapping[str, UnitPotentialGrid]:
        return MappingProxyType(self._grids)

    @property
    def interior(self):
        return self.geometry.interior

    def alpha(self, electrode: str) -> np.ndarray:
        return self._grids[electrode].values

    def bias_name(self, electrode: str) -> str:
        return self.bias_map.get(electrode, electrode)

    def voltages(self, bias: BiasConfig) -> dict[str, float]:
        out = {}
        for name in self._grids:
            key = self.bias_name(name)
            if key not in bias.voltages:
                raise InputError(f"no voltage for electrode {name!r} (bias name {key!r})")
            out[name] = bias.voltages[key]
        return out

    def node_potential(self, bias: BiasConfig) -> np.ndarray:
        """phi sampled on the grid nodes, shape (ny, nx)."""
        v = self.voltages(bias)
        out = np.zeros((self.geometry.ny, self.geometry.nx))
        for name, volts in v.items():
            if volts != 0.0:
                out += volts * self._grids[name].values
        return out

    def potential(self, bias: BiasConfig) -> BiasedPotential:
        key = (bias.key(),)
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        pot = BiasedPotential(self.geometry, self.node_potential(bias))
        with self._lock:
            self._cache[key] = pot
            while len(self._cache) > 256:
                self._cache.popitem(last=False)
        return pot

    def unit_gradient(self, electrode: str, points) -> np.ndarray:
        """Gradient of alpha_k (1/um) at the given points."""
        if electrode not in self._grids:
            raise InputError(f"unknown electrode {electrode!r}")
        with self._lock:
            s = self._unit_splines.get(electrode)
        if s is None:
            s = BiasedPotential(self.geometry, self._grids[electrode].values)
            with self._lock:
                self._unit_splines[electrode] = s
        return s.gradient(points)

    def in_trap(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, xmax, ymin, ymax = self.trap_region
        return (p[:, 0] >= xmin) & (p[:, 0] <= xmax) & (p[:, 1] >= ymin) & (p[:, 1] <= ymax)

    def in_interior(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        xmin, xmax, ymin, ymax = self.interior
        return (p[:, 0] >= xmin) & (p[:, 0] <= xmax) & (p[:, 1] >= ymin) & (p[:, 1] <= ymax)

    def __repr__(self):
        g = self.geometry
        return (f"PotentialField(electrodes={list(self.electrodes)}, "
                f"grid={g.nx}x{g.ny}, dx={g.dx}, dy={g.dy})")


def phi_at(field: PotentialField, bias: BiasConfig, p):
    """Trap potential (V) at point(s) ``p`` in um."""
    return field.potential(bias).value(p)


def grad_phi_at(field: PotentialField, bias: BiasConfig, p):
    """Gradient of the trap potential (V/um)."""
    return field.potential(bias).gradient(p)


def hess_phi_at(field: PotentialField, bias: BiasConfig, p):
    """Hessian of the trap potential (V/um^2)."""
    return field.potential(bias).hessian(p)


def reservoir_density(v_b: float, depth: float,
                      constants: PhysicalConstants = CONSTANTS) -> float:
    """Electron sheet density in the reservoir channel, parallel-plate model.

    Parameters
    ----------
    v_b : float
        Bottom electrode bias (V).
    depth : float
        Helium depth above the bottom electrode (um).

    Returns
    -------
    float
        Density in electrons per cm^2, carrying the sign of ``v_b``.
    """
    if not depth > 0:
        raise InputError(f"depth must be positive, got {depth}")
    n_m2 = constants.eps_he * constants.eps0 * v_b / (constants.e * depth * UM)
    return n_m2 * 1e-4
