"""Sweep descriptions, their JSON form, and field construction from config."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from ..errors import InputError
from ..modes import DEFAULT_GAMMA
from ..potential.grid import BiasConfig, PotentialField
from ..potential.io import load_field
from ..potential.laplace import Electrode, ElectrodeGeometry2D, solve_unit_potentials
from ..potential.synthetic import DoubleWell, HarmonicBowl, standin_field
from ..response import ResonatorParams

__all__ = [
    "PROTOCOLS",
    "SPLIT_GATE",
    "SweptAxis",
    "SweepSpec",
    "apply_voltages",
    "field_from_config",
    "geometry_from_config",
    "sweepable_names",
]

PROTOCOLS = ("load", "unload", "map2d", "single_electron_cycle")
# Pseudo bias name: moves both split gates together, keeping their difference.
SPLIT_GATE = "split_gate"


@dataclass(frozen=True)
class SweptAxis:
    """One swept bias name with ``steps`` evenly spaced voltages from start to stop."""

    name: str
    start: float
    stop: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 2:
            raise InputError(f"axis {self.name!r}: steps must be an integer >= 2")
        if not (math.isfinite(self.start) and math.isfinite(self.stop)):
            raise InputError(f"axis {self.name!r}: non-finite end points")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "stop", float(self.stop))

    @property
    def values(self) -> list[float]:
        n = self.steps
        return [self.start + (self.stop - self.start) * k / (n - 1) for k in range(n)]

    def to_list(self) -> list:
        return [self.name, self.start, self.stop, self.steps]

    @classmethod
    def from_any(cls, item) -> "SweptAxis":
        if isinstance(item, SweptAxis):
            return item
        if isinstance(item, Mapping):
            return cls(item["name"], item["start"], item["stop"], item["steps"])
        name, start, stop, steps = item
        return cls(name, start, stop, steps)


def apply_voltages(bias: BiasConfig, targets: Mapping[str, float]) -> BiasConfig:
    """Bias with the named voltages replaced; ``split_gate`` moves both gates."""
    new = {}
    for name, v in targets.items():
        if name == SPLIT_GATE:
            diff = bias["split_gate_upper"] - bias["split_gate_lower"]
            new["split_gate_upper"] = v + diff / 2
            new["split_gate_lower"] = v - diff / 2
        else:
            if name not in bias.voltages:
                raise InputError(f"unknown bias name {name!r}")
            new[name] = v
    return bias.replace(**new)


def voltage_of(bias: BiasConfig, name: str) -> float:
    if name == SPLIT_GATE:
        return (bias["split_gate_upper"] + bias["split_gate_lower"]) / 2
    return bias[name]


def sweepable_names(field_: PotentialField) -> set[str]:
    names = {field_.bias_name(e) for e in field_.electrodes}
    if {"split_gate_upper", "split_gate_lower"} <= names:
        names.add(SPLIT_GATE)
    return names


def _steps(items) -> tuple:
    out = []
    for s in items or ():
        if not isinstance(s, Mapping) or not s:
            raise InputError(f"a protocol step must be a non-empty mapping, got {s!r}")
        out.append({str(k): float(v) for k, v in s.items()})
    return tuple(out)


@dataclass(frozen=True)
class SweepSpec:
    """Everything a sweep protocol needs besides the potential field.

    Attributes
    ----------
    swept_electrodes : axes as (name, start, stop, steps); ``split_gate``
        moves both split gates together.
    fixed_bias : voltages of every electrode not being swept.
    protocol : load, unload, map2d or single_electron_cycle.
    unload_return_voltage : after each unload point the unload gate returns
        here before measuring (None measures at the swept voltage).
    resonator, gamma_over_2pi, seed : readout parameters and RNG seed.
    n_e : electron number held fixed in map2d (default 1).
    preload_steps : voltage steps run from an empty trap before the sweep,
        e.g. a split-gate opening that loads a few electrons.
    load_steps, unload_steps : the two step sequences of the single-electron
        cycle. Every step ramps the named voltages in increments of at most
        ``ramp_step`` and updates the occupancy at each increment.
    repetitions : cycle events, alternating load (expect 1) and unload
        (expect 0).
    """

    swept_electrodes: tuple = ()
    fixed_bias: BiasConfig = field(default_factory=lambda: BiasConfig.standard())
    protocol: str = "load"
    unload_return_voltage: float | None = None
    resonator: ResonatorParams = field(default_factory=ResonatorParams)
    gamma_over_2pi: float = DEFAULT_GAMMA / (2 * math.pi)
    seed: int = 0
    mode: str = "differential"
    reservoir_potential: float = 0.0
    n_e: int = 1
    preload_steps: tuple = ()
    load_steps: tuple = ()
    unload_steps: tuple = ()
    repetitions: int = 0
    ramp_step: float = 0.02
    restarts: int = 2
    n_max: int = 100

    def __post_init__(self):
        axes = tuple(SweptAxis.from_any(a) for a in self.swept_electrodes)
        object.__setattr__(self, "swept_electrodes", axes)
        if not isinstance(self.fixed_bias, BiasConfig):
            object.__setattr__(self, "fixed_bias", _bias_from_any(self.fixed_bias))
        if not isinstance(self.resonator, ResonatorParams):
            object.__setattr__(self, "resonator", ResonatorParams.from_dict(self.resonator))
        if self.protocol not in PROTOCOLS:
            raise InputError(f"protocol must be one of {PROTOCOLS}, not {self.protocol!r}")
        if self.protocol == "map2d" and len(axes) not in (1, 2):
            raise InputError("map2d needs one or two swept axes")
        if self.protocol in ("load", "unload") and len(axes) != 1:
            raise InputError(f"the {self.protocol} protocol sweeps exactly one axis")
        if len({a.name for a in axes}) != len(axes):
            raise InputError("an electrode is swept twice")
        if not self.gamma_over_2pi > 0:
            raise InputError("gamma_over_2pi must be positive")
        if not self.ramp_step > 0:
            raise InputError("ramp_step must be positive")
        if self.n_e < 0 or self.repetitions < 0 or self.restarts < 1 or self.n_max < 1:
            raise InputError("n_e and repetitions must be >= 0, restarts and n_max >= 1")
        for name in ("preload_steps", "load_steps", "unload_steps"):
            object.__setattr__(self, name, _steps(getattr(self, name)))
        for s in self.preload_steps + self.load_steps + self.unload_steps:
            apply_voltages(self.fixed_bias, s)  # validates names
        for a in axes:
            apply_voltages(self.fixed_bias, {a.name: a.start})

    @property
    def gamma(self) -> float:
        return 2 * math.pi * self.gamma_over_2pi

    def check_field(self, field_: PotentialField) -> None:
        known = sweepable_names(field_)
        for a in self.swept_electrodes:
            if a.name not in known:
                raise InputError(f"swept electrode {a.name!r} is not in the field "
                                 f"(known: {sorted(known)})")
        field_.voltages(self.fixed_bias)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "swept_electrodes":
                v = [a.to_list() for a in v]
            elif f.name == "fixed_bias":
                v = v.to_dict()
            elif f.name == "resonator":
                v = v.to_dict()
            elif isinstance(v, tuple):
                v = [dict(s) for s in v]
            out[f.name] = v
        return out

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: Mapping) -> "SweepSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown sweep config keys {sorted(unknown)}")
        return cls(**dict(d))

    @classmethod
    def from_json(cls, text: str) -> "SweepSpec":
        return cls.from_dict(json.loads(text))


def _bias_from_any(d) -> BiasConfig:
    if isinstance(d, BiasConfig):
        return d
    if not isinstance(d, Mapping):
        raise InputError(f"cannot read a bias from {d!r}")
    if "voltages" in d:
        return BiasConfig.from_dict(d)
    keys = {"v_b", "v_sg", "v_r", "v_un", "sg_asymmetry", "temperature"}
    if set(d) <= keys:
        return BiasConfig.standard(**d)
    return BiasConfig(d)


def geometry_from_config(d: Mapping) -> ElectrodeGeometry2D:
    """ElectrodeGeometry2D from ``{domain, electrodes: [{name, shape, bias}], ...}``."""
    try:
        electrodes = [Electrode(e["name"], tuple(map(tuple, e["shape"])), e.get("bias"))
                      for e in d["electrodes"]]
        kw = {k: d[k] for k in ("spacing", "height", "outer_boundary", "trap_region",
                                "reservoir_point", "name") if k in d}
        if isinstance(kw.get("spacing"), list):
            kw["spacing"] = tuple(kw["spacing"])
        return ElectrodeGeometry2D(tuple(d["domain"]), electrodes, **kw)
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed geometry config: {exc}") from exc


def field_from_config(d: Mapping | None, base: Path | None = None) -> PotentialField:
    """Build a PotentialField from a ``field`` config entry.

    Kinds: ``standin`` (spacing, height), ``harmonic_bowl`` and
    ``double_well`` (their dataclass fields), ``grids`` (paths to grid files,
    plus trap_region / reservoir_point / bias_map) and ``geometry`` (an
    electrode layout solved on the spot).
    """
    d = dict(d or {"kind": "standin"})
    kind = d.pop("kind", "standin")
    try:
        if kind == "standin":
            return standin_field(**d)
        if kind == "harmonic_bowl":
            return HarmonicBowl(**d).field
        if kind == "double_well":
            return DoubleWell(**d).field
        if kind == "grids":
            paths = [Path(p) if base is None or Path(p).is_absolute() else base / p
                     for p in d.pop("paths")]
            return load_field(paths, **d)
        if kind == "geometry":
            return solve_unit_potentials(geometry_from_config(d))
    except TypeError as exc:
        raise InputError(f"bad parameters for field kind {kind!r}: {exc}") from exc
    raise InputError(f"unknown field kind {kind!r}")
