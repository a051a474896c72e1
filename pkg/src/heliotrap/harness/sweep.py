"""Voltage-sweep protocols: loading, stateful unloading, fixed-N maps and
the single-electron load/unload cycle, plus plateau detection."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..equilibrium import (ElectronConfiguration, barrier_potential, load_trap, minimize,
                           occupancy_step)
from ..errors import HeliotrapError, InputError
from ..modes import ResonatorMode, couplings, eigenmodes
from ..potential.grid import BiasConfig, PotentialField
from ..response import frequency_shift
from .config import SweepSpec, apply_voltages, voltage_of

__all__ = [
    "SweepPoint",
    "Plateau",
    "SweepResult",
    "MapResult",
    "CycleEvent",
    "CycleReport",
    "measure",
    "run_sweep",
    "detect_plateaus",
    "single_electron_cycle",
    "map2d",
    "ridge",
]

_MAP_RIDGE_OFFSET = 0.05  # V added to the omega_e-minimum ridge for comparison plots
_PINCH_BISECTIONS = 20
_FLAT_ROW_RTOL = 1e-9


@dataclass(frozen=True)
class SweepPoint:
    """One measured sweep point.

    ``values`` are the swept-axis set points; ``bias`` is the bias at which
    the resonator was read out (they differ when the unload gate returns).
    Failed points carry ``error`` and a NaN frequency shift.
    """

    idx: int
    values: tuple
    bias: BiasConfig
    n_e: int
    delta_f_hz: float
    omega_min_over_2pi_hz: float
    stable: bool
    omegas_over_2pi_hz: tuple = ()
    g_over_2pi_hz: tuple = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "idx": self.idx,
            "values": list(self.values),
            "bias": self.bias.to_dict(),
            "n_e": self.n_e,
            "delta_f_hz": self.delta_f_hz,
            "omega_min_over_2pi_hz": self.omega_min_over_2pi_hz,
            "stable": self.stable,
            "omegas_over_2pi_hz": list(self.omegas_over_2pi_hz),
            "g_over_2pi_hz": list(self.g_over_2pi_hz),
            "error": self.error,
        }


@dataclass(frozen=True)
class Plateau:
    """A run of points with one electron number and no Δf jump.

    ``interval`` spans the first swept-axis value over the run.
    """

    n_e: int | None
    start: int
    stop: int
    interval: tuple
    mean_delta_f_hz: float

    def to_dict(self) -> dict:
        return {"n_e": self.n_e, "start": self.start, "stop": self.stop,
                "interval": list(self.interval), "mean_delta_f_hz": self.mean_delta_f_hz}


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    points: tuple
    plateaus: tuple = ()

    @property
    def delta_f(self) -> np.ndarray:
        return np.array([p.delta_f_hz for p in self.points])

    @property
    def n_e(self) -> np.ndarray:
        return np.array([p.n_e for p in self.points])

    @property
    def axis_values(self) -> np.ndarray:
        return np.array([p.values[0] if p.values else p.idx for p in self.points])

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "points": [p.to_dict() for p in self.points],
                "plateaus": [p.to_dict() for p in self.plateaus]}


def _empty_point(idx, values, bias, n=0, error=None) -> SweepPoint:
    df = 0.0 if n == 0 and error is None else math.nan
    return SweepPoint(idx, tuple(values), bias, n, df, math.nan, error is None, error=error)


def measure(field_: PotentialField, bias: BiasConfig, cfg: ElectronConfiguration,
            spec: SweepSpec, idx: int = 0, values=()) -> SweepPoint:
    """Modes, couplings and frequency shift of ``cfg`` read out at ``bias``."""
    if cfg.n == 0:
        return _empty_point(idx, values, bias)
    spectrum = eigenmodes(cfg, field_, bias, spec.gamma)
    spectrum = couplings(spectrum, cfg, field_, ResonatorMode(spec.mode),
                         spec.resonator.c_total, spec.resonator.gamma_scale)
    df = frequency_shift(spectrum, spec.resonator)
    tau = 2 * math.pi
    return SweepPoint(idx, tuple(values), bias, cfg.n, float(df),
                      float(spectrum.omegas[0] / tau), spectrum.stable,
                      tuple((spectrum.omegas / tau).tolist()),
                      tuple((spectrum.couplings / tau).tolist()))


def _error_text(exc: Exception) -> str:
    return f"{type(exc).__name__}: {exc}"


class _State:
    """Bias and trapped population carried through a stateful protocol."""

    def __init__(self, field_: PotentialField, spec: SweepSpec):
        self.field = field_
        self.spec = spec
        self.bias = spec.fixed_bias
        self.n = 0
        self.cfg = ElectronConfiguration.empty()

    def step(self, bias: BiasConfig):
        s = self.spec
        self.n, self.cfg = occupancy_step(self.field, bias, self.n, self.cfg,
                                          s.reservoir_potential, seed=s.seed,
                                          restarts=s.restarts, n_max=s.n_max)
        self.bias = bias

    def _is_open(self, bias: BiasConfig) -> bool:
        phi_s = barrier_potential(self.field, bias)
        return phi_s is None or phi_s >= self.spec.reservoir_potential

    def ramp(self, targets: dict):
        """Move the named voltages linearly to ``targets``, updating occupancy.

        When the barrier closes between two increments, the crossing is
        bisected and the trap is filled right at pinch-off, so the captured
        number does not depend on ``ramp_step``.
        """
        start = {k: voltage_of(self.bias, k) for k in targets}
        span = max(abs(targets[k] - start[k]) for k in targets)
        m = max(1, math.ceil(span / self.spec.ramp_step - 1e-9))

        def bias_at(t):
            if t == 1.0:
                return apply_voltages(self.bias, dict(targets))
            return apply_voltages(self.bias, {k: start[k] + (targets[k] - start[k]) * t
                                              for k in targets})

        was_open = self._is_open(self.bias)
        t_prev = 0.0
        for j in range(1, m + 1):
            t = 1.0 if j == m else j / m
            b = bias_at(t)
            is_open = self._is_open(b)
            if was_open and not is_open:
                lo, hi = t_prev, t
                for _ in range(_PINCH_BISECTIONS):
                    mid = 0.5 * (lo + hi)
                    if self._is_open(bias_at(mid)):
                        lo = mid
                    else:
                        hi = mid
                if lo > t_prev:
                    self.step(bias_at(lo))
            self.step(b)
            was_open, t_prev = is_open, t

    def run_steps(self, steps):
        for s in steps:
            self.ramp(s)


def _load_point(field_, spec: SweepSpec, idx, value) -> SweepPoint:
    axis = spec.swept_electrodes[0]
    bias = apply_voltages(spec.fixed_bias, {axis.name: value})
    try:
        phi_s = barrier_potential(field_, bias)
        if phi_s is not None and phi_s < spec.reservoir_potential:
            return _empty_point(idx, (value,), bias)
        _, cfg = load_trap(field_, bias, spec.reservoir_potential, n_max=spec.n_max,
                           seed=spec.seed, restarts=spec.restarts)
        return measure(field_, bias, cfg, spec, idx, (value,))
    except HeliotrapError as exc:
        return _empty_point(idx, (value,), bias, -1, _error_text(exc))


def _map_row(field_, spec: SweepSpec, row_bias: BiasConfig, axis, start_idx: int,
             prefix=()) -> list[SweepPoint]:
    """Fixed-N points along one axis, warm-starting each point from the last."""
    out = []
    prev = None
    for k, v in enumerate(axis.values):
        bias = apply_voltages(row_bias, {axis.name: v})
        values = tuple(prefix) + (v,)
        try:
            cfg = minimize(field_, bias, spec.n_e, spec.seed, restarts=spec.restarts,
                           initial=prev)
            prev = np.array(cfg.positions) if cfg.n else None
            out.append(measure(field_, bias, cfg, spec, start_idx + k, values))
        except HeliotrapError as exc:
            prev = None
            out.append(_empty_point(start_idx + k, values, bias, spec.n_e, _error_text(exc)))
    return out


def _initial_state(field_, spec: SweepSpec, n_default: int) -> _State:
    st = _State(field_, spec)
    if spec.preload_steps:
        st.run_steps(spec.preload_steps)
    elif n_default > 0:
        st.cfg = minimize(field_, st.bias, n_default, spec.seed, restarts=spec.restarts)
        st.n = st.cfg.n
    return st


def _unload_points(field_, spec: SweepSpec, log: list) -> list[SweepPoint]:
    axis = spec.swept_electrodes[0]
    st = _initial_state(field_, spec, spec.n_e)
    log.append(f"initial occupancy {st.n}")
    points = []
    for idx, v in enumerate(axis.values):
        try:
            st.ramp({axis.name: v})
            if spec.unload_return_voltage is not None:
                st.ramp({"unload": spec.unload_return_voltage})
            points.append(measure(field_, st.bias, st.cfg, spec, idx, (v,)))
        except HeliotrapError as exc:
            points.append(_empty_point(idx, (v,), st.bias, st.n, _error_text(exc)))
    return points


def run_sweep(spec: SweepSpec, field_: PotentialField, *, threads: int = 1,
              log: list | None = None) -> SweepResult:
    """Run a one-axis sweep protocol and measure Δf at every point.

    ``load`` fills the trap from empty at every point (no electrons enter
    while the barrier sits below the reservoir level), so points are
    independent and may run on ``threads`` workers. ``unload`` carries the
    population forward: electrons only leave, at any increment of the voltage
    ramp between points, and the unload gate optionally returns to
    ``unload_return_voltage`` before each readout. ``map2d`` with one axis
    holds ``n_e`` fixed. Per-point failures are recorded, never raised.
    """
    spec.check_field(field_)
    log = [] if log is None else log
    if spec.protocol == "single_electron_cycle":
        raise InputError("use single_electron_cycle() for the cycle protocol")
    if spec.protocol == "map2d":
        if len(spec.swept_electrodes) != 1:
            raise InputError("run_sweep handles one axis; use map2d() for two")
        points = _map_row(field_, spec, spec.fixed_bias, spec.swept_electrodes[0], 0)
    elif spec.protocol == "load":
        values = spec.swept_electrodes[0].values
        jobs = list(enumerate(values))
        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                points = list(ex.map(lambda iv: _load_point(field_, spec, *iv), jobs))
        else:
            points = [_load_point(field_, spec, i, v) for i, v in jobs]
    else:
        points = _unload_points(field_, spec, log)
    for p in points:
        log.append(f"point {p.idx} values={list(p.values)} n_e={p.n_e} "
                   f"delta_f_hz={p.delta_f_hz!r}" + (f" error={p.error}" if p.error else ""))
    plateaus = ()
    if len(points) >= 4:
        plateaus = tuple(detect_plateaus(points))
    return SweepResult(spec, tuple(points), plateaus)


def _default_threshold(df: np.ndarray) -> float | None:
    d = np.abs(np.diff(df))
    med = float(np.median(d)) if len(d) else 0.0
    if med > 0:
        return 3 * med
    positive = d[d > 0]
    if len(positive):
        return 0.5 * float(positive.min())
    return None


def detect_plateaus(result, threshold_hz: float | None = None, *, n_e=None,
                    values=None) -> list[Plateau]:
    """Split a Δf sequence into plateaus of constant electron number.

    Parameters
    ----------
    result : SweepResult, sequence of SweepPoint, or array of Δf (Hz)
    threshold_hz : float, optional
        Jumps larger than this start a new plateau. Defaults to three times
        the median absolute point-to-point difference (half the smallest
        non-zero difference when the median is zero).
    n_e, values : optional arrays used with a plain Δf array; ``n_e`` labels
        plateaus and also splits them, ``values`` gives the voltage intervals.

    Neighbouring runs with the same recorded occupancy are merged, so with
    occupancies present the plateau count equals the number of occupancy
    runs traversed. Points with a NaN Δf are skipped.
    """
    if isinstance(result, SweepResult):
        result = result.points
    if len(result) and isinstance(result[0], SweepPoint):
        pts = list(result)
        df = np.array([p.delta_f_hz for p in pts])
        n_arr = np.array([p.n_e for p in pts])
        v_arr = np.array([p.values[0] if p.values else p.idx for p in pts], dtype=float)
        idx = np.array([p.idx for p in pts])
    else:
        df = np.asarray(result, dtype=float)
        n_arr = None if n_e is None else np.asarray(n_e)
        v_arr = np.arange(len(df), dtype=float) if values is None else np.asarray(values, float)
        idx = np.arange(len(df))
    if threshold_hz is not None and not threshold_hz > 0:
        raise InputError("threshold_hz must be positive")
    if len(df) < 4:
        raise InputError("plateau detection needs at least 4 points")
    ok = np.isfinite(df)
    df, v_arr, idx = df[ok], v_arr[ok], idx[ok]
    if n_arr is not None:
        n_arr = n_arr[ok]
    if len(df) == 0:
        return []
    thr = _default_threshold(df) if threshold_hz is None else threshold_hz
    runs = [[0]]
    for i in range(1, len(df)):
        jump = thr is not None and abs(df[i] - df[i - 1]) > thr
        changed = n_arr is not None and n_arr[i] != n_arr[i - 1]
        if jump or changed:
            runs.append([i])
        else:
            runs[-1].append(i)
    if n_arr is not None:
        merged = [runs[0]]
        for r in runs[1:]:
            if n_arr[r[0]] == n_arr[merged[-1][0]]:
                merged[-1].extend(r)
            else:
                merged.append(r)
        runs = merged
    out = []
    for r in runs:
        label = int(n_arr[r[0]]) if n_arr is not None else None
        out.append(Plateau(label, int(idx[r[0]]), int(idx[r[-1]]),
                           (float(v_arr[r[0]]), float(v_arr[r[-1]])), float(np.mean(df[r]))))
    return out


# -- single-electron cycle ------------------------------------------------------

@dataclass(frozen=True)
class CycleEvent:
    index: int
    kind: str
    expected_n: int
    point: SweepPoint

    @property
    def ok(self) -> bool:
        return self.point.error is None and self.point.n_e == self.expected_n

    def to_dict(self) -> dict:
        return {"index": self.index, "kind": self.kind, "expected_n": self.expected_n,
                "ok": self.ok, **self.point.to_dict()}


@dataclass(frozen=True)
class CycleReport:
    """Outcome of alternating load and unload events."""

    events: tuple = ()

    @property
    def repetitions(self) -> int:
        return len(self.events)

    @property
    def error_count(self) -> int:
        return sum(not e.ok for e in self.events)

    @property
    def failed(self) -> list[int]:
        return [e.index for e in self.events if not e.ok]

    @property
    def loaded_delta_f(self) -> np.ndarray:
        return np.array([e.point.delta_f_hz for e in self.events if e.kind == "load"])

    @property
    def empty_delta_f(self) -> np.ndarray:
        return np.array([e.point.delta_f_hz for e in self.events if e.kind == "unload"])

    @property
    def points(self) -> tuple:
        return tuple(e.point for e in self.events)

    def to_dict(self) -> dict:
        return {"repetitions": self.repetitions, "error_count": self.error_count,
                "failed": self.failed, "events": [e.to_dict() for e in self.events]}


def single_electron_cycle(spec: SweepSpec, field_: PotentialField,
                          repetitions: int | None = None, *,
                          log: list | None = None) -> CycleReport:
    """Alternate the load and unload step sequences and check the occupancy.

    Event k runs ``spec.load_steps`` for even k (one electron expected) and
    ``spec.unload_steps`` for odd k (empty trap expected), then reads out at
    the resulting bias. The trap starts empty, or as left by
    ``spec.preload_steps``. Events whose occupancy differs from the
    expectation count as errors; nothing is raised for a bias point that
    never traps exactly one electron.
    """
    spec.check_field(field_)
    reps = spec.repetitions if repetitions is None else int(repetitions)
    if reps < 0:
        raise InputError("repetitions must be >= 0")
    log = [] if log is None else log
    st = _State(field_, spec)
    events = []
    try:
        st.run_steps(spec.preload_steps)
    except HeliotrapError as exc:
        log.append(f"preload failed: {_error_text(exc)}")
    for k in range(reps):
        kind, steps, expected = (("load", spec.load_steps, 1) if k % 2 == 0
                                 else ("unload", spec.unload_steps, 0))
        try:
            st.run_steps(steps)
            point = measure(field_, st.bias, st.cfg, spec, k)
        except HeliotrapError as exc:
            point = _empty_point(k, (), st.bias, st.n, _error_text(exc))
        ev = CycleEvent(k, kind, expected, point)
        events.append(ev)
        log.append(f"event {k} {kind} n_e={point.n_e} expected={expected} "
                   f"delta_f_hz={point.delta_f_hz!r} {'ok' if ev.ok else 'FAILED'}")
    return CycleReport(tuple(events))


# -- two-axis maps --------------------------------------------------------------

def ridge(values: Sequence[float], data: np.ndarray) -> np.ndarray:
    """Position of the per-row minimum of ``data`` along the columns.

    Rows whose minimum sits on the grid edge (or that hold NaNs around it)
    give NaN, as do rows flat to within roundoff, where any minimum is noise.
    Interior minima are refined with a three-point parabola.
    """
    x = np.asarray(values, dtype=float)
    out = np.full(data.shape[0], np.nan)
    for r, row in enumerate(np.asarray(data, dtype=float)):
        if not np.isfinite(row).any():
            continue
        if np.nanmax(row) - np.nanmin(row) <= _FLAT_ROW_RTOL * np.nanmax(np.abs(row)):
            continue
        i = int(np.nanargmin(row))
        if i == 0 or i == len(row) - 1:
            continue
        y0, y1, y2 = row[i - 1], row[i], row[i + 1]
        if not np.isfinite([y0, y1, y2]).all():
            continue
        curv = y0 - 2 * y1 + y2
        shift = 0.5 * (y0 - y2) / curv if curv > 0 else 0.0
        out[r] = x[i] + shift * (x[i + 1] - x[i])
    return out


def _monotone_together(a: np.ndarray, b: np.ndarray) -> bool:
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 2:
        return False
    da, db = np.diff(a[ok]), np.diff(b[ok])
    sa = np.sign(da[np.abs(da) > 1e-12])
    sb = np.sign(db[np.abs(db) > 1e-12])
    if len(sa) == 0 and len(sb) == 0:
        return True
    return bool(len(set(sa)) <= 1 and len(set(sb)) <= 1 and set(sa) == set(sb))


@dataclass(frozen=True)
class MapResult:
    """Fixed-N readout over a grid of two swept voltages.

    Rows follow the first swept axis, columns the second. Ridges give, per
    row, the column voltage of minimum omega_e and of most negative Δf.
    """

    spec: SweepSpec
    row_values: tuple
    col_values: tuple
    points: tuple
    delta_f: np.ndarray = field(repr=False)
    omega_min: np.ndarray = field(repr=False)
    omega_ridge: np.ndarray = field(repr=False)
    delta_f_ridge: np.ndarray = field(repr=False)

    @property
    def omega_ridge_offset(self) -> np.ndarray:
        return self.omega_ridge + _MAP_RIDGE_OFFSET

    @property
    def ridges_track(self) -> bool:
        """Both ridges move monotonically, in the same direction, along the rows."""
        return _monotone_together(self.omega_ridge, self.delta_f_ridge)

    def row(self, r: int) -> tuple:
        n = len(self.col_values)
        return self.points[r * n:(r + 1) * n]

    def ridges_dict(self) -> dict:
        fix = lambda a: [None if not np.isfinite(v) else float(v) for v in a]
        return {"row_axis": self.spec.swept_electrodes[0].name,
                "col_axis": self.spec.swept_electrodes[-1].name,
                "row_values": list(self.row_values),
                "omega_min_ridge": fix(self.omega_ridge),
                "omega_min_ridge_offset": fix(self.omega_ridge_offset),
                "delta_f_ridge": fix(self.delta_f_ridge),
                "ridges_track": self.ridges_track}


def map2d(spec: SweepSpec, field_: PotentialField, *, threads: int = 1,
          log: list | None = None) -> MapResult:
    """Δf and lowest mode frequency over a two-voltage grid at fixed ``n_e``.

    Each row is computed exactly as :func:`run_sweep` computes a one-axis
    map2d sweep with the row voltage fixed, so any row can be reproduced on
    its own. Rows are independent and may run on ``threads`` workers.
    """
    spec.check_field(field_)
    if spec.protocol != "map2d":
        raise InputError("map2d() needs protocol 'map2d'")
    log = [] if log is None else log
    axes = spec.swept_electrodes
    if len(axes) == 1:
        rows = [(None, spec.fixed_bias)]
    else:
        rows = [(v, apply_voltages(spec.fixed_bias, {axes[0].name: v})) for v in axes[0].values]
    inner = axes[-1]
    ncol = inner.steps

    def do_row(r):
        v, b = rows[r]
        return _map_row(field_, spec, b, inner, r * ncol, () if v is None else (v,))

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            row_points = list(ex.map(do_row, range(len(rows))))
    else:
        row_points = [do_row(r) for r in range(len(rows))]
    points = tuple(p for rp in row_points for p in rp)
    df = np.array([[p.delta_f_hz for p in rp] for rp in row_points])
    om = np.array([[p.omega_min_over_2pi_hz if p.stable else math.nan for p in rp]
                   for rp in row_points])
    for p in points:
        log.append(f"point {p.idx} values={list(p.values)} n_e={p.n_e} "
                   f"delta_f_hz={p.delta_f_hz!r}" + (f" error={p.error}" if p.error else ""))
    row_vals = tuple(v for v, _ in rows) if len(axes) == 2 else (math.nan,)
    return MapResult(spec, row_vals, tuple(inner.values), points, df, om,
                     ridge(inner.values, om), ridge(inner.values, df))
