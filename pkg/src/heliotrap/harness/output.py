"""Run directories: spec echo, per-point CSV, plateau and ridge JSON, log.

Every file is written deterministically (floats in repr form, sorted
electrode columns, no timestamps), so identical runs give identical bytes.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..potential.grid import REQUIRED_BIAS_NAMES
from .config import SweepSpec
from .sweep import CycleReport, MapResult, SweepPoint, SweepResult

__all__ = ["bias_columns", "write_points_csv", "read_points_csv", "write_json",
           "write_log", "write_sweep", "write_map", "write_cycle"]


def _num(v: float) -> str:
    return repr(float(v))


def _clean(obj):
    """JSON-safe copy: NaN and inf become None."""
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_log(path, lines: Iterable[str]) -> Path:
    path = Path(path)
    path.write_text("".join(f"{line}\n" for line in lines))
    return path


def bias_columns(points: Sequence[SweepPoint]) -> list[str]:
    """Required bias names first, then any others in sorted order."""
    names = set()
    for p in points:
        names.update(p.bias.voltages)
    head = [n for n in REQUIRED_BIAS_NAMES if n in names]
    return head + sorted(names - set(head))


def write_points_csv(path, points: Sequence[SweepPoint], axis_names: Sequence[str] = ()) -> Path:
    """``idx, <bias voltages>, [set_<axis>...], n_e, delta_f_hz, omega_min_over_2pi_hz, stable``.

    The bias columns hold the voltages at readout. The ``set_<axis>`` columns
    hold the swept set points, which differ from the readout bias when the
    unload gate returns before measuring.
    """
    path = Path(path)
    cols = bias_columns(points)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["idx", *cols, *(f"set_{a}" for a in axis_names), "n_e", "delta_f_hz",
                    "omega_min_over_2pi_hz", "stable"])
        for p in points:
            sets = list(p.values)[:len(axis_names)]
            sets += [math.nan] * (len(axis_names) - len(sets))
            w.writerow([p.idx, *(_num(p.bias.voltages.get(c, math.nan)) for c in cols),
                        *(_num(v) for v in sets), p.n_e, _num(p.delta_f_hz),
                        _num(p.omega_min_over_2pi_hz), int(bool(p.stable))])
    return path


def read_points_csv(path) -> list[dict]:
    """Rows of a points.csv as dictionaries of floats (ints for idx and n_e)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        d = {k: float(v) for k, v in r.items()}
        d["idx"], d["n_e"], d["stable"] = int(d["idx"]), int(d["n_e"]), bool(d["stable"])
        out.append(d)
    return out


def _axis_names(spec: SweepSpec) -> list[str]:
    return [a.name for a in spec.swept_electrodes]


def _prepare(out_dir, spec: SweepSpec, log: Sequence[str]) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "spec.json", spec.to_dict())
    write_log(out / "log.txt", log)
    return out


def write_sweep(out_dir, result: SweepResult, log: Sequence[str] = ()) -> Path:
    out = _prepare(out_dir, result.spec, log)
    write_points_csv(out / "points.csv", result.points, _axis_names(result.spec))
    write_json(out / "plateaus.json", [p.to_dict() for p in result.plateaus])
    return out


def write_map(out_dir, result: MapResult, log: Sequence[str] = ()) -> Path:
    out = _prepare(out_dir, result.spec, log)
    write_points_csv(out / "points.csv", result.points, _axis_names(result.spec))
    write_json(out / "ridges.json", result.ridges_dict())
    write_json(out / "plateaus.json", [])
    return out


def write_cycle(out_dir, spec: SweepSpec, report: CycleReport, log: Sequence[str] = ()) -> Path:
    out = _prepare(out_dir, spec, log)
    write_points_csv(out / "points.csv", report.points)
    write_json(out / "cycle.json", report.to_dict())
    write_json(out / "plateaus.json", [])
    return out
