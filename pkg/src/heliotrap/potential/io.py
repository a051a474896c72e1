"""Text grid files, one electrode per file.

Layout::

    HELIOTRAP-ALPHA v1
    electrode=<name>
    nx=<int> ny=<int> x0=<float> y0=<float> dx=<float> dy=<float>
    <ny lines of nx values, row j at y = y0 + j*dy>

Values are written with Python's shortest round-trip repr, so save/load is
lossless.
"""
from __future__ import annotations

import os
from pathlib import Path
from typing import Iterable

import numpy as np

from ..errors import GridFormatError
from .grid import GridGeometry, PotentialField, UnitPotentialGrid

__all__ = ["MAGIC", "VERSION", "save_grid", "load_grid", "save_field", "load_field"]

MAGIC = "HELIOTRAP-ALPHA"
VERSION = "v1"
_KEYS = ("nx", "ny", "x0", "y0", "dx", "dy")


def save_grid(grid: UnitPotentialGrid, path) -> Path:
    path = Path(path)
    g = grid.geometry
    lines = [
        f"{MAGIC} {VERSION}",
        f"electrode={grid.electrode}",
        f"nx={g.nx} ny={g.ny} x0={float(g.x0)!r} y0={float(g.y0)!r} "
        f"dx={float(g.dx)!r} dy={float(g.dy)!r}",
    ]
    for row in grid.values.tolist():
        lines.append(" ".join(repr(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def load_grid(path) -> UnitPotentialGrid:
    path = Path(path)
    text = path.read_text(encoding="ascii").splitlines()
    if len(text) < 3:
        raise GridFormatError(f"{path}: truncated header")
    magic = text[0].split()
    if len(magic) != 2 or magic[0] != MAGIC:
        raise GridFormatError(f"{path}: not a {MAGIC} file")
    if magic[1] != VERSION:
        raise GridFormatError(f"{path}: unsupported version {magic[1]!r}")
    if not text[1].startswith("electrode="):
        raise GridFormatError(f"{path}: line 2 must be electrode=<name>")
    name = text[1][len("electrode="):].strip()
    if not name:
        raise GridFormatError(f"{path}: empty electrode name")
    header = {}
    for tok in text[2].split():
        key, sep, val = tok.partition("=")
        if not sep or key not in _KEYS or key in header:
            raise GridFormatError(f"{path}: bad header token {tok!r}")
        header[key] = val
    if set(header) != set(_KEYS):
        raise GridFormatError(f"{path}: header needs {', '.join(_KEYS)}")
    try:
        nx, ny = int(header["nx"]), int(header["ny"])
        x0, y0, dx, dy = (float(header[k]) for k in ("x0", "y0", "dx", "dy"))
    except ValueError as exc:
        raise GridFormatError(f"{path}: bad header value ({exc})") from None
    body = [ln for ln in text[3:] if ln.strip()]
    if len(body) != ny:
        raise GridFormatError(f"{path}: expected {ny} data rows, found {len(body)}")
    try:
        rows = [[float(v) for v in ln.split()] for ln in body]
    except ValueError as exc:
        raise GridFormatError(f"{path}: bad value ({exc})") from None
    if any(len(r) != nx for r in rows):
        raise GridFormatError(f"{path}: every row needs {nx} values")
    values = np.array(rows)
    if not np.all(np.isfinite(values)):
        raise GridFormatError(f"{path}: non-finite values")
    try:
        geom = GridGeometry(nx, ny, x0, y0, dx, dy)
    except ValueError as exc:
        raise GridFormatError(f"{path}: {exc}") from None
    return UnitPotentialGrid(name, geom, values)


def save_field(field: PotentialField, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    return [save_grid(g, directory / f"{name}.alpha") for name, g in field.grids.items()]


def load_field(paths: Iterable[os.PathLike | str], **kwargs) -> PotentialField:
    """Read grid files into a field; keyword arguments go to PotentialField."""
    grids = [load_grid(p) for p in paths]
    return PotentialField(grids, **kwargs)
