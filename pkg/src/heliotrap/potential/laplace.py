"""Finite-difference unit potentials for in-plane electrode layouts.

Each electrode region is a Dirichlet boundary: alpha_k = 1 on electrode k and
0 on every other electrode. The gaps between electrodes are filled by the
discrete Laplace equation, solved with red-black SOR. When ``height > 0`` the
plane solution is carried up to the electron plane through the exact
half-space Poisson kernel, integrated over each grid cell. Only there can the
potential have in-plane extrema, i.e. an actual trap.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from scipy.signal import fftconvolve

from ..errors import ConvergenceError, GeometryError, InputError
from .grid import GridGeometry, PotentialField, UnitPotentialGrid

__all__ = ["Electrode", "ElectrodeGeometry2D", "SolveInfo", "solve_unit_potentials",
           "poisson_kernel", "lift_to_height"]


@dataclass(frozen=True)
class Electrode:
    """An electrode region in the electrode plane.

    ``shape`` is a polygon (three or more vertices) or a segment (two
    vertices), in um. ``bias`` names the voltage the electrode takes from a
    BiasConfig; it defaults to the electrode name.
    """

    name: str
    shape: tuple
    bias: str | None = None

    def __post_init__(self):
        pts = tuple(tuple(float(c) for c in p) for p in self.shape)
        if len(pts) < 2 or any(len(p) != 2 for p in pts):
            raise GeometryError(f"electrode {self.name!r}: need >= 2 (x, y) vertices")
        object.__setattr__(self, "shape", pts)

    @property
    def geometry(self):
        if len(self.shape) == 2:
            return shapely.LineString(self.shape)
        return shapely.Polygon(self.shape)

    @classmethod
    def rect(cls, name, xmin, xmax, ymin, ymax, bias=None):
        return cls(name, ((xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)), bias)


@dataclass(frozen=True)
class ElectrodeGeometry2D:
    """Domain, electrodes and grid resolution for the Laplace solve.

    Parameters
    ----------
    domain : (xmin, xmax, ymin, ymax) in um
    electrodes : sequence of Electrode
    spacing : float or (dx, dy)
        Grid spacing in um; the domain must hold a whole number of cells.
    height : float
        Height of the electron plane above the electrode plane (um). Zero
        returns the in-plane solution itself.
    outer_boundary : {"grounded", "insulating"}
        Dirichlet 0 or zero normal derivative on the domain edge.
    trap_region, reservoir_point :
        Passed through to the resulting PotentialField.
    """

    domain: tuple
    electrodes: tuple
    spacing: float | tuple = 0.05
    height: float = 0.0
    outer_boundary: str = "grounded"
    trap_region: tuple | None = None
    reservoir_point: tuple | None = None
    name: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(float(v) for v in self.domain))
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        xmin, xmax, ymin, ymax = self.domain
        if not (xmax > xmin and ymax > ymin):
            raise GeometryError(f"empty domain {self.domain}")
        if self.outer_boundary not in ("grounded", "insulating"):
            raise GeometryError(f"unknown outer boundary {self.outer_boundary!r}")
        if self.height < 0:
            raise GeometryError("height must be >= 0")
        if not self.electrodes:
            raise GeometryError("geometry needs at least one electrode")
        names = [e.name for e in self.electrodes]
        if len(set(names)) != len(names):
            raise GeometryError(f"duplicate electrode names in {names}")
        self.grid()  # validates spacing against the domain

    @property
    def dxdy(self) -> tuple[float, float]:
        if isinstance(self.spacing, (tuple, list)):
            return float(self.spacing[0]), float(self.spacing[1])
        return float(self.spacing), float(self.spacing)

    def grid(self) -> GridGeometry:
        xmin, xmax, ymin, ymax = self.domain
        dx, dy = self.dxdy
        cells_x, cells_y = (xmax - xmin) / dx, (ymax - ymin) / dy
        if abs(cells_x - round(cells_x)) > 1e-6 or abs(cells_y - round(cells_y)) > 1e-6:
            raise GeometryError(f"spacing {self.spacing} does not divide domain {self.domain}")
        return GridGeometry(int(round(cells_x)) + 1, int(round(cells_y)) + 1, xmin, ymin, dx, dy)

    def bias_map(self) -> dict[str, str]:
        return {e.name: e.bias for e in self.electrodes if e.bias and e.bias != e.name}


@dataclass(frozen=True)
class SolveInfo:
    iterations: int
    residual: float
    omega: float


def _electrode_masks(geom: ElectrodeGeometry2D, g: GridGeometry) -> dict[str, np.ndarray]:
    xmin, xmax, ymin, ymax = geom.domain
    box = shapely.box(xmin, ymin, xmax, ymax)
    tol = 1e-9 * min(g.dx, g.dy)
    shapes = {}
    for e in geom.electrodes:
        s = e.geometry
        if not s.is_valid:
            raise GeometryError(f"electrode {e.name!r} has an invalid shape")
        if not box.buffer(tol).covers(s):
            raise GeometryError(f"electrode {e.name!r} extends outside the domain")
        shapes[e.name] = s
    names = list(shapes)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if shapes[a].intersection(shapes[b]).area > 0:
                raise GeometryError(f"electrodes {a!r} and {b!r} overlap")
    X, Y = np.meshgrid(g.x, g.y)
    pts = shapely.points(X.ravel(), Y.ravel())
    masks = {}
    for name, s in shapes.items():
        m = shapely.dwithin(s, pts, tol).reshape(X.shape)
        if not m.any():
            raise GeometryError(f"electrode {name!r} covers no grid node; refine the grid")
        masks[name] = m
    claimed = sum(m.astype(int) for m in masks.values())
    if claimed.max() > 1:
        j, i = np.argwhere(claimed > 1)[0]
        owners = [n for n, m in masks.items() if m[j, i]]
        raise GeometryError(f"electrodes {owners} share grid node ({g.x[i]:.4g}, {g.y[j]:.4g})")
    return masks


def _sor(u: np.ndarray, free: np.ndarray, g: GridGeometry, *, tol: float, max_iter: int,
         omega: float | None, check_every: int = 10) -> SolveInfo:
    """Red-black SOR on a stack of problems sharing one set of fixed nodes."""
    cx, cy = 1.0 / g.dx**2, 1.0 / g.dy**2
    denom = 2 * (cx + cy)
    if omega is None:
        rho = (cx * math.cos(math.pi / (g.nx - 1)) + cy * math.cos(math.pi / (g.ny - 1))) / (cx + cy)
        omega = 2.0 / (1.0 + math.sqrt(1.0 - rho * rho))
    jj, ii = np.indices((g.ny, g.nx))
    red = free & ((ii + jj) % 2 == 0)
    black = free & ((ii + jj) % 2 == 1)

    def neighbour_mean(a):
        # "reflect" ghosts give the Neumann stencil on free edge nodes;
        # grounded edges are fixed, so their ghosts are never read.
        p = np.pad(a, ((0, 0), (1, 1), (1, 1)), mode="reflect")
        return (cx * (p[:, 1:-1, 2:] + p[:, 1:-1, :-2]) + cy * (p[:, 2:, 1:-1] + p[:, :-2, 1:-1])) / denom

    if not free.any():
        return SolveInfo(0, 0.0, omega)
    residual = math.inf
    for it in range(1, max_iter + 1):
        for colour in (red, black):
            avg = neighbour_mean(u)
            u[:, colour] += omega * (avg[:, colour] - u[:, colour])
        if it % check_every == 0 or it == max_iter:
            residual = float(np.max(np.abs(neighbour_mean(u)[:, free] - u[:, free])))
            if residual <= tol:
                return SolveInfo(it, residual, omega)
    raise ConvergenceError(
        f"SOR did not reach residual {tol:g} in {max_iter} iterations (final {residual:.3g})",
        residual=residual,
    )


def poisson_kernel(g: GridGeometry, height: float) -> np.ndarray:
    """Cell-integrated half-space Poisson kernel, shape (2ny-1, 2nx-1).

    Weight (m, n) is the fraction of the solid angle seen from height ``h``
    above the origin that is subtended by the grid cell centred at
    (n*dx, m*dy). All weights are positive and sum to less than one.
    """
    h = float(height)
    xs = (np.arange(-(g.nx - 1), g.nx) * g.dx)
    ys = (np.arange(-(g.ny - 1), g.ny) * g.dy)
    xe = np.concatenate([xs - g.dx / 2, [xs[-1] + g.dx / 2]])
    ye = np.concatenate([ys - g.dy / 2, [ys[-1] + g.dy / 2]])
    X, Y = np.meshgrid(xe, ye)
    G = np.arctan(X * Y / (h * np.sqrt(X**2 + Y**2 + h**2))) / (2 * math.pi)
    return G[1:, 1:] - G[1:, :-1] - G[:-1, 1:] + G[:-1, :-1]


def lift_to_height(values: np.ndarray, g: GridGeometry, height: float,
                   kernel: np.ndarray | None = None) -> np.ndarray:
    """Potential at ``height`` above a plane whose potential is ``values`` on the
    grid and zero outside it."""
    if kernel is None:
        kernel = poisson_kernel(g, height)
    out = fftconvolve(values, kernel, mode="same")
    return np.clip(out, 0.0, 1.0)


def solve_unit_potentials(geom: ElectrodeGeometry2D, *, tol: float = 1e-8,
                          max_iter: int = 10**6, omega: float | None = None,
                          return_info: bool = False):
    """Unit potential of every electrode in ``geom``.

    Returns
    -------
    PotentialField
        One grid per electrode, in electrode-name order. With
        ``return_info=True`` a ``(field, SolveInfo)`` pair.

    Raises
    ------
    GeometryError
        Overlapping electrodes, electrodes outside the domain, or electrodes
        missing the grid entirely.
    ConvergenceError
        Residual above ``tol`` after ``max_iter`` iterations; carries the
        final residual.
    """
    if not tol > 0:
        raise InputError("tol must be positive")
    g = geom.grid()
    masks = _electrode_masks(geom, g)
    names = sorted(masks)
    fixed = np.zeros((g.ny, g.nx), dtype=bool)
    for m in masks.values():
        fixed |= m
    if geom.outer_boundary == "grounded":
        fixed[0, :] = fixed[-1, :] = True
        fixed[:, 0] = fixed[:, -1] = True
    u = np.zeros((len(names), g.ny, g.nx))
    for k, name in enumerate(names):
        u[k][masks[name]] = 1.0
    info = _sor(u, ~fixed, g, tol=tol, max_iter=max_iter, omega=omega)
    if geom.height > 0:
        kernel = poisson_kernel(g, geom.height)
        u = np.stack([lift_to_height(u[k], g, geom.height, kernel) for k in range(len(names))])
    grids = [UnitPotentialGrid(name, g, u[k]) for k, name in enumerate(names)]
    fld = PotentialField(grids, bias_map=geom.bias_map(), trap_region=geom.trap_region,
                         reservoir_point=geom.reservoir_point, name=geom.name)
    return (fld, info) if return_info else fld
