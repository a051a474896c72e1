"""Electron equilibria in a biased trap and trap occupancy against a reservoir.

Energies cross the API in joules and lengths in um. Internally the minimiser
works in eV and um, where forces and curvatures are O(0.01 - 1) and fixed
absolute tolerances behave.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

from .constants import CONSTANTS, PhysicalConstants
from .errors import DomainError, InputError, SingularityError, UnconfinedError
from .potential.grid import BiasConfig, BiasedPotential, PotentialField, reservoir_density

__all__ = [
    "ElectronConfiguration",
    "total_energy",
    "energy_and_gradient",
    "energy_hessian",
    "minimize",
    "load_trap",
    "chemical_potential",
    "barrier_potential",
    "trap_center",
    "occupancy_step",
    "D_MIN_UM",
    "DEFAULT_GTOL",
]

D_MIN_UM = 1e-3
# Force tolerance in eV/um, i.e. relative to the pull of a 1 V/um field on one electron.
DEFAULT_GTOL = 1e-12
_MIN_SEPARATION = 1e-4
_CHANNEL_DEPTH_UM = 0.7
# Length (um) below which force-induced curvature is treated as soft.
_SADDLE_LENGTH = 0.01


@dataclass(frozen=True, eq=False)
class ElectronConfiguration:
    """N electron positions (um) with the energy (J) and force residual (J/um).

    ``pinned`` marks a user-placed configuration that is linearised as given,
    without a force-balance certificate.
    """

    positions: np.ndarray
    energy: float
    converged: bool
    gradient_norm: float
    tolerance: float = math.inf
    pinned: bool = False

    def __post_init__(self):
        p = np.array(self.positions, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(p)):
            raise InputError("non-finite electron positions")
        if len(p) >= 2:
            d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
            d[np.diag_indices(len(p))] = np.inf
            if d.min() <= _MIN_SEPARATION:
                raise InputError(f"electrons closer than {_MIN_SEPARATION} um")
        if self.converged and not self.gradient_norm <= self.tolerance:
            raise InputError("converged configuration with gradient above its tolerance")
        p.setflags(write=False)
        object.__setattr__(self, "positions", p)

    @property
    def n(self) -> int:
        return len(self.positions)

    @classmethod
    def empty(cls) -> "ElectronConfiguration":
        return cls(np.zeros((0, 2)), 0.0, True, 0.0, 0.0)

    @classmethod
    def pinned_at(cls, positions, field: PotentialField, bias: BiasConfig,
                  constants: PhysicalConstants = CONSTANTS) -> "ElectronConfiguration":
        u, g = energy_and_gradient(positions, field, bias, constants)
        return cls(positions, u, False, float(np.linalg.norm(g)), pinned=True)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "positions_um": self.positions.tolist(),
            "energy_J": self.energy,
            "converged": bool(self.converged),
            "gradient_norm": self.gradient_norm,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ElectronConfiguration":
        pos = np.array(d["positions_um"], dtype=float).reshape(-1, 2)
        if len(pos) != d.get("n", len(pos)):
            raise InputError("n does not match the number of positions")
        tol = d["gradient_norm"] if d["converged"] else math.inf
        return cls(pos, float(d["energy_J"]), bool(d["converged"]), float(d["gradient_norm"]),
                   tol)

    @classmethod
    def from_json(cls, text: str) -> "ElectronConfiguration":
        return cls.from_dict(json.loads(text))


# -- energy in eV / um ------------------------------------------------------

def _pair_geometry(pos: np.ndarray):
    diff = pos[:, None, :] - pos[None, :, :]
    d2 = (diff**2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    d = np.sqrt(d2)
    if len(pos) >= 2 and d.min() < D_MIN_UM:
        i, j = np.unravel_index(np.argmin(d), d.shape)
        raise SingularityError(f"electrons {i} and {j} are {d[i, j]:.3g} um apart")
    return diff, d


def _energy_ev(pot: BiasedPotential, pos: np.ndarray, kc: float) -> float:
    u = -float(np.sum(pot.value(pos)))
    if len(pos) >= 2:
        _, d = _pair_geometry(pos)
        iu = np.triu_indices(len(pos), 1)
        u += kc * float(np.sum(1.0 / d[iu]))
    return u


def _energy_grad_ev(pot: BiasedPotential, pos: np.ndarray, kc: float):
    u = -float(np.sum(pot.value(pos)))
    g = -pot.gradient(pos)
    if len(pos) >= 2:
        diff, d = _pair_geometry(pos)
        iu = np.triu_indices(len(pos), 1)
        u += kc * float(np.sum(1.0 / d[iu]))
        g = g - kc * np.sum(diff / d[:, :, None] ** 3, axis=1)
    return u, g


def _hessian_ev(pot: BiasedPotential, pos: np.ndarray, kc: float) -> np.ndarray:
    n = len(pos)
    h = np.zeros((n, 2, n, 2))
    hp = -pot.hessian(pos)
    idx = np.arange(n)
    h[idx, :, idx, :] = hp
    if n >= 2:
        diff, d = _pair_geometry(pos)
        # Pair block T_ij = kc (3 r r^T - d^2 I) / d^5; enters +T on the
        # diagonal blocks of i and j and -T on the off-diagonal ones.
        d = d.copy()
        d[idx, idx] = 1.0
        t = 3.0 * diff[:, :, :, None] * diff[:, :, None, :] \
            - (d**2)[:, :, None, None] * np.eye(2)
        t *= kc / (d**5)[:, :, None, None]
        t[idx, idx] = 0.0
        h -= t.transpose(0, 2, 1, 3)
        h[idx, :, idx, :] += t.sum(axis=1)
    h = h.reshape(2 * n, 2 * n)
    return (h + h.T) / 2


def _positions(cfg_or_positions) -> np.ndarray:
    if isinstance(cfg_or_positions, ElectronConfiguration):
        return np.array(cfg_or_positions.positions)
    return np.array(cfg_or_positions, dtype=float).reshape(-1, 2)


def total_energy(cfg, field: PotentialField, bias: BiasConfig,
                 constants: PhysicalConstants = CONSTANTS) -> float:
    """U = sum_i (-e) phi(r_i) + sum_{i<j} e^2 / (4 pi eps0 d_ij), in J.

    ``cfg`` is an ElectronConfiguration or an (N, 2) array of positions in um.
    """
    pos = _positions(cfg)
    if len(pos) == 0:
        return 0.0
    return constants.e * _energy_ev(field.potential(bias), pos, constants.coulomb_ev_um)


def energy_and_gradient(cfg, field: PotentialField, bias: BiasConfig,
                        constants: PhysicalConstants = CONSTANTS):
    """Energy (J) and its gradient with respect to positions (J/um, shape (N, 2))."""
    pos = _positions(cfg)
    if len(pos) == 0:
        return 0.0, np.zeros((0, 2))
    u, g = _energy_grad_ev(field.potential(bias), pos, constants.coulomb_ev_um)
    return constants.e * u, constants.e * g


def energy_hessian(cfg, field: PotentialField, bias: BiasConfig,
                   constants: PhysicalConstants = CONSTANTS) -> np.ndarray:
    """Second derivatives of the energy (J/um^2) over coordinates x1, y1, x2, y2, ..."""
    pos = _positions(cfg)
    return constants.e * _hessian_ev(field.potential(bias), pos, constants.coulomb_ev_um)


# -- minimiser --------------------------------------------------------------

@dataclass
class _Relaxation:
    x: np.ndarray
    u: float
    g: np.ndarray
    converged: bool
    history: list = field(default_factory=list)


class _Objective:
    """Energy on a flat coordinate vector; leaving the interior costs +inf."""

    def __init__(self, pot: BiasedPotential, kc: float, interior):
        self.pot, self.kc = pot, kc
        self.xmin, self.xmax, self.ymin, self.ymax = interior

    def inside(self, x):
        p = x.reshape(-1, 2)
        return bool(np.all((p[:, 0] >= self.xmin) & (p[:, 0] <= self.xmax)
                           & (p[:, 1] >= self.ymin) & (p[:, 1] <= self.ymax)))

    def energy(self, x):
        if not self.inside(x):
            return math.inf
        try:
            return _energy_ev(self.pot, x.reshape(-1, 2), self.kc)
        except (SingularityError, DomainError):
            return math.inf

    def energy_grad(self, x):
        u, g = _energy_grad_ev(self.pot, x.reshape(-1, 2), self.kc)
        return u, g.ravel()

    def hessian(self, x):
        return _hessian_ev(self.pot, x.reshape(-1, 2), self.kc)


def _backtrack(obj: _Objective, x, u, g, step, *, c1=1e-4, min_alpha=1e-14):
    slope = float(g @ step)
    if slope >= 0:
        return None
    alpha = 1.0
    while alpha >= min_alpha:
        xn = x + alpha * step
        un = obj.energy(xn)
        if un <= u + c1 * alpha * slope:
            return xn, un
        alpha *= 0.5
    return None


def _bfgs(obj: _Objective, x, u, g, gstop: float, max_iter: int, hist: list,
          callback: Callable | None):
    """Steepest-descent warm-up then BFGS with an Armijo line search."""
    n = x.size
    it = 0
    for _ in range(20):
        if np.linalg.norm(g) <= gstop:
            break
        res = _backtrack(obj, x, u, g, -g * min(1.0, 0.05 / np.max(np.abs(g))))
        if res is None:
            break
        x, u = res
        u, g = obj.energy_grad(x)
        it += 1
        hist.append(u)
        if callback:
            callback(u)

    def fresh():
        return np.eye(n) * min(1.0, 0.05 / max(np.max(np.abs(g)), 1e-12))

    H = fresh()
    while it < max_iter and np.linalg.norm(g) > gstop:
        it += 1
        res = _backtrack(obj, x, u, g, -H @ g)
        if res is None:
            H = fresh()
            res = _backtrack(obj, x, u, g, -H @ g)
            if res is None:
                break  # energy decrease below roundoff
        xn, un = res
        un, gn = obj.energy_grad(xn)
        s, yv = xn - x, gn - g
        sy = float(s @ yv)
        if sy > 1e-20:
            rho = 1.0 / sy
            Hy = H @ yv
            H = H + (1 + rho * float(yv @ Hy)) * rho * np.outer(s, s) \
                - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        x, u, g = xn, un, gn
        hist.append(u)
        if callback:
            callback(u)
    return x, u, g, it


def _newton(obj: _Objective, x, u, g, gtol: float, hist: list, callback: Callable | None):
    """Newton polish on the curved directions of the Hessian.

    Returns the final state and a unit direction of significant negative
    curvature when the point turns out to be a saddle (else None). Directions
    with |lambda| below 1e-7 of the largest (continuous symmetries) are left
    alone, and negative curvature weaker than the force over
    ``_SADDLE_LENGTH`` is not reported.
    """
    scale = max(abs(u), 1.0)
    for _ in range(30):
        gnorm = np.linalg.norm(g)
        if gnorm <= gtol:
            break
        lam, vec = np.linalg.eigh(obj.hessian(x))
        cut = 1e-7 * np.max(np.abs(lam))
        # A residual force F bends a flat valley (rigid rotation, say) by
        # about -F/r; curvature that small is not evidence of a saddle.
        if lam[0] < -max(cut, gnorm / _SADDLE_LENGTH):
            return x, u, g, vec[:, 0]
        keep = lam > cut
        step = -vec[:, keep] @ ((vec[:, keep].T @ g) / lam[keep])
        accepted = False
        alpha = 1.0
        while alpha >= 1e-6:
            xn = x + alpha * step
            un = obj.energy(xn)
            if math.isfinite(un) and un <= u + 4 * np.finfo(float).eps * scale:
                un, gn = obj.energy_grad(xn)
                if np.linalg.norm(gn) < gnorm:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            break
        x, g = xn, gn
        u = min(u, un)
        hist.append(u)
        if callback:
            callback(u)
    return x, u, g, None


def _relax(obj: _Objective, x0: np.ndarray, gtol: float, max_iter: int,
           callback: Callable | None) -> _Relaxation:
    x = x0.copy()
    u, g = obj.energy_grad(x)
    hist = [u]
    budget = max_iter
    # BFGS only needs to reach the Newton basin; large clusters have many soft
    # directions where BFGS crawls. If Newton stalls, BFGS goes deeper.
    hand_off = 1e-4
    for _ in range(8):
        x, u, g, used = _bfgs(obj, x, u, g, max(gtol, hand_off), budget, hist, callback)
        budget -= used
        if not obj.inside(x):
            break
        g_before = np.linalg.norm(g)
        x, u, g, down = _newton(obj, x, u, g, gtol, hist, callback)
        if np.linalg.norm(g) <= gtol or budget <= 0:
            break
        if down is None:
            if hand_off <= gtol and np.linalg.norm(g) >= g_before:
                break
            hand_off = max(hand_off * 1e-2, gtol)
            continue
        # Saddle: step off along the descending direction and relax again.
        for sign in (1.0, -1.0):
            xn = x + sign * 0.02 * down
            un = obj.energy(xn)
            if un < u:
                x = xn
                u, g = obj.energy_grad(x)
                hist.append(u)
                if callback:
                    callback(u)
                break
        else:
            break
    return _Relaxation(x, u, g, bool(np.linalg.norm(g) <= gtol), hist)


def trap_center(field: PotentialField, bias: BiasConfig) -> np.ndarray:
    """Grid node inside the trap region where phi is largest (lowest electron energy)."""
    g = field.geometry
    phi = field.node_potential(bias)
    X, Y = np.meshgrid(g.x, g.y)
    mask = field.in_trap(np.c_[X.ravel(), Y.ravel()]).reshape(X.shape) \
        & field.in_interior(np.c_[X.ravel(), Y.ravel()]).reshape(X.shape)
    if not mask.any():
        raise InputError("trap region contains no grid node inside the evaluation interior")
    masked = np.where(mask, phi, -np.inf)
    j, i = np.unravel_index(np.argmax(masked), masked.shape)
    return np.array([g.x[i], g.y[j]])


def _initial_ring(center, n, radius, rng) -> np.ndarray:
    """Jittered starting cluster: a ring for up to six electrons, otherwise a
    filled disk laid out as a golden-angle spiral (concentric rings)."""
    if n == 1:
        return center + rng.normal(scale=0.05 * radius, size=(1, 2))
    k = np.arange(n)
    if n <= 6:
        theta = 2 * np.pi * k / n + rng.uniform(-0.3, 0.3, n) * 2 * np.pi / n
        r = radius * (0.6 + 0.4 * rng.uniform(size=n))
    else:
        theta = k * np.pi * (3 - math.sqrt(5)) + rng.uniform(0, 2 * np.pi)
        r = radius * np.sqrt((k + 0.5) / n) * (1 + 0.1 * rng.uniform(-1, 1, n))
    return center + np.c_[r * np.cos(theta), r * np.sin(theta)]


def _ring_radius(field: PotentialField, bias: BiasConfig, n: int) -> float:
    v_b = bias.voltages.get("bottom", 0.0)
    ns_um2 = reservoir_density(v_b, _CHANNEL_DEPTH_UM) * 1e-8 if v_b > 0 else 10.0
    ns_um2 = max(ns_um2, 1.0)
    r = math.sqrt(n / (math.pi * ns_um2))
    xmin, xmax, ymin, ymax = field.trap_region
    return min(max(r, 0.02), 0.35 * min(xmax - xmin, ymax - ymin))


def _add_electron(field, bias, pos: np.ndarray, kc: float) -> np.ndarray:
    """Append an electron at the trap-region node of lowest single-particle energy."""
    g = field.geometry
    X, Y = np.meshgrid(g.x, g.y)
    nodes = np.c_[X.ravel(), Y.ravel()]
    ok = field.in_trap(nodes) & field.in_interior(nodes)
    nodes = nodes[ok]
    u = -field.node_potential(bias).ravel()[ok]
    if len(pos):
        d = np.sqrt(((nodes[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
        u = u + kc * np.sum(1.0 / np.maximum(d, 0.5 * min(g.dx, g.dy)), axis=1)
    best = nodes[np.argmin(u)]
    # Nudge off the node so symmetric clusters are not stuck on a saddle.
    return np.vstack([pos, best + 0.1 * np.array([g.dx, 0.7 * g.dy])])


def minimize(field: PotentialField, bias: BiasConfig, n: int, seed: int = 0, *,
             restarts: int = 8, initial=None, gtol: float = DEFAULT_GTOL,
             max_iter: int = 5000, center=None, callback: Callable | None = None,
             constants: PhysicalConstants = CONSTANTS) -> ElectronConfiguration:
    """Lowest-energy equilibrium of ``n`` electrons found from several starts.

    Starts are jittered rings around the trap centre, sized from the
    reservoir sheet density, plus ``initial`` (an (n, 2) array or
    configuration) when given. Each start runs steepest descent, BFGS and a
    Newton polish. A start counts only if every electron ends inside the
    field's trap region.

    Parameters
    ----------
    gtol : float
        Force tolerance in eV/um (equivalently, relative to e * 1 V/um).
    callback : callable, optional
        Called with the energy (eV) after every accepted iteration.

    Raises
    ------
    UnconfinedError
        Every start left the trap region or the evaluation interior.
    """
    if n < 0 or int(n) != n:
        raise InputError(f"electron count must be a non-negative integer, got {n}")
    n = int(n)
    e = constants.e
    if n == 0:
        return ElectronConfiguration(np.zeros((0, 2)), 0.0, True, 0.0, gtol * e)
    pot = field.potential(bias)
    kc = constants.coulomb_ev_um
    obj = _Objective(pot, kc, field.interior)
    c = np.asarray(center, dtype=float) if center is not None else trap_center(field, bias)
    radius = _ring_radius(field, bias, n)
    starts = []
    if initial is not None:
        starts.append(_positions(initial))
    for k in range(restarts):
        rng = np.random.default_rng([int(seed), k])
        starts.append(_initial_ring(c, n, radius, rng))
    best = None
    for x0 in starts:
        if x0.shape != (n, 2):
            raise InputError(f"initial positions need shape ({n}, 2), got {x0.shape}")
        if not math.isfinite(obj.energy(x0.ravel())):
            continue
        r = _relax(obj, x0.ravel(), gtol, max_iter, callback)
        p = r.x.reshape(-1, 2)
        if not np.all(field.in_trap(p)):
            continue
        key = (not r.converged, r.u)
        if best is None or key < best[0]:
            best = (key, r)
    if best is None:
        raise UnconfinedError(f"no start kept {n} electron(s) inside the trap region")
    r = best[1]
    gnorm = float(np.linalg.norm(r.g)) * e
    return ElectronConfiguration(r.x.reshape(-1, 2), r.u * e, r.converged, gnorm, gtol * e)


# -- occupancy ----------------------------------------------------------------

def chemical_potential(cfg_n: ElectronConfiguration, cfg_nm1: ElectronConfiguration) -> float:
    """mu(N) = U_min(N) - U_min(N-1), in J."""
    return cfg_n.energy - cfg_nm1.energy


def load_trap(field: PotentialField, bias: BiasConfig, reservoir_potential: float = 0.0, *,
              n_max: int = 100, seed: int = 0, restarts: int = 4,
              constants: PhysicalConstants = CONSTANTS):
    """Equilibrium occupancy of the trap against a reservoir at ``reservoir_potential`` (V).

    Adds electrons one at a time while mu(N) <= -e * V_reservoir, i.e. while
    the next electron is better off in the trap. The scan stops at the first
    unfavourable (or unconfined) N, which is the largest favourable N when
    mu(N) increases with N.

    Returns
    -------
    (n_e, ElectronConfiguration)
    """
    level = -constants.e * reservoir_potential
    kc = constants.coulomb_ev_um
    prev = ElectronConfiguration.empty()
    for n in range(1, n_max + 1):
        guess = _add_electron(field, bias, np.array(prev.positions), kc)
        try:
            cfg = minimize(field, bias, n, seed, restarts=restarts, initial=guess,
                           constants=constants)
        except UnconfinedError:
            break
        if chemical_potential(cfg, prev) > level:
            break
        prev = cfg
    else:
        warnings.warn(f"trap occupancy reached the cap n_max={n_max}", RuntimeWarning,
                      stacklevel=2)
    return prev.n, prev


def _connected(mask: np.ndarray, a, b) -> bool:
    if not (mask[a] and mask[b]):
        return False
    labels, _ = ndimage.label(mask)
    return labels[a] == labels[b]


def barrier_potential(field: PotentialField, bias: BiasConfig, start=None) -> float | None:
    """Potential (V) of the lowest saddle between the trap centre and the reservoir.

    This is the minimax of the electron energy -e*phi over grid paths from
    the trap centre node to ``field.reservoir_point``: an electron at the trap
    centre needs energy -e*phi_s to reach the reservoir. Returns None when the
    field has no reservoir point.
    """
    if field.reservoir_point is None:
        return None
    g = field.geometry
    u = -field.node_potential(bias)
    c = trap_center(field, bias) if start is None else np.asarray(start, dtype=float)
    a = (int(round((c[1] - g.y0) / g.dy)), int(round((c[0] - g.x0) / g.dx)))
    rp = field.reservoir_point
    b = (int(round((rp[1] - g.y0) / g.dy)), int(round((rp[0] - g.x0) / g.dx)))
    levels = np.unique(u[u >= max(u[a], u[b])])
    lo, hi = 0, len(levels) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _connected(u <= levels[mid], a, b):
            hi = mid
        else:
            lo = mid + 1
    return -float(levels[lo])


def _drop_electron(field, bias, pos: np.ndarray, kc: float) -> np.ndarray:
    """Remove the electron with the highest single-particle energy."""
    pot = field.potential(bias)
    u = -pot.value(pos)
    if len(pos) >= 2:
        _, d = _pair_geometry(pos)
        u = u + kc * np.sum(1.0 / d, axis=1)
    return np.delete(pos, int(np.argmax(u)), axis=0)


def occupancy_step(field: PotentialField, bias: BiasConfig, n: int,
                   cfg: ElectronConfiguration | None = None, reservoir_potential: float = 0.0,
                   *, seed: int = 0, restarts: int = 2, n_max: int = 100,
                   constants: PhysicalConstants = CONSTANTS):
    """Update a trapped population after the bias changes to ``bias``.

    If the barrier towards the reservoir lies below the reservoir level the
    trap is open and refills to equilibrium (:func:`load_trap`). Otherwise
    the population is isolated: electrons can only leave, one at a time,
    while the chemical potential of the last one exceeds the barrier energy
    -e*phi_s, or while no confined N-electron equilibrium exists.

    Returns
    -------
    (n_e, ElectronConfiguration)
    """
    e = constants.e
    kc = constants.coulomb_ev_um
    phi_s = barrier_potential(field, bias)
    if phi_s is not None and phi_s >= reservoir_potential:
        return load_trap(field, bias, reservoir_potential, n_max=n_max, seed=seed,
                         restarts=restarts, constants=constants)
    escape_level = -e * phi_s if phi_s is not None else math.inf
    pos = np.array(cfg.positions) if cfg is not None and cfg.n == n else None
    while n > 0:
        try:
            cfg_n = minimize(field, bias, n, seed, restarts=restarts, initial=pos,
                             constants=constants)
        except UnconfinedError:
            n -= 1
            pos = None if pos is None else _drop_electron(field, bias, pos, kc) \
                if field.in_interior(pos).all() else None
            continue
        guess = _drop_electron(field, bias, np.array(cfg_n.positions), kc)
        try:
            cfg_m = minimize(field, bias, n - 1, seed, restarts=restarts, initial=guess,
                             constants=constants)
        except UnconfinedError:
            return n, cfg_n
        if chemical_potential(cfg_n, cfg_m) > escape_level:
            n -= 1
            pos = np.array(cfg_m.positions)
            continue
        return n, cfg_n
    return 0, ElectronConfiguration.empty()
