"""Trap potential as a superposition of per-electrode unit potentials."""
from .grid import (REQUIRED_BIAS_NAMES, BiasConfig, BiasedPotential, GridGeometry,
                   PotentialField, UnitPotentialGrid, grad_phi_at, hess_phi_at, phi_at,
                   reservoir_density)
from .io import load_field, load_grid, save_field, save_grid
from .laplace import Electrode, ElectrodeGeometry2D, SolveInfo, solve_unit_potentials
from .synthetic import (RESONATOR_ARMS, DoubleWell, HarmonicBowl, sampled_field,
                        standin_field, standin_geometry)

__all__ = [
    "REQUIRED_BIAS_NAMES", "BiasConfig", "BiasedPotential", "GridGeometry", "PotentialField",
    "UnitPotentialGrid", "grad_phi_at", "hess_phi_at", "phi_at", "reservoir_density",
    "load_field", "load_grid", "save_field", "save_grid", "Electrode", "ElectrodeGeometry2D",
    "SolveInfo", "solve_unit_potentials", "RESONATOR_ARMS", "DoubleWell", "HarmonicBowl",
    "sampled_field", "standin_field", "standin_geometry",
]
