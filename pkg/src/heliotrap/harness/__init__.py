"""Sweep protocols, plateau detection, run output and the command line."""
from .config import SPLIT_GATE, SweepSpec, SweptAxis, apply_voltages, field_from_config
from .sweep import (CycleEvent, CycleReport, MapResult, Plateau, SweepPoint, SweepResult,
                    detect_plateaus, map2d, measure, ridge, run_sweep, single_electron_cycle)

__all__ = [
    "SPLIT_GATE", "SweepSpec", "SweptAxis", "apply_voltages", "field_from_config",
    "CycleEvent", "CycleReport", "MapResult", "Plateau", "SweepPoint", "SweepResult",
    "detect_plateaus", "map2d", "measure", "ridge", "run_sweep", "single_electron_cycle",
]
