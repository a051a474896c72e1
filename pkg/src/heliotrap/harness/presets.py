"""Bias points and protocol specs for the stand-in geometry.

The stand-in is a 2D approximation of the real device, so its voltages are
not the measured ones. They were chosen to reproduce the structure of each
measurement: a closed and an open barrier for loading, a trap that the
unload gate empties, a readout point with omega_e just above the resonator
and load settings that capture exactly one or four electrons.
"""
from __future__ import annotations

from ..potential.grid import BiasConfig
from .config import SPLIT_GATE, SweepSpec

__all__ = [
    "FIG1_BIAS",
    "LOAD_CLOSED_BIAS",
    "LOAD_OPEN_BIAS",
    "READOUT_BIAS",
    "UNLOAD_BIAS",
    "load_sweep_spec",
    "unload_sweep_spec",
    "plateau_unload_spec",
    "cycle_spec",
    "readout_map_spec",
    "BIAS_PRESETS",
    "SPEC_PRESETS",
]

# Trap and barrier structure of the device potential (V_b, V_sg, V_r, V_un).
FIG1_BIAS = BiasConfig.standard(v_b=0.5, v_sg=-0.2, v_r=-0.3, v_un=-0.5)
# Loading: split gates closed, then opened far enough to let electrons in.
LOAD_CLOSED_BIAS = BiasConfig.standard(v_b=1.0, v_sg=-0.4, v_r=-0.3, v_un=-0.1)
LOAD_OPEN_BIAS = BiasConfig.standard(v_b=1.0, v_sg=-0.1, v_r=-0.3, v_un=-0.1)
# Few-electron readout at reduced V_b with a 20 mV split-gate difference;
# omega_e/2pi is about 10 GHz, just above the resonator.
READOUT_BIAS = BiasConfig.standard(v_b=0.3, v_sg=-0.5, v_r=0.16, v_un=-0.4, sg_asymmetry=0.02)

# V_r during loading sets how many electrons remain when the split gates
# pinch off: one for V_r in [-0.95, -0.90] V, four at -0.7 V.
_V_R_LOAD_ONE = -0.93
_V_R_LOAD_FOUR = -0.7
_V_SG_OPEN = 0.1
# Unloading: with the split gates raised to -0.05 V and the resonator at
# -0.8 V the barrier stays closed to the reservoir, and driving the unload
# gate towards -5 V lifts the trap over it one electron at a time.
UNLOAD_BIAS = BiasConfig.standard(v_b=0.3, v_sg=-0.05, v_r=-0.8, v_un=-0.4, sg_asymmetry=0.02)
_V_UN_EMPTY = -5.0
_TO_UNLOAD = [{"resonator": UNLOAD_BIAS["resonator"]}, {SPLIT_GATE: -0.05}]


def _load_steps(v_r_load: float, readout: BiasConfig) -> list[dict]:
    v_sg = (readout["split_gate_upper"] + readout["split_gate_lower"]) / 2
    return [{"resonator": v_r_load}, {SPLIT_GATE: _V_SG_OPEN}, {SPLIT_GATE: v_sg},
            {"resonator": readout["resonator"]}]


def load_sweep_spec(steps: int = 7, **kw) -> SweepSpec:
    """Split gates swept open at the loading bias; stateless filling."""
    return SweepSpec(swept_electrodes=[(SPLIT_GATE, -0.4, -0.1, steps)],
                     fixed_bias=LOAD_CLOSED_BIAS, protocol="load", **kw)


def unload_sweep_spec(steps: int = 24, v_load: float = -0.6, **kw) -> SweepSpec:
    """Unload gate swept to -5 V after loading about half a dozen electrons,
    read out at the swept bias."""
    kw.setdefault("ramp_step", 0.1)
    return SweepSpec(swept_electrodes=[("unload", -0.4, _V_UN_EMPTY, steps)],
                     fixed_bias=UNLOAD_BIAS, protocol="unload",
                     preload_steps=_load_steps(v_load, READOUT_BIAS) + _TO_UNLOAD, **kw)


def plateau_unload_spec(steps: int = 24, **kw) -> SweepSpec:
    """Four electrons loaded, then unloaded with the gate returned to -0.4 V
    before each readout."""
    kw.setdefault("ramp_step", 0.1)
    return SweepSpec(swept_electrodes=[("unload", -0.4, _V_UN_EMPTY, steps)],
                     fixed_bias=UNLOAD_BIAS, protocol="unload", unload_return_voltage=-0.4,
                     preload_steps=_load_steps(_V_R_LOAD_FOUR, READOUT_BIAS) + _TO_UNLOAD,
                     **kw)


def cycle_spec(repetitions: int = 20, *, with_unload: bool = True, **kw) -> SweepSpec:
    """Single-electron load/unload cycle read out at :data:`READOUT_BIAS`."""
    kw.setdefault("ramp_step", 0.05)
    v_sg = (READOUT_BIAS["split_gate_upper"] + READOUT_BIAS["split_gate_lower"]) / 2
    unload = _TO_UNLOAD + [{"unload": _V_UN_EMPTY}, {"unload": READOUT_BIAS["unload"]},
                           {SPLIT_GATE: v_sg}, {"resonator": READOUT_BIAS["resonator"]}]
    return SweepSpec(fixed_bias=READOUT_BIAS, protocol="single_electron_cycle",
                     load_steps=_load_steps(_V_R_LOAD_ONE, READOUT_BIAS),
                     unload_steps=unload if with_unload else [], repetitions=repetitions, **kw)


def readout_map_spec(rows: int = 5, cols: int = 21, **kw) -> SweepSpec:
    """One electron mapped over V_b (rows) and V_r (columns) around the readout point."""
    return SweepSpec(swept_electrodes=[("bottom", 0.26, 0.34, rows), ("resonator", 0.10, 0.20, cols)],
                     fixed_bias=READOUT_BIAS, protocol="map2d", n_e=1, **kw)


BIAS_PRESETS = {
    "fig1": FIG1_BIAS,
    "load_closed": LOAD_CLOSED_BIAS,
    "load_open": LOAD_OPEN_BIAS,
    "readout": READOUT_BIAS,
    "unload": UNLOAD_BIAS,
}

SPEC_PRESETS = {
    "load": load_sweep_spec,
    "unload": unload_sweep_spec,
    "plateau_unload": plateau_unload_spec,
    "cycle": cycle_spec,
    "readout_map": readout_map_spec,
}
