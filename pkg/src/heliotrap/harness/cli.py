"""``heliotrap`` command line.

Every subcommand reads an optional JSON config (``--config``) and writes its
results into ``--out``. Exit codes: 0 when the run completed (sweeps count
as completed even with flagged points), 1 when a single-shot computation
failed (for example an unconfined equilibrium), 2 on config or IO errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..equilibrium import load_trap, minimize
from ..errors import GeometryError, GridFormatError, HeliotrapError, InputError
from ..modes import DEFAULT_GAMMA, ResonatorMode, couplings, eigenmodes
from ..potential.grid import BiasConfig
from ..potential.io import save_field
from ..potential.laplace import solve_unit_potentials
from ..response import (ReflectionTrace, ResonatorParams, common_and_differential_frequencies,
                        fit_s11, frequency_shift, s11_model, single_electron_capacitance,
                        susceptibility, synthesize_trace)
from .config import SweepSpec, _bias_from_any, field_from_config, geometry_from_config
from .output import write_cycle, write_json, write_log, write_map, write_sweep
from .presets import BIAS_PRESETS, SPEC_PRESETS
from .sweep import map2d, run_sweep, single_electron_cycle

__all__ = ["main", "build_parser", "load_config", "spec_from_config"]

EXIT_OK, EXIT_FAILED, EXIT_INPUT = 0, 1, 2
_DEFAULT_PRESET = {"sweep": "plateau_unload", "map2d": "readout_map", "cycle": "cycle"}


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(d, dict):
        raise InputError(f"{path}: the config must be a JSON object")
    return d


def _bias(value) -> BiasConfig:
    if value is None:
        return BIAS_PRESETS["readout"]
    if isinstance(value, str):
        if value not in BIAS_PRESETS:
            raise InputError(f"unknown bias preset {value!r} (known: {sorted(BIAS_PRESETS)})")
        return BIAS_PRESETS[value]
    return _bias_from_any(value)


def _resonator(value) -> ResonatorParams:
    return ResonatorParams.from_dict(value) if value else ResonatorParams()


def spec_from_config(cfg: dict, command: str, seed: int | None = None) -> SweepSpec:
    """SweepSpec from a config mirroring its fields, or from a named preset.

    ``preset`` picks a built-in protocol for the stand-in geometry; any other
    keys override its fields. Without ``preset`` or ``protocol`` the
    subcommand's default preset is used.
    """
    d = {k: v for k, v in cfg.items() if k not in ("field", "preset")}
    if isinstance(d.get("fixed_bias"), str):
        d["fixed_bias"] = _bias(d["fixed_bias"])
    preset = cfg.get("preset")
    if preset is None and "protocol" not in d:
        preset = _DEFAULT_PRESET[command]
    if preset is not None:
        if preset not in SPEC_PRESETS:
            raise InputError(f"unknown preset {preset!r} (known: {sorted(SPEC_PRESETS)})")
        base = SPEC_PRESETS[preset]().to_dict()
        unknown = set(d) - set(base)
        if unknown:
            raise InputError(f"unknown sweep config keys {sorted(unknown)}")
        base.update(d)
        d = base
    spec = SweepSpec.from_dict(d)
    if seed is not None:
        spec = dataclasses.replace(spec, seed=seed)
    return spec


def _field(cfg: dict, base: Path | None):
    return field_from_config(cfg.get("field"), base)


def _configuration(cfg: dict, field_, bias: BiasConfig, seed: int):
    restarts = int(cfg.get("restarts", 8))
    if cfg.get("n") is None:
        _, c = load_trap(field_, bias, float(cfg.get("reservoir_potential", 0.0)),
                         n_max=int(cfg.get("n_max", 100)), seed=seed,
                         restarts=min(restarts, 4))
        return c
    return minimize(field_, bias, int(cfg["n"]), seed, restarts=restarts)


def _spectrum(cfg: dict, field_, bias, conf, res: ResonatorParams):
    gamma = 2 * math.pi * float(cfg.get("gamma_over_2pi", DEFAULT_GAMMA / (2 * math.pi)))
    spec = eigenmodes(conf, field_, bias, gamma)
    return couplings(spec, conf, field_, ResonatorMode(cfg.get("mode", "differential")),
                     res.c_total, res.gamma_scale)


# -- subcommands ---------------------------------------------------------------

def cmd_solve_potential(cfg, out: Path, args, base) -> int:
    """Solve unit potentials for a geometry and write one grid file per electrode."""
    kind = cfg.get("kind", "standin")
    if kind == "geometry":
        field_, info = solve_unit_potentials(geometry_from_config(cfg), return_info=True)
        solve = {"iterations": info.iterations, "residual": info.residual}
    else:
        field_ = field_from_config(cfg, base)
        solve = {}
    paths = save_field(field_, out / "grids")
    g = next(iter(field_.grids.values())).geometry
    write_json(out / "field.json", {
        "name": field_.name, "electrodes": list(field_.electrodes),
        "bias_map": {e: field_.bias_name(e) for e in field_.electrodes},
        "nx": g.nx, "ny": g.ny, "x0": g.x0, "y0": g.y0, "dx": g.dx, "dy": g.dy,
        "files": [p.name for p in paths], **solve})
    return EXIT_OK


def cmd_equilibrium(cfg, out: Path, args, base) -> int:
    """Equilibrium of ``n`` electrons, or the reservoir-loaded occupancy when ``n`` is absent."""
    field_ = _field(cfg, base)
    bias = _bias(cfg.get("bias"))
    conf = _configuration(cfg, field_, bias, args.seed)
    write_json(out / "equilibrium.json", conf.to_dict())
    return EXIT_OK


def cmd_modes(cfg, out: Path, args, base) -> int:
    """Normal modes and resonator couplings of an equilibrium."""
    field_ = _field(cfg, base)
    bias = _bias(cfg.get("bias"))
    conf = _configuration(cfg, field_, bias, args.seed)
    res = _resonator(cfg.get("resonator"))
    spectrum = _spectrum(cfg, field_, bias, conf, res) if conf.n else eigenmodes(conf, field_, bias)
    write_json(out / "equilibrium.json", conf.to_dict())
    write_json(out / "modes.json", spectrum.to_dict())
    return EXIT_OK


def cmd_response(cfg, out: Path, args, base) -> int:
    """Susceptibility, frequency shift, delta C_e and optionally a synthetic S11 trace."""
    field_ = _field(cfg, base)
    bias = _bias(cfg.get("bias"))
    res = _resonator(cfg.get("resonator"))
    conf = _configuration(cfg, field_, bias, args.seed)
    spectrum = _spectrum(cfg, field_, bias, conf, res) if conf.n else eigenmodes(conf, field_, bias)
    chi = complex(susceptibility(spectrum, res.omega_r))
    df = frequency_shift(spectrum, res)
    f_r, f_c = common_and_differential_frequencies(res)
    probes = [float(f) for f in cfg.get("probe_frequencies_hz", [])]
    report = {
        "n_e": conf.n,
        "delta_f_hz": df,
        "chi_at_f_r": [chi.real, chi.imag],
        "delta_c_e_f": single_electron_capacitance(spectrum, res, res.omega_r),
        "f_r_lumped_hz": f_r, "f_c_hz": f_c,
        "probes": [{"freq_hz": f, "chi": [c.real, c.imag]}
                   for f, c in ((f, complex(susceptibility(spectrum, 2 * math.pi * f)))
                                for f in probes)],
        "modes": spectrum.to_dict(),
    }
    write_json(out / "response.json", report)
    if "trace" in cfg:
        t = dict(cfg["trace"])
        trace = synthesize_trace(res, df, t.get("f_span"), int(t.get("n_points", 801)),
                                 float(t.get("noise_sigma", 0.0)), args.seed)
        trace.to_csv(out / "trace.csv")
    return EXIT_OK


def cmd_fit_s11(cfg, out: Path, args, base) -> int:
    """Fit a reflection trace from CSV, or a synthesised one when no file is given."""
    initial = ResonatorParams.from_dict({"lumped_tolerance": None, **cfg.get("initial", {})})
    if "trace" in cfg:
        p = Path(cfg["trace"])
        trace = ReflectionTrace.from_csv(p if p.is_absolute() or base is None else base / p)
    else:
        s = dict(cfg.get("synthesize", {}))
        truth = ResonatorParams.from_dict({"lumped_tolerance": None, **s.pop("params", {})})
        trace = synthesize_trace(truth, float(s.get("delta_f", 0.0)), s.get("f_span"),
                                 int(s.get("n_points", 801)),
                                 float(s.get("noise_sigma", 0.01)), args.seed)
        trace.to_csv(out / "trace.csv")
    try:
        fit = fit_s11(trace, initial)
    except HeliotrapError as exc:
        write_json(out / "fit.json", {"converged": False, "error": str(exc),
                                      "diagnostics": getattr(exc, "diagnostics", None)})
        return EXIT_FAILED
    write_json(out / "fit.json", {**fit.to_dict(), "residual_rms": fit.residual_rms})
    ReflectionTrace(trace.frequencies, s11_model(trace.frequencies, fit.params)).to_csv(
        out / "model.csv")
    return EXIT_OK


def cmd_sweep(cfg, out: Path, args, base) -> int:
    """One-axis load, unload or fixed-N sweep with plateau detection."""
    spec = spec_from_config(cfg, "sweep", args.seed)
    log: list[str] = []
    result = run_sweep(spec, _field(cfg, base), threads=args.threads, log=log)
    write_sweep(out, result, log)
    return EXIT_OK


def cmd_map2d(cfg, out: Path, args, base) -> int:
    """Fixed-N map over two voltages with omega_e and delta-f ridges."""
    spec = spec_from_config(cfg, "map2d", args.seed)
    log: list[str] = []
    result = map2d(spec, _field(cfg, base), threads=args.threads, log=log)
    write_map(out, result, log)
    np.savetxt(out / "delta_f_grid.csv", result.delta_f, delimiter=",", fmt="%.17g")
    return EXIT_OK


def cmd_cycle(cfg, out: Path, args, base) -> int:
    """Repeated single-electron load and unload events."""
    spec = spec_from_config(cfg, "cycle", args.seed)
    log: list[str] = []
    report = single_electron_cycle(spec, _field(cfg, base), log=log)
    write_cycle(out, spec, report, log)
    return EXIT_OK


COMMANDS = {
    "solve-potential": cmd_solve_potential,
    "equilibrium": cmd_equilibrium,
    "modes": cmd_modes,
    "response": cmd_response,
    "sweep": cmd_sweep,
    "map2d": cmd_map2d,
    "cycle": cmd_cycle,
    "fit-s11": cmd_fit_s11,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config file")
    common.add_argument("--out", type=Path, help="output directory (default heliotrap-out/<command>)")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for independent points")
    parser = argparse.ArgumentParser(prog="heliotrap", parents=[common],
                                     description="Charge sensing of electrons on helium.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        doc = (fn.__doc__ or name).strip().splitlines()[0]
        sub.add_parser(name, parents=[common], help=doc, description=doc)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("heliotrap: --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    out = args.out or Path("heliotrap-out") / args.command
    try:
        cfg = load_config(args.config)
        base = args.config.parent if args.config else None
        if args.command not in ("sweep", "map2d", "cycle"):
            args.seed = int(cfg.get("seed", 0)) if args.seed is None else args.seed
        out.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, out, args, base)
    except (InputError, GeometryError, GridFormatError, OSError, KeyError, TypeError) as exc:
        print(f"heliotrap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except HeliotrapError as exc:
        write_log(out / "error.txt", [f"{type(exc).__name__}: {exc}"])
        print(f"heliotrap: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    return code


if __name__ == "__main__":
    sys.exit(main())
