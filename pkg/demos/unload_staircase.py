"""Counting electrons out of the stand-in trap one at a time.

Driving the unload gate more negative spills electrons over the barrier. Each lost
electron steps the resonator shift back toward zero, and the plateaus of the
staircase label the occupancy.
"""
from heliotrap.harness.presets import cycle_spec, plateau_unload_spec
from heliotrap.harness.sweep import detect_plateaus, run_sweep, single_electron_cycle
from heliotrap.potential import standin_field

field = standin_field()
result = run_sweep(plateau_unload_spec(), field)
print("unload sweep:")
for v, n, df in zip(result.axis_values, result.n_e, result.delta_f):
    print(f"  V = {v:+.3f} V  N = {n:2d}  delta f = {df / 1e3:8.3f} kHz")
print("plateaus:")
for p in result.plateaus or detect_plateaus(result):
    print(f"  N = {p.n_e}  delta f = {p.mean_delta_f_hz / 1e3:8.3f} kHz over V = {p.interval[0]:+.3f}..{p.interval[1]:+.3f}")

report = single_electron_cycle(cycle_spec(5), field)
print(f"single-electron cycle: {report.repetitions} repetitions, {report.error_count} errors")
