"""From one electron's coupling to a 30-electron dispersive shift.

A single electron in a 20 GHz bowl couples to the resonator at about 10 MHz.
A 30-electron crystal in a stiffer 50 GHz bowl pulls the resonator down by
roughly 15 kHz, because only the centre-of-mass mode sees a uniform field.
"""
import math

import numpy as np

from heliotrap.equilibrium import minimize
from heliotrap.modes import ResonatorMode, couplings, eigenmodes
from heliotrap.potential import HarmonicBowl
from heliotrap.response import ResonatorParams, frequency_shift, susceptibility

TAU = 2 * math.pi
params = ResonatorParams()
print(f"resonator f_r = {params.f_r / 1e9:.5f} GHz, C = {params.c_total * 1e12:.5f} pF")

bowl = HarmonicBowl(aspect=0.5)
bias = bowl.bias(TAU * 20e9)
one = minimize(bowl.field, bias, 1)
spec = couplings(eigenmodes(one, bowl.field, bias), one, bowl.field, ResonatorMode(),
                 params.c_total, params.gamma_scale)
print("single electron:")
for w, g in zip(spec.omegas, spec.couplings):
    print(f"  mode {w / TAU / 1e9:6.2f} GHz  g/2pi = {abs(g) / TAU / 1e6:6.3f} MHz")
print(f"  delta f = {frequency_shift(spec, params):.1f} Hz")

bowl = HarmonicBowl()
bias = bowl.bias(TAU * 50e9)
crystal = minimize(bowl.field, bias, 30, restarts=2)
spec = couplings(eigenmodes(crystal, bowl.field, bias), crystal, bowl.field,
                 ResonatorMode.uniform_field(bowl.e_y), params.c_total, params.gamma_scale)
bright = int(np.argmax(np.abs(spec.couplings)))
print("30-electron crystal:")
print(f"  bright mode {spec.omegas[bright] / TAU / 1e9:.2f} GHz carries "
      f"{spec.couplings[bright] ** 2 / np.sum(spec.couplings ** 2):.6f} of sum g^2")
print(f"  chi(omega_r) = {complex(susceptibility(spec, params.omega_r)):.3e}")
print(f"  delta f = {frequency_shift(spec, params) / 1e3:.2f} kHz")
