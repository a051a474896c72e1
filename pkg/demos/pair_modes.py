"""Two electrons: pinned versus free.

Pinned at separation d, the in-phase mode stays at the bare trap frequency
and the stretch mode is stiffened by the Coulomb term. Left free in a round
bowl, the pair settles at the force-balance distance and the stretch mode
lands at sqrt(3) times the trap frequency.
"""
import math

import numpy as np
import scipy.constants as sc

from heliotrap.equilibrium import ElectronConfiguration, minimize
from heliotrap.modes import eigenmodes
from heliotrap.potential import HarmonicBowl

TAU = 2 * math.pi
omega = TAU * 20e9

bowl = HarmonicBowl(aspect=0.5)
bias = bowl.bias(omega)
print("pinned pair along y, trap frequency 20 GHz (transverse 10 GHz):")
for d in (0.5, 1.0, 1.6):
    cfg = ElectronConfiguration.pinned_at([[0.0, -d / 2], [0.0, d / 2]], bowl.field, bias)
    f = eigenmodes(cfg, bowl.field, bias).omegas / TAU / 1e9
    omega_c2 = 2 * sc.e**2 / (4 * math.pi * sc.epsilon_0 * sc.m_e * (d * 1e-6) ** 3)
    stretch = math.sqrt(omega**2 + 2 * omega_c2) / TAU / 1e9
    print(f"  d = {d:3.1f} um  modes {np.array2string(f, precision=3)} GHz"
          f"  stretch closed form {stretch:.3f} GHz")

bowl = HarmonicBowl()
print("free pair in a round bowl:")
for f_e in (5e9, 20e9, 50e9):
    w = TAU * f_e
    bias = bowl.bias(w)
    cfg = minimize(bowl.field, bias, 2)
    d = np.linalg.norm(cfg.positions[0] - cfg.positions[1])
    d_exact = (sc.e**2 / (2 * math.pi * sc.epsilon_0 * sc.m_e * w**2)) ** (1 / 3) * 1e6
    ratio = eigenmodes(cfg, bowl.field, bias).omegas / w
    print(f"  f_e = {f_e / 1e9:4.0f} GHz  d = {d:.4f} um (force balance {d_exact:.4f})"
          f"  omega/omega_e = {np.array2string(ratio, precision=4)}")
