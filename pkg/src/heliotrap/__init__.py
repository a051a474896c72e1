"""Charge sensing of electrons trapped on helium with a microwave resonator.

Gate potentials -> N-electron equilibria -> vibrational modes -> cavity
susceptibility, frequency shift and reflection spectra.
"""
__version__ = "0.1.0"
