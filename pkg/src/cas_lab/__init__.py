"""Numerical laboratory for positive complex metrics and complex affine spheres.

Periodic spectral / windowed finite-difference calculus for complex metrics
g = lambda dz dwbar, the complex Tzitzeica (Gauss) equation and its Newton
continuation, flat SL(3,C) connections with holonomy, linearized-operator
spectra, quasiconformal maps, power-series transport, and a catalogue of
closed-form complex affine immersions.
"""

__version__ = "0.1.0"

from .grid import ComplexField, GridDomain, d_z, d_zbar, make_field, sample_map

__all__ = [
    "ComplexField",
    "GridDomain",
    "d_z",
    "d_zbar",
    "make_field",
    "sample_map",
    "__version__",
]
