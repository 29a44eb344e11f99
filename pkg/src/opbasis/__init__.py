"""opbasis: physics-informed operator networks with a custom derivative
engine, adaptive kernel-based loss weighting, trunk basis extraction, and
Galerkin spectral evolution on the extracted basis."""

__version__ = "0.1.0"
