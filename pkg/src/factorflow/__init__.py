"""Gradient-descent dynamics of deep matrix factorization.

Simulates the factorized dynamics (scalar, coupled, and full-matrix), evaluates
the closed-form convergence-time and step-size predictions, locates
effective-rank plateau windows, and cross-validates theory against simulation
with a reproducible experiment harness.
"""

from . import cli, dynamics, harness, prng, spectral, theory

__all__ = ["cli", "dynamics", "harness", "prng", "spectral", "theory"]
__version__ = "0.1.0"
