"""Numerical laboratory for a C^{1+Lip} perturbation of a hyperbolic toral
automorphism: the perturbed map, its direction fields and cone estimates, the
conjugacy to the linear model, Holder exponent measurements, the periodic
spectrum, and pseudo-orbit shadowing experiments."""
from __future__ import annotations

__version__ = "0.1.0"
