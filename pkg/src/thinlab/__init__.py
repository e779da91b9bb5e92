"""Numerical laboratory for boundary potential theory of subordinate
killed Brownian motion: Bernstein-function catalog, kernel quadrature,
Whitney geometry, capacity surrogates, minimal-thinness criteria, and a
Monte Carlo cross-check."""

from .bernstein import (
    BernsteinModel,
    DensityEnvelope,
    check_assumptions,
    geometric_stable,
    iterated_geometric,
    levy_density_envelope,
    phi,
    phi_prime,
    potential_density_envelope,
    relativistic_stable,
    stable,
)

__all__ = [
    "BernsteinModel",
    "DensityEnvelope",
    "check_assumptions",
    "geometric_stable",
    "iterated_geometric",
    "levy_density_envelope",
    "phi",
    "phi_prime",
    "potential_density_envelope",
    "relativistic_stable",
    "stable",
]

__version__ = "0.1.0"
