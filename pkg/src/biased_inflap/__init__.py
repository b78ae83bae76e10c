"""Finite-difference solver for the biased infinity Laplacian with mixed boundary data.

The equation is ``-Δ∞u - beta*|Du| = f`` on a convex domain, with Dirichlet data
on part of the boundary and a reflecting (Neumann) condition on the rest.
"""

from __future__ import annotations

from .cone_profiles import ConeProfile, apriori_constants, flat_start_profile, from_initial, lipschitz_majorant
from .geometry import DomainError, DomainSpec, Grid, build_grid, neighborhoods, omega_eps_nodes
from .scheme import NonConvergedError, SchemeError, SchemeParams, SolveReport, coefficients, solve
from .verify import VerifyReport

__version__ = "0.1.0"

__all__ = [
    "ConeProfile",
    "DomainError",
    "DomainSpec",
    "Grid",
    "NonConvergedError",
    "SchemeError",
    "SchemeParams",
    "SolveReport",
    "VerifyReport",
    "apriori_constants",
    "build_grid",
    "coefficients",
    "flat_start_profile",
    "from_initial",
    "lipschitz_majorant",
    "neighborhoods",
    "omega_eps_nodes",
    "solve",
]
