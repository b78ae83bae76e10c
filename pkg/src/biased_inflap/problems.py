"""Benchmark problems with closed-form solutions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cone_profiles import flat_start_profile
from .geometry import DomainSpec
from .scheme import FieldLike


@dataclass(frozen=True)
class Problem:
    name: str
    spec: DomainSpec
    beta: float
    f: FieldLike
    g: FieldLike
    exact: Callable[[np.ndarray], np.ndarray] | None = None


def exponential_profile(beta: float) -> Callable[[np.ndarray], np.ndarray]:
    """Solution of ``-u'' - beta u' = 0`` on [0, 1] with u(0) = 0, u(1) = 1, in the first coordinate."""
    if beta == 0:
        return lambda x: np.asarray(x, float)[:, 0].copy()
    scale = -math.expm1(-beta)
    return lambda x: -np.expm1(-beta * np.asarray(x, float)[:, 0]) / scale


def exponential_1d(beta: float = 1.0) -> Problem:
    return Problem(f"exponential_1d(beta={beta:g})", DomainSpec.box([0.0], [1.0]), beta, 0.0,
                   lambda p: p[:, 0], exponential_profile(beta))


def exponential_mixed_box(beta: float = 1.0) -> Problem:
    """The 1D problem lifted to the unit square with reflecting faces x2 = 0 and x2 = 1."""
    spec = DomainSpec.box([0.0, 0.0], [1.0, 1.0], neumann=("x2-", "x2+"))
    return Problem(f"exponential_mixed_box(beta={beta:g})", spec, beta, 0.0,
                   lambda p: p[:, 0], exponential_profile(beta))


def flat_start_disc(beta: float = 1.0, k: float = -1.0, radius: float = 1.0) -> Problem:
    """Radial solution ``u = g(|x|)`` of ``f = k < 0`` on a Dirichlet disc."""
    prof = flat_start_profile(beta, k, 0.0)
    spec = DomainSpec.ball([0.0, 0.0], radius)

    def exact(x):
        return prof.eval(np.linalg.norm(np.asarray(x, float), axis=1))

    return Problem(f"flat_start_disc(beta={beta:g},k={k:g})", spec, beta, k, exact, exact)
