"""Closed-form radial profiles for the biased infinity Laplacian.

A profile solves ``-g'' - beta*|g'| = k`` on an interval ``[0, r_max]`` on
which ``g'`` keeps one sign. On that interval the absolute value resolves to
the linear ODE ``-g'' - b*g' = k`` with ``b = beta * branch``, whose
solution through ``g(0) = g0, g'(0) = s`` is

    g(t) = g0 + s * t * phi1(b t) + k * t**2 * phi2(b t)

with ``phi1(x) = (1 - e^-x) / x`` and ``phi2(x) = (phi1(x) - 1) / x``. Both
are evaluated without cancellation near ``x = 0``, so ``beta -> 0`` is
continuous and no separate quadratic code path is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# below this |beta| * scale the exponential and quadratic forms agree to rounding
BETA_ZERO = 1e-8


class ProfileError(ValueError):
    pass


class SignChangeError(ProfileError):
    """The profile's slope vanishes strictly inside the requested interval."""

    def __init__(self, critical_point: float, r_max: float):
        self.critical_point = critical_point
        super().__init__(f"slope changes sign at t={critical_point:.6g} inside (0, {r_max:.6g}); split the interval there")


def _phi1(x):
    x = np.asarray(x, float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    # 1 - x/2 + x^2/6 - x^3/24 + ...
    out[small] = 1 + xs * (-1 / 2 + xs * (1 / 6 + xs * (-1 / 24 + xs * (1 / 120 + xs * (-1 / 720 + xs / 5040)))))
    xl = x[~small]
    out[~small] = -np.expm1(-xl) / xl
    return out


def _phi2(x):
    x = np.asarray(x, float)
    out = np.empty_like(x)
    small = np.abs(x) < 1e-2
    xs = x[small]
    # -1/2 + x/6 - x^2/24 + x^3/120 - ...
    out[small] = -1 / 2 + xs * (1 / 6 + xs * (-1 / 24 + xs * (1 / 120 + xs * (-1 / 720 + xs * (1 / 5040 - xs / 40320)))))
    xl = x[~small]
    out[~small] = (-np.expm1(-xl) - xl) / xl ** 2
    return out


@dataclass(frozen=True)
class ConeProfile:
    beta: float
    k: float
    gamma0: float
    slope0: float
    branch: int
    r_max: float

    @property
    def signed_beta(self) -> float:
        return self.beta * self.branch

    @property
    def c1(self) -> float:
        b = self.signed_beta
        if abs(b) * max(1.0, self.r_max if math.isfinite(self.r_max) else 1.0) < BETA_ZERO:
            return self.gamma0
        return self.gamma0 + self.slope0 / b + self.k / b ** 2

    @property
    def c2(self) -> float:
        """Coefficient of ``exp(-b t)``; the linear coefficient when beta is zero."""
        b = self.signed_beta
        if abs(b) * max(1.0, self.r_max if math.isfinite(self.r_max) else 1.0) < BETA_ZERO:
            return self.slope0
        return -(self.slope0 / b + self.k / b ** 2)

    def to_dict(self) -> dict:
        return {"beta": self.beta, "k": self.k, "c1": self.c1, "c2": self.c2, "branch": self.branch,
                "r_max": self.r_max if math.isfinite(self.r_max) else None,
                "gamma0": self.gamma0, "slope0": self.slope0}

    @classmethod
    def from_dict(cls, data: dict) -> ConeProfile:
        r_max = data.get("r_max")
        return cls(float(data["beta"]), float(data["k"]), float(data["gamma0"]), float(data["slope0"]),
                   int(data["branch"]), math.inf if r_max is None else float(r_max))

    def _check(self, t):
        t = np.asarray(t, float)
        tol = 1e-12 * max(1.0, self.r_max if math.isfinite(self.r_max) else 1.0)
        if np.any(t < -tol) or np.any(t > self.r_max + tol):
            raise ProfileError(f"t outside the validity interval [0, {self.r_max:.6g}]")
        return np.clip(t, 0.0, self.r_max)

    def __call__(self, t):
        return self.eval(t)

    def eval(self, t):
        t = self._check(t)
        x = self.signed_beta * t
        out = self.gamma0 + self.slope0 * t * _phi1(x) + self.k * t ** 2 * _phi2(x)
        return out if out.ndim else float(out)

    def eval_prime(self, t):
        t = self._check(t)
        b = self.signed_beta
        out = self.slope0 * np.exp(-b * t) - self.k * t * _phi1(b * t)
        return out if out.ndim else float(out)

    def eval_second(self, t):
        t = self._check(t)
        b = self.signed_beta
        out = -np.exp(-b * t) * (b * self.slope0 + self.k)
        return out if out.ndim else float(out)

    def ode_residual(self, t):
        """``-g'' - beta*|g'| - k``; zero wherever the branch sign holds."""
        gp = self.eval_prime(t)
        out = -self.eval_second(t) - self.beta * np.abs(gp) - self.k
        return out if np.ndim(out) else float(out)


def critical_point(beta: float, k: float, slope0: float, branch: int) -> float:
    """First ``t > 0`` where the slope of the signed-branch solution vanishes (inf if none)."""
    b = beta * branch
    if k == 0:
        return math.inf
    ratio = slope0 / k
    if abs(b * ratio) < 1e-12:
        t = ratio
    else:
        arg = b * ratio
        if arg <= -1:
            return math.inf
        t = math.log1p(arg) / b
    return t if t > 0 else math.inf


def from_initial(beta: float, k: float, gamma0: float, slope0: float, r_max: float | None = None) -> ConeProfile:
    """Profile through ``g(0) = gamma0, g'(0) = slope0`` on a one-signed branch.

    With ``r_max=None`` the interval runs to the first critical point.
    Raises :class:`SignChangeError` if the slope vanishes inside ``(0, r_max)``.
    """
    beta, k, gamma0, slope0 = float(beta), float(k), float(gamma0), float(slope0)
    if slope0 > 0:
        branch = 1
    elif slope0 < 0:
        branch = -1
    else:
        branch = -1 if k > 0 else 1
    t_crit = critical_point(beta, k, slope0, branch)
    if r_max is None:
        r_max = t_crit
    else:
        r_max = float(r_max)
        if r_max <= 0:
            raise ProfileError("r_max must be positive")
        if t_crit < r_max * (1 - 1e-9):
            raise SignChangeError(t_crit, r_max)
    return ConeProfile(beta, k, gamma0, slope0, branch, r_max)


def flat_start_profile(beta: float, k: float, gamma0: float = 0.0) -> ConeProfile:
    """Increasing profile with zero initial slope; needs ``k < 0``."""
    if not k < 0:
        raise ProfileError(f"a flat-start increasing profile needs k < 0, got k={k}")
    return from_initial(beta, k, gamma0, 0.0, math.inf)


def lipschitz_majorant(beta: float, k: float, d: float) -> ConeProfile:
    """Increasing barrier on ``[0, d]`` with ``g(0) = 0`` and ``g'(d) = 0``.

    ``g(d)`` is the sup-norm excess bound for subsolutions with right-hand
    side at most ``k`` on a domain of diameter ``d``.
    """
    _check_barrier_args(k, d)
    # g'(0) = k (e^{beta d} - 1) / beta
    slope0 = k * d * float(_phi1(np.array(-beta * d)))
    if k == 0:
        return ConeProfile(float(beta), 0.0, 0.0, 0.0, 1, float(d))
    return from_initial(beta, k, 0.0, slope0, d)


def subsolution_minorant(beta: float, k: float, d: float) -> ConeProfile:
    """Decreasing subsolution barrier on ``[0, d]``: ``-g'' - beta|g'| = -k``, ``g(0) = 0``."""
    _check_barrier_args(k, d)
    if k == 0:
        return ConeProfile(float(beta), 0.0, 0.0, 0.0, -1, float(d))
    # g'(0) = k (e^{-beta d} - 1) / beta
    slope0 = -k * d * float(_phi1(np.array(beta * d)))
    return from_initial(beta, -k, 0.0, slope0, d)


def _check_barrier_args(k: float, d: float) -> None:
    if not d > 0:
        raise ProfileError(f"diameter must be positive, got {d}")
    if k < 0:
        raise ProfileError(f"k must be nonnegative, got {k}")


@dataclass(frozen=True)
class AprioriConstants:
    C1: float
    C2: float
    k: float
    beta: float
    diameter: float
    margin: float
    osc: float


def apriori_constants(beta: float, k: float, diameter: float, margin: float, osc: float) -> AprioriConstants:
    """Sup-norm excess ``C1`` and interior Lipschitz bound ``C2`` on ``{dist > margin}``.

    ``C2 = max(1, osc / g(margin)) * g'(0)`` is linear in ``k`` apart from the
    ratio, so for ``k = 0`` it is evaluated as its ``k -> 0`` limit using the
    unit profile.
    """
    C1 = lipschitz_majorant(beta, k, diameter).eval(diameter)
    unit = lipschitz_majorant(beta, 1.0, diameter)
    g_m = unit.eval(min(margin, diameter))
    gp0 = unit.slope0
    C2 = max(k * gp0, osc * gp0 / g_m)
    return AprioriConstants(float(C1), float(C2), k, beta, diameter, margin, osc)


def fd_identity_check(profile: ConeProfile, eps: float, r: float) -> tuple[float, float]:
    """Both sides of the one-dimensional ball-scheme inequality for a cone.

    Returns ``(a+ (g(r1) - g(0)) - a- (g(r2) - g(r1)), eps * k)`` with
    ``r1 = min(eps, r)`` and ``r2 = min(2 eps, r)``. The left side never
    exceeds the right; they agree when ``r >= 2 eps``.
    """
    if profile.branch != 1:
        raise ProfileError("fd_identity_check needs an increasing profile")
    if r > profile.r_max * (1 + 1e-12):
        raise ProfileError(f"r={r} exceeds the profile's validity interval {profile.r_max}")
    scale = max(1.0, abs(profile.slope0), abs(profile.k) * r)
    if r < 2 * eps and abs(profile.eval_prime(r)) > 1e-9 * scale:
        raise ProfileError("need r >= 2*eps or a vanishing slope at r")
    from .scheme import coefficients

    a_plus, a_minus = coefficients(profile.beta, eps)
    r1, r2 = min(eps, r), min(2 * eps, r)
    g0, g1, g2 = profile.eval(0.0), profile.eval(r1), profile.eval(r2)
    return a_plus * (g1 - g0) - a_minus * (g2 - g1), eps * profile.k
