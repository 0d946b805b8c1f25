"""Closed-form limit covariance kernels.

These are the ground truth the Monte Carlo harness compares against:
Brownian-bridge kernels for indicator classes, the cumulative-hazard
variance function C for Nelson-Aalen limits, and the product-limit
kernel for Kaplan-Meier limits, each with the permutation coefficient
(1/lambda_i * 1{i=j} - 1) or the bootstrap coefficient
(1{i=j} / lambda_i).

Population objects come in two flavours sharing one evaluation path:
plug-in (built from pooled empirical step functions, what the
conditional statements compare against at finite N) and analytic
(closed forms or adaptive quadrature with a 1e-10 absolute target).

The pooled-bootstrap covariance block for the joint (at-risk,
uncensored) pair is not displayed in closed form anywhere; it is taken
as the i = j permutation block with coefficient 1/lambda_i, consistent
with independent H-Brownian-bridge limits (derived by analogy).
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .empirical import LambdaVector
from .errors import ContractError, SingularityError
from .functionals import HazardBundle, kaplan_meier, nelson_aalen
from .stepfn import StepFn

__all__ = [
    "KernelKind",
    "perm_coeff",
    "boot_coeff",
    "PlainPopulation",
    "EmpiricalSurvivalPopulation",
    "AnalyticSurvivalPopulation",
    "exponential_survival_population",
    "bb_cov",
    "c_function",
    "indicator_kernel",
    "na_kernel",
    "km_kernel",
    "survival_cross_kernel",
    "assemble_kernel_matrix",
]

QUAD_ABS_TOL = 1e-10


class KernelKind(enum.Enum):
    PERM_INDICATOR = "perm-indicator"
    BOOT_INDICATOR = "boot-indicator"
    PERM_SURVIVAL_NA = "perm-survival-na"
    BOOT_SURVIVAL_NA = "boot-survival-na"
    PERM_KM = "perm-km"
    BOOT_KM = "boot-km"
    PERM_SURVIVAL_CROSS = "perm-survival-cross"
    BOOT_SURVIVAL_CROSS = "boot-survival-cross"


_PERM_KINDS = {
    KernelKind.PERM_INDICATOR,
    KernelKind.PERM_SURVIVAL_NA,
    KernelKind.PERM_KM,
    KernelKind.PERM_SURVIVAL_CROSS,
}


def perm_coeff(lambdas: LambdaVector, i: int, j: int) -> float:
    """Permutation limit coefficient 1/lambda_i * 1{i=j} - 1."""
    return (1.0 / lambdas[i] if i == j else 0.0) - 1.0


def boot_coeff(lambdas: LambdaVector, i: int, j: int) -> float:
    """Pooled-bootstrap coefficient: independent groups, 1/lambda_i on
    the diagonal."""
    return 1.0 / lambdas[i] if i == j else 0.0


def _coeff(kind: KernelKind, lambdas, i, j):
    return perm_coeff(lambdas, i, j) if kind in _PERM_KINDS else boot_coeff(lambdas, i, j)


# -- populations -------------------------------------------------------

class PlainPopulation:
    """Pooled distribution function H, as a StepFn plug-in or an
    analytic CDF callable."""

    def __init__(self, H):
        self._H = H

    def H(self, t):
        return self._H(t)


class EmpiricalSurvivalPopulation:
    """Plug-in pooled survival quantities from a hazard bundle.

    Event data is reduced once to (time, hazard jump, at-risk level)
    triples; every kernel ingredient is a finite sum over them.
    """

    def __init__(self, bundle: HazardBundle):
        self.tau = bundle.tau
        self._at_risk = bundle.at_risk
        self._uncensored = bundle.uncensored
        lam = nelson_aalen(bundle)
        self._surv = kaplan_meier(bundle)
        events = []
        if lam.base != 0:
            events.append((0.0, lam.base, bundle.at_risk(0)))
        for u, dj in zip(lam.breakpoints, lam.jumps):
            events.append((u, dj, bundle.at_risk(u)))
        self._events = events
        self._cum_hazard = lam

    def Hbar(self, t):
        return self._at_risk(t)

    def Huc(self, t):
        return self._uncensored(t)

    def Huc_left(self, t):
        return self._uncensored.left_limit(t) if t > 0 else 0.0

    def S(self, t):
        return self._surv(t)

    def C(self, t):
        total = 0.0
        for u, dlam, r in self._events:
            if u > t:
                break
            total += (1.0 - dlam) * dlam / r
        return total

    def km_integral(self, t):
        total = 0.0
        for u, dlam, r in self._events:
            if u > t:
                break
            # roundoff band: a full-death jump may compute to 1 +- eps
            if dlam >= 1.0 - 1e-12:
                raise SingularityError(
                    f"hazard jump of 1 at time {u} inside integration range", at=u
                )
            total += dlam / ((1.0 - dlam) * r)
        return total


class AnalyticSurvivalPopulation:
    """Continuous pooled survival model from densities and survivals.

    ``uc_density`` is the density of the uncensored subdistribution
    (d/dt P(Z <= t, uncensored)); ``at_risk`` is t -> P(Z >= t).
    Cumulative quantities are adaptive quadratures at 1e-10 absolute.
    """

    def __init__(self, uc_density, at_risk, tau, *, cum_hazard=None):
        self._f = uc_density
        self._hbar = at_risk
        self.tau = tau
        self._cum_hazard_fn = cum_hazard

    def Hbar(self, t):
        return self._hbar(t)

    def Huc(self, t):
        val, _err = quad(self._f, 0.0, t, epsabs=QUAD_ABS_TOL)
        return val

    Huc_left = Huc  # continuous model: no atoms

    def cum_hazard(self, t):
        if self._cum_hazard_fn is not None:
            return self._cum_hazard_fn(t)
        val, _err = quad(lambda u: self._f(u) / self._hbar(u), 0.0, t,
                         epsabs=QUAD_ABS_TOL)
        return val

    def S(self, t):
        return math.exp(-self.cum_hazard(t))

    def C(self, t):
        val, _err = quad(lambda u: self._f(u) / self._hbar(u) ** 2, 0.0, t,
                         epsabs=QUAD_ABS_TOL)
        return val

    km_integral = C  # the (1 - dLambda) factors coincide when Lambda is continuous


def exponential_survival_population(fail_rates, cens_rates, lambdas, tau):
    """Pooled mixture of exponential failure / exponential censoring groups.

    ``cens_rates`` entries may be 0 for uncensored groups.
    """
    fail_rates = tuple(fail_rates)
    cens_rates = tuple(cens_rates)
    lam = tuple(lambdas.values if isinstance(lambdas, LambdaVector) else lambdas)
    if not len(fail_rates) == len(cens_rates) == len(lam):
        raise ContractError("need one (failure, censoring) rate pair per group")

    def uc_density(u):
        return sum(
            w * a * math.exp(-(a + c) * u)
            for w, a, c in zip(lam, fail_rates, cens_rates)
        )

    def at_risk(u):
        return sum(
            w * math.exp(-(a + c) * u)
            for w, a, c in zip(lam, fail_rates, cens_rates)
        )

    cum_hazard = None
    if len(set(zip(fail_rates, cens_rates))) == 1:
        a = fail_rates[0]
        cum_hazard = lambda t: a * t  # identical groups: pooled hazard is the common one
    return AnalyticSurvivalPopulation(uc_density, at_risk, tau, cum_hazard=cum_hazard)


# -- kernels -----------------------------------------------------------

def bb_cov(pop: PlainPopulation, s, t) -> float:
    """H-Brownian-bridge covariance H(min) - H(s) H(t)."""
    return pop.H(min(s, t)) - pop.H(s) * pop.H(t)


def c_function(pop, t) -> float:
    return pop.C(t)


def indicator_kernel(kind: KernelKind, pop: PlainPopulation, lambdas, i, j, s, t):
    if kind not in (KernelKind.PERM_INDICATOR, KernelKind.BOOT_INDICATOR):
        raise ContractError(f"{kind} is not an indicator kernel")
    return _coeff(kind, lambdas, i, j) * bb_cov(pop, s, t)


def na_kernel(kind: KernelKind, pop, lambdas, i, j, s, t):
    if kind not in (KernelKind.PERM_SURVIVAL_NA, KernelKind.BOOT_SURVIVAL_NA):
        raise ContractError(f"{kind} is not a Nelson-Aalen kernel")
    return _coeff(kind, lambdas, i, j) * pop.C(min(s, t))


def km_kernel(kind: KernelKind, pop, lambdas, i, j, s, t):
    if kind not in (KernelKind.PERM_KM, KernelKind.BOOT_KM):
        raise ContractError(f"{kind} is not a Kaplan-Meier kernel")
    c = _coeff(kind, lambdas, i, j)
    if c == 0.0:
        return 0.0
    return c * pop.S(s) * pop.S(t) * pop.km_integral(min(s, t))


def _cross_entry(pop, s, t):
    """E[G_uc(s) G_bar(t)] for a single H-bridge pair."""
    ind = pop.Huc(s) - pop.Huc_left(t) if t <= s else 0.0
    return ind - pop.Huc(s) * pop.Hbar(t)


def survival_cross_kernel(kind: KernelKind, pop, lambdas, i, j, s, t) -> np.ndarray:
    """2x2 covariance block of the (at-risk, uncensored) pair at (s, t),
    rows/cols ordered (bar, uc)."""
    if kind not in (KernelKind.PERM_SURVIVAL_CROSS, KernelKind.BOOT_SURVIVAL_CROSS):
        raise ContractError(f"{kind} is not a survival cross kernel")
    c = _coeff(kind, lambdas, i, j)
    bar_bar = pop.Hbar(max(s, t)) - pop.Hbar(s) * pop.Hbar(t)
    uc_uc = pop.Huc(min(s, t)) - pop.Huc(s) * pop.Huc(t)
    return c * np.array(
        [
            [bar_bar, _cross_entry(pop, t, s)],
            [_cross_entry(pop, s, t), uc_uc],
        ]
    )


def assemble_kernel_matrix(kind: KernelKind, pop, lambdas, grid) -> np.ndarray:
    """Full grid covariance matrix over groups x grid (and, for the
    cross kernels, the two survival processes)."""
    m = len(lambdas)
    grid = list(grid)
    G = len(grid)
    if kind in (KernelKind.PERM_SURVIVAL_CROSS, KernelKind.BOOT_SURVIVAL_CROSS):
        dim = 2 * m * G
        out = np.empty((dim, dim))
        for i in range(m):
            for j in range(m):
                for a, s in enumerate(grid):
                    for b, t in enumerate(grid):
                        block = survival_cross_kernel(kind, pop, lambdas, i, j, s, t)
                        for p in range(2):
                            for q in range(2):
                                out[(i * 2 + p) * G + a, (j * 2 + q) * G + b] = block[p, q]
        return out
    if kind in (KernelKind.PERM_INDICATOR, KernelKind.BOOT_INDICATOR):
        cell = lambda i, j, s, t: indicator_kernel(kind, pop, lambdas, i, j, s, t)
    elif kind in (KernelKind.PERM_SURVIVAL_NA, KernelKind.BOOT_SURVIVAL_NA):
        cell = lambda i, j, s, t: na_kernel(kind, pop, lambdas, i, j, s, t)
    else:
        cell = lambda i, j, s, t: km_kernel(kind, pop, lambdas, i, j, s, t)
    dim = m * G
    out = np.empty((dim, dim))
    for i in range(m):
        for j in range(m):
            for a, s in enumerate(grid):
                for b, t in enumerate(grid):
                    out[i * G + a, j * G + b] = cell(i, j, s, t)
    return out
