"""Correlation bounds for nonuniformly hyperbolic transformations.

Geometry enters only through the constants K0 (distance distortion along
stable/unstable disks) and rho0 (their contraction rate); everything else is
the quotient-tower machinery.  The final correlation bound combines the
hyperbolic approximation error, controlled by the integral of rho^kappa_n
(kappa_n = number of returns to the tower base by time n), with the quotient
tower's L1 decay, both evaluated at floor(n/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .certificates import NUHConstants, PolynomialTail, StretchedTail
from .errors import InconsistentData, InvalidParameter, NotIntegrable
from .stochastic import TailBound, stretched_constant_c_agamma

__all__ = ["NUHInput", "kappa_tail_bound", "nuh_correlation_bound", "kappa_stretched_rate"]


@dataclass
class NUHInput:
    """Inputs for the hyperbolic bound pipeline.

    quotient_tail is the L1 decay bound b(n) of the quotient tower (an
    analytic TailBound curve times its normalisation), tail_law the declared
    return-time law on the quotient base, tau_bar its mean return time.
    """

    nuh: NUHConstants
    eta: float
    quotient_tail: "QuotientDecay"
    tail_law: PolynomialTail | StretchedTail
    tau_bar: float

    def __post_init__(self):
        if not 0.0 < self.eta <= 1.0:
            raise InvalidParameter("eta must be in (0,1]")
        if self.tau_bar < 1.0:
            raise InvalidParameter("tau_bar must be at least 1")


@dataclass
class QuotientDecay:
    """Nonincreasing L1 decay bound b(n) for the quotient tower operator:
    |L^n phi|_1 <= b(n) ||phi|| for mean-zero Lipschitz phi."""

    tail: TailBound
    N: int
    R: float

    def __call__(self, n) -> np.ndarray | float:
        k = np.maximum(np.asarray(n) - self.N, 0)
        return 2.0 * (1.0 + 1.0 / self.R) * self.tail.bound(k)


def _series_rho_k_beta(rho: float, beta_plus_1: float) -> float:
    """sum_{k>=1} rho^k k^(beta+1), summed to relative tolerance 1e-12.

    For rho pathologically close to 1 the valid integral-plus-peak upper
    bound replaces term summation (same convention as the word-length
    series); it may be infinite.
    """
    if not 0.0 < rho < 1.0:
        raise InvalidParameter(f"rho must be in (0,1), got {rho}")
    rate = -math.log(rho)
    if beta_plus_1 / rate > 1e6:
        log_integral = math.lgamma(beta_plus_1 + 1.0) - (beta_plus_1 + 1.0) * math.log(rate)
        log_peak = beta_plus_1 * (math.log(beta_plus_1 / rate) - 1.0)
        combined = float(np.logaddexp(log_integral, log_peak))
        return math.inf if combined > 709.0 else math.exp(combined)
    total = 0.0
    k = 1
    while True:
        ks = np.arange(k, k + 2048, dtype=float)
        terms = rho**ks * ks**beta_plus_1
        total += float(terms.sum())
        k += 2048
        ratio = rho * ((k + 1.0) / k) ** beta_plus_1
        if ratio < 1.0:
            rem = rho**k * k**beta_plus_1 / (1.0 - ratio)
            if rem <= 1e-12 * max(total, 1e-300):
                return total + rem
        if k > 50_000_000:
            raise NotIntegrable("rho series did not converge")


def kappa_stretched_rate(input_: NUHInput):
    """Rate B and contraction q = rho (1 + B C1) for the stretched kappa term.

    The per-return conditional tail constant is K1 C_tau; the moment constant
    C1 = 2 K1 C_tau / A; B is the largest rate <= A/4 with q <= (1+rho)/2,
    shrunk below A/4 by bisection when needed (flagged).
    """
    law = input_.tail_law
    if not isinstance(law, StretchedTail):
        raise InvalidParameter("stretched rate asked on a non-stretched law")
    rho = input_.nuh.rho
    C1 = 2.0 * input_.nuh.K1 * law.C_tau / law.A
    target = 0.5 * (1.0 + rho)

    def q(B: float) -> float:
        return rho * (1.0 + B * C1)

    b_hi = law.A / 4.0
    shrunk = False
    if q(b_hi) <= target:
        B = b_hi
    else:
        shrunk = True
        lo, hi = 0.0, b_hi
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            if q(mid) <= target:
                lo = mid
            else:
                hi = mid
        B = lo
    if B <= 0.0:
        raise NotIntegrable("no positive stretched rate satisfies the contraction constraint")
    return B, q(B), shrunk


def kappa_constants(input_: NUHInput) -> dict:
    """The explicit constants of the kappa-tail term, for report emission."""
    law = input_.tail_law
    if isinstance(law, PolynomialTail):
        c2 = law.C_tau * _series_rho_k_beta(input_.nuh.rho, law.beta + 1.0)
        return {"C2": c2}
    B, q, shrunk = kappa_stretched_rate(input_)
    return {"B": B, "contraction": q, "B_shrunk_below_quarter_A": shrunk}


def _kappa_curve(input_: NUHInput, n: float) -> float:
    law = input_.tail_law
    rho = input_.nuh.rho
    t = max(n, 1.0) / 3.0
    if isinstance(law, PolynomialTail):
        if law.beta <= 1.0:
            raise NotIntegrable("polynomial exponent must exceed 1")
        first = (
            2.0 / input_.tau_bar * law.C_tau * law.beta / (law.beta - 1.0) * t ** (1.0 - law.beta)
        )
        c2 = law.C_tau * _series_rho_k_beta(rho, law.beta + 1.0)
        second = n * t**-law.beta * rho * c2
        return first + second
    first = (
        2.0
        / input_.tau_bar
        * law.C_tau
        * 3.0
        * stretched_constant_c_agamma(law.A, law.gamma)
        * math.exp(-0.5 * law.A * t**law.gamma)
    )
    B, q, _ = kappa_stretched_rate(input_)
    second = n * rho * q / (1.0 - q) * math.exp(-B * t**law.gamma)
    return first + second


def kappa_tail_bound(input_: NUHInput, n: int) -> float:
    """Upper bound on the integral of rho^kappa_n over the tower.

    Polynomial law: 2 tau_bar^-1 C_tau beta/(beta-1) (n/3)^(1-beta) plus
    n (n/3)^-beta rho C2 with C2 = C_tau sum_k rho^k k^(beta+1).  Stretched
    law: the matching series bound at rate A/2 plus the return-count term at
    the bisected rate B.
    """
    if n < 3:
        raise InvalidParameter("kappa tail bound stated for n >= 3")
    return _kappa_curve(input_, float(n))


def nuh_correlation_bound(input_: NUHInput, v_norm: float, w_norm: float, n: int) -> float:
    """Correlation bound (2^eta K0^eta kappa(n/2) + 2 K2 b(n/2)) |v| |w|."""
    if v_norm < 0.0 or w_norm < 0.0:
        raise InvalidParameter("norms must be nonnegative")
    if n < 2:
        raise InvalidParameter("bound stated for n >= 2")
    law_kind = "polynomial" if isinstance(input_.tail_law, PolynomialTail) else "stretched"
    if input_.quotient_tail.tail.kind != law_kind:
        raise InconsistentData(
            f"quotient tower bound is {input_.quotient_tail.tail.kind} but the "
            f"declared return-time law is {law_kind}"
        )
    half = n // 2
    nuh = input_.nuh
    kappa_term = 2.0**input_.eta * nuh.K0**input_.eta * _kappa_curve(input_, float(max(half, 1)))
    tower_term = 2.0 * nuh.K2 * float(input_.quotient_tail(half))
    return (kappa_term + tower_term) * v_norm * w_norm


def bound_rows(input_: NUHInput, v_norm: float, w_norm: float, ns) -> list:
    """CSV-ready rows (n, kappa_term, tower_term, total_bound)."""
    rows = []
    for n in ns:
        half = max(int(n) // 2, 1)
        kappa_term = (
            2.0**input_.eta * input_.nuh.K0**input_.eta * _kappa_curve(input_, float(half))
        )
        tower_term = 2.0 * input_.nuh.K2 * float(input_.quotient_tail(half))
        rows.append(
            {
                "n": int(n),
                "kappa_term": kappa_term * v_norm * w_norm,
                "tower_term": tower_term * v_norm * w_norm,
                "total_bound": (kappa_term + tower_term) * v_norm * w_norm,
            }
        )
    return rows
