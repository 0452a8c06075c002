"""Explicit constants: decay certificates, tower constants, hyperbolic constants.

Everything here is closed-form arithmetic on the defining inequalities.  The
default uniformly-expanding certificate takes

    R  = 2K / (1 - lambda^-eta),
    xi = (1/2) e^-R (1 - lambda^-eta),
    C  = 4 e^R (1 + R),
    gamma = 1 - xi,

which saturates the admissibility constraint R(1 - xi e^R) >= K + lambda^-eta R
exactly.  A user override with any admissible (R, xi) pair is supported; the
tower machinery requires R > 0, so maps with K = 0 (degenerate R = 0) must be
overridden before towers are built on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta as hurwitz_zeta

from .errors import (
    DegenerateCertificate,
    InconsistentData,
    InternalCheckError,
    InvalidParameter,
    NotIntegrable,
    NotMixing,
)

__all__ = [
    "DecayCertificate",
    "PolynomialTail",
    "StretchedTail",
    "ReturnTimeDistribution",
    "TowerConstants",
    "NUHConstants",
    "ue_certificate",
    "override_certificate",
    "validate_constants",
    "k_mu_constant",
    "select_returns",
    "tower_constants",
    "nuh_constants",
]

_BOUNDARY_SLACK = 1e-12  # relative slack on threshold comparisons at exact ties


def _check_map_constants(lam: float, K: float, eta: float) -> None:
    if not lam > 1.0:
        raise InvalidParameter(f"expansion constant must exceed 1, got {lam}")
    if K < 0.0:
        raise InvalidParameter(f"distortion constant must be nonnegative, got {K}")
    if not 0.0 < eta <= 1.0:
        raise InvalidParameter(f"eta must be in (0,1], got {eta}")


@dataclass(frozen=True)
class DecayCertificate:
    """Constants (R, xi, C, gamma) certifying ||P^n phi||_eta <= C gamma^n |phi|_eta."""

    R: float
    xi: float
    C: float
    gamma: float
    degenerate: bool
    source: str  # "remark-default" | "user-override"

    def as_dict(self) -> dict:
        return {
            "R": self.R,
            "xi": self.xi,
            "C": self.C,
            "gamma": self.gamma,
            "degenerate": self.degenerate,
            "source": self.source,
        }


def ue_certificate(lam: float, K: float, eta: float) -> DecayCertificate:
    """Default certificate from (lambda, K, eta); degenerate iff K = 0."""
    _check_map_constants(lam, K, eta)
    contraction = lam**-eta
    R = 2.0 * K / (1.0 - contraction)
    xi = 0.5 * math.exp(-R) * (1.0 - contraction)
    return DecayCertificate(
        R=R,
        xi=xi,
        C=4.0 * math.exp(R) * (1.0 + R),
        gamma=1.0 - xi,
        degenerate=(K == 0.0),
        source="remark-default",
    )


def override_certificate(lam: float, K: float, eta: float, r_floor: float = 0.1) -> DecayCertificate:
    """Certificate with a user-chosen R.

    Admissibility demands R > K/(1 - lambda^-eta); xi is set to half the
    largest admissible value, xi = (1/2) e^-R (1 - lambda^-eta - K/R), which
    reduces to the default formula when K = 0.
    """
    _check_map_constants(lam, K, eta)
    if r_floor <= 0.0:
        raise InvalidParameter("override R must be positive")
    contraction = lam**-eta
    headroom = 1.0 - contraction - (K / r_floor if K > 0.0 else 0.0)
    if headroom <= 0.0:
        raise InvalidParameter(
            f"override R={r_floor} infeasible: need R > {K / (1.0 - contraction):.6g} "
            f"for lambda={lam}, K={K}, eta={eta}"
        )
    xi = 0.5 * math.exp(-r_floor) * headroom
    ok, slack = validate_constants(lam, K, eta, r_floor, xi)
    if not ok:
        raise InternalCheckError(f"override certificate failed its own constraint (slack {slack})")
    return DecayCertificate(
        R=r_floor,
        xi=xi,
        C=4.0 * math.exp(r_floor) * (1.0 + r_floor),
        gamma=1.0 - xi,
        degenerate=False,
        source="user-override",
    )


def validate_constants(lam: float, K: float, eta: float, R: float, xi: float):
    """Check R(1 - xi e^R) >= K + lambda^-eta R; returns (ok, slack)."""
    _check_map_constants(lam, K, eta)
    if R <= 0.0:
        raise InvalidParameter(f"R must be positive, got {R}")
    if not 0.0 < xi < math.exp(-R):
        raise InvalidParameter(f"xi must lie in (0, e^-R) = (0, {math.exp(-R):.6g}), got {xi}")
    slack = R * (1.0 - xi * math.exp(R)) - (K + lam**-eta * R)
    return slack >= -_BOUNDARY_SLACK, slack


def k_mu_constant(lam: float, K: float, eta: float, L_mu: float) -> float:
    """Distortion constant after a change of reference measure with
    log-density Hoelder seminorm L_mu: K + (lambda^-eta + 1) L_mu."""
    _check_map_constants(lam, K, eta)
    if L_mu < 0.0:
        raise InvalidParameter("L_mu must be nonnegative")
    return K + (lam**-eta + 1.0) * L_mu


# ---------------------------------------------------------------------------
# return-time distributions and tail laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialTail:
    """Declared law m(tau >= n) <= C_tau n^-beta."""

    C_tau: float
    beta: float

    def __post_init__(self):
        if self.C_tau <= 0.0:
            raise InvalidParameter("C_tau must be positive")
        if self.beta <= 0.0:
            raise InvalidParameter("beta must be positive")

    def value(self, n):
        return self.C_tau * np.asarray(n, dtype=float) ** -self.beta

    def suffix_sum(self, start: int) -> float:
        """sum_{n >= start} C_tau n^-beta (Hurwitz zeta); infinite for beta <= 1."""
        if self.beta <= 1.0:
            return math.inf
        return float(self.C_tau * hurwitz_zeta(self.beta, start))


@dataclass(frozen=True)
class StretchedTail:
    """Declared law m(tau >= n) <= C_tau exp(-A n^gamma)."""

    C_tau: float
    A: float
    gamma: float

    def __post_init__(self):
        if self.C_tau <= 0.0:
            raise InvalidParameter("C_tau must be positive")
        if self.A <= 0.0:
            raise InvalidParameter("A must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParameter("gamma must be in (0,1]")

    def value(self, n):
        return self.C_tau * np.exp(-self.A * np.asarray(n, dtype=float) ** self.gamma)

    def suffix_sum(self, start: int) -> float:
        total = 0.0
        n = start
        while True:
            block = np.arange(n, n + 4096)
            terms = self.value(block)
            total += float(terms.sum())
            if terms[-1] < 1e-18 * max(total, 1.0):
                return total
            n += 4096


TailLaw = PolynomialTail | StretchedTail


@dataclass
class ReturnTimeDistribution:
    """Return-time law: finite table of atom masses plus an optional tail law.

    The table covers m(tau = n) for n in `support`; mass beyond the table
    (`tail_mass`, defaulting to 1 - sum of the table) follows the declared
    tail law, which is an upper bound used as a proxy wherever suffix sums
    past the table are needed.  All derived tower inequalities stay valid
    under that substitution because every use site is monotone in the tail.
    """

    support: np.ndarray
    masses: np.ndarray
    tail: TailLaw | None = None
    tail_mass: float | None = None

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=int)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.support.size == 0:
            raise InvalidParameter("empty return-time distribution")
        if self.support.size != self.masses.size:
            raise InvalidParameter("support and masses differ in length")
        if np.any(self.masses < 0.0) or np.any(self.support < 1):
            raise InvalidParameter("return times must be >= 1 with nonnegative masses")
        order = np.argsort(self.support)
        self.support = self.support[order]
        self.masses = self.masses[order]
        if np.any(np.diff(self.support) == 0):
            raise InvalidParameter("duplicate return-time entries")
        table = float(self.masses.sum())
        if self.tail_mass is None:
            self.tail_mass = max(0.0, 1.0 - table)
        if abs(table + self.tail_mass - 1.0) > 1e-9:
            raise InconsistentData(
                f"table mass {table} + tail mass {self.tail_mass} != 1"
            )
        if self.tail_mass > 1e-15 and self.tail is None:
            raise InvalidParameter("tail mass present but no tail law declared")
        n_max = int(self.support[-1])
        # m(tau >= n) for n = 1..n_max+1, exact from the table
        suffix = np.concatenate((np.cumsum(self.masses[::-1])[::-1], [0.0]))
        idx = np.searchsorted(self.support, np.arange(1, n_max + 2))
        self._mass_geq_table = suffix[idx] + self.tail_mass  # index n-1 -> m(tau >= n)
        self._n_max = n_max
        # cum[i] = sum_{n >= i+1, n <= n_max+1} m(tau >= n)
        self._cum_geq_table = np.concatenate(
            (np.cumsum(self._mass_geq_table[::-1])[::-1], [0.0])
        )
        self._tail_suffix_base = (
            self.tail.suffix_sum(n_max + 2)
            if (self.tail is not None and self.tail_mass > 1e-15)
            else 0.0
        )

    @property
    def n_table(self) -> int:
        return self._n_max

    def mass_at(self, n: int) -> float:
        i = np.searchsorted(self.support, n)
        if i < self.support.size and self.support[i] == n:
            return float(self.masses[i])
        return 0.0

    def mass_geq(self, n) -> np.ndarray | float:
        """m(tau >= n); table-exact through n_table+1, tail law beyond."""
        n_arr = np.asarray(n)
        scalar = n_arr.ndim == 0
        n_arr = np.atleast_1d(n_arr).astype(int)
        out = np.empty(n_arr.shape, dtype=float)
        small = n_arr <= self._n_max + 1
        out[small] = self._mass_geq_table[np.maximum(n_arr[small], 1) - 1]
        if np.any(~small):
            if self.tail is None:
                out[~small] = 0.0
            else:
                out[~small] = np.minimum(self.tail_mass, self.tail.value(n_arr[~small]))
        return float(out[0]) if scalar else out

    def tau_bar(self) -> float:
        """Mean return time sum_{n>=1} m(tau >= n); tail handled by the law."""
        total = self.sum_mass_geq(1)
        if not math.isfinite(total):
            raise NotIntegrable("declared tail law gives an infinite mean return time")
        return total

    def sum_mass_geq(self, start: int) -> float:
        """sum_{k >= start} m(tau >= k), used for cumulative level masses."""
        if start < 1:
            start = 1
        if start <= self._n_max + 2:
            return float(self._cum_geq_table[start - 1]) + self._tail_suffix_base
        if self.tail is None or self.tail_mass <= 1e-15:
            return 0.0
        return self.tail.suffix_sum(start)

    def gcd(self) -> int:
        d = 0
        for n in self.support:
            d = math.gcd(d, int(n))
        if self.tail_mass > 1e-15:
            d = 1  # tail charges arbitrarily large return times
        return d


# ---------------------------------------------------------------------------
# tower constants
# ---------------------------------------------------------------------------


@dataclass
class TowerConstants:
    """All explicit tower constants plus the coupling sequences (t_n), (p_n)."""

    R: float
    xi: float
    tau_bar: float
    I_set: tuple[int, ...]
    delta: float
    d: int
    N1: int
    N2: int
    N: int
    eps: float
    p_minus1: float
    p0: float
    t_seq: np.ndarray  # t_seq[n-1] = t_n for n = 1..horizon
    p_seq: np.ndarray  # p_seq[n-1] = p_n for n = 1..horizon
    horizon: int
    dist: ReturnTimeDistribution = field(repr=False)

    def t(self, n: int) -> float:
        if n < 1:
            raise InvalidParameter("t_n defined for n >= 1")
        if n <= self.horizon:
            return float(self.t_seq[n - 1])
        return min(float(self.t_seq[0]), math.exp(self.R) * self.dist.sum_mass_geq(n + 1))

    def p(self, n: int) -> float:
        if n == -1:
            return self.p_minus1
        if n == 0:
            return self.p0
        if n <= self.horizon:
            return float(self.p_seq[n - 1])
        return self.t(n) - self.t(n + 1)

    def p_total(self) -> float:
        """eps + sum of stored p_n plus the analytic remainder; equals 1."""
        return self.eps + float(self.p_seq.sum()) + self.t(self.horizon + 1)

    def as_dict(self) -> dict:
        return {
            "R": self.R,
            "xi": self.xi,
            "tau_bar": self.tau_bar,
            "I_set": list(map(int, self.I_set)),
            "delta": self.delta,
            "d": self.d,
            "N1": self.N1,
            "N2": self.N2,
            "N": self.N,
            "eps": self.eps,
            "p_minus1": self.p_minus1,
            "p0": self.p0,
        }


def _n2_constant(R: float, dist: ReturnTimeDistribution) -> int:
    """Least n >= 1 with m_Delta(levels >= n) <= (1/2) e^-R / tau_bar."""
    threshold = 0.5 * math.exp(-R)  # tau_bar^-1 cancels on both sides
    n = 1
    while True:
        if dist.sum_mass_geq(n + 1) <= threshold * (1.0 + _BOUNDARY_SLACK):
            return n
        n += 1
        if n > 10_000_000:
            raise NotIntegrable("level masses decay too slowly to determine N2")


def select_returns(
    dist: ReturnTimeDistribution,
    target: str = "mixing",
    R: float = 0.0,
    max_candidates: int = 8,
):
    """Choose a return set {I_k} with gcd d and per-value mass >= delta.

    Candidate sets are the mass level sets {v : m(tau = v) >= delta} of the
    `max_candidates` most probable return times (values of equal mass enter
    together), and among those with the right gcd the choice maximises
    eps = (1/2) e^-R tau_bar^-1 (e^-R delta)^(N1+N2), the tightness objective
    of the recurrence constant.  N2 depends only on R and the level masses,
    so the search reduces to maximising (N1 + N2)(log delta - R) with
    N1 = max I_k^2.
    """
    if target not in ("mixing", "nonmixing"):
        raise InvalidParameter(f"unknown target {target!r}")
    d_full = dist.gcd()
    if target == "mixing" and d_full != 1:
        raise NotMixing(f"return-time support has gcd {d_full}")
    order = np.lexsort((dist.support, -dist.masses))
    order = [i for i in order if dist.masses[i] > 0.0][:max_candidates]
    if not order:
        raise InvalidParameter("distribution has no atoms to select from")
    values = np.array([int(dist.support[i]) for i in order])
    masses = np.array([float(dist.masses[i]) for i in order])
    n2 = _n2_constant(R, dist)
    best = None
    for delta in sorted(set(masses), reverse=True):
        subset = tuple(sorted(int(v) for v, m in zip(values, masses) if m >= delta))
        g = 0
        for v in subset:
            g = math.gcd(g, v)
        if g != d_full:
            continue
        n1 = max(subset) ** 2
        score = (n1 + n2) * (math.log(delta) - R)
        key = (score, -n1, delta, subset)
        if best is None or key > best[0]:
            best = (key, subset, delta, n1)
    if best is None:
        raise NotMixing(
            f"no mass level set of the top {max_candidates} return times attains "
            f"gcd {d_full}; increase max_candidates or check the distribution"
        )
    _, subset, delta, _ = best
    return subset, float(delta), int(d_full)


def tower_constants(
    cert: DecayCertificate,
    dist: ReturnTimeDistribution,
    target: str = "mixing",
    declared_d: int | None = None,
    horizon: int = 10_000,
    allow_degenerate: bool = False,
    max_candidates: int = 8,
) -> TowerConstants:
    """Tower constants N1, N2, N, eps and the sequences (t_n), (p_n).

    R = 0 certificates are rejected unless allow_degenerate is set, in which
    case e^-R = 1 is used formally throughout (valid arithmetic, but the
    decay-bound normalisation 1 + 1/R is unavailable downstream).
    """
    if cert.degenerate and not allow_degenerate:
        raise DegenerateCertificate(
            "certificate has R = 0; override R (see override_certificate) or "
            "pass allow_degenerate=True for formal constants only"
        )
    d_full = dist.gcd()
    if declared_d is not None and declared_d != d_full:
        raise InconsistentData(f"declared gcd {declared_d} but support has gcd {d_full}")
    tau_bar = dist.tau_bar()
    if not math.isfinite(tau_bar):
        raise NotIntegrable("mean return time is infinite")
    R, xi = cert.R, cert.xi
    I_set, delta, d = select_returns(dist, target=target, R=R, max_candidates=max_candidates)
    N1 = max(I_set) ** 2
    N2 = _n2_constant(R, dist)
    N = N1 + N2
    er = math.exp(R)
    eps = 0.5 * math.exp(-R) / tau_bar * (math.exp(-R) * delta) ** N
    if eps <= 0.0:
        raise NotIntegrable("recurrence constant eps underflowed to zero")
    t1 = 1.0 - eps
    ns = np.arange(1, horizon + 1)
    level_tails = np.array([dist.sum_mass_geq(int(n) + 1) for n in ns])
    t_seq = np.minimum(t1, er * level_tails)
    t_seq[0] = t1
    t_next = min(t1, er * dist.sum_mass_geq(horizon + 2))
    p_seq = -np.diff(np.concatenate((t_seq, [t_next])))
    p_seq[p_seq < 0.0] = 0.0  # guards roundoff; t_seq is nonincreasing
    return TowerConstants(
        R=R,
        xi=xi,
        tau_bar=tau_bar,
        I_set=I_set,
        delta=delta,
        d=d,
        N1=N1,
        N2=N2,
        N=N,
        eps=eps,
        p_minus1=xi * eps,
        p0=(1.0 - xi) * eps,
        t_seq=t_seq,
        p_seq=p_seq,
        horizon=horizon,
        dist=dist,
    )


# ---------------------------------------------------------------------------
# nonuniformly hyperbolic constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NUHConstants:
    """Constants K1, K2 for the hyperbolic bound pipeline; theta is forced to rho."""

    K: float
    eta: float
    K0: float
    rho: float
    theta: float
    K1: float
    K2: float

    def as_dict(self) -> dict:
        return {
            "K": self.K,
            "eta": self.eta,
            "K0": self.K0,
            "rho": self.rho,
            "theta": self.theta,
            "K1": self.K1,
            "K2": self.K2,
        }


def nuh_constants(K: float, theta: float, K0: float, eta: float, rho0: float) -> NUHConstants:
    """K1 = e^{K/(1-theta)} K/(1-theta), K2 = 1 + K1^2 + 2^eta K0^eta, rho = rho0^eta."""
    if K < 0.0:
        raise InvalidParameter("K must be nonnegative")
    if K0 < 0.0:
        raise InvalidParameter("K0 must be nonnegative")
    if not 0.0 < eta <= 1.0:
        raise InvalidParameter("eta must be in (0,1]")
    if not 0.0 < rho0 < 1.0:
        raise InvalidParameter("rho0 must be in (0,1)")
    rho = rho0**eta
    if abs(theta - rho) > 1e-12 * max(1.0, rho):
        raise InvalidParameter(
            f"theta must equal rho0^eta = {rho:.12g} (the symbolic metric is "
            f"forced to theta = rho); got theta = {theta}"
        )
    one_minus = 1.0 - rho
    K1 = math.exp(K / one_minus) * K / one_minus
    K2 = 1.0 + K1**2 + 2.0**eta * K0**eta
    return NUHConstants(K=K, eta=eta, K0=K0, rho=rho, theta=rho, K1=K1, K2=K2)
