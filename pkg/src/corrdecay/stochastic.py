"""Probabilistic skeleton of the tower argument.

The coupling matrix redistributes a mass sequence q onto a target p under
cumulative dominance; words w over the nonnegative integers carry the
bookkeeping of repeated coupling rounds through h(w) = sum(w) + N |w|, and
the decay of P(h > n) is what the analytic tail bounds control.  Monte Carlo
sampling of h uses the counter-based Philox generator in fixed-size chunks,
so results are reproducible and independent of any parallel split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    InconsistentData,
    InternalCheckError,
    InvalidParameter,
    NoFeasibleRate,
    NotDominated,
    NotIntegrable,
)

__all__ = [
    "PSequence",
    "CouplingMatrix",
    "TailBound",
    "EmpiricalTail",
    "coupling_matrix",
    "word_h",
    "sample_h",
    "poly_tail_bound",
    "stretched_tail_bound",
    "wilson_upper",
]

_WILSON_Z99 = 2.5758293035489004  # two-sided 99% normal quantile


# ---------------------------------------------------------------------------
# coupling matrix
# ---------------------------------------------------------------------------


@dataclass
class CouplingMatrix:
    """Lower-triangular entries s[k,j] with sum_j s[k,j] q_j = p_k per row and
    column sums converging to one."""

    s: np.ndarray
    p: np.ndarray
    q: np.ndarray

    def row_defects(self) -> np.ndarray:
        return self.s @ self.q - self.p[: self.s.shape[0]]

    def column_sums(self) -> np.ndarray:
        return self.s.sum(axis=0)


def coupling_matrix(p, q, k_max: int | None = None) -> CouplingMatrix:
    """Greedy construction of the redistribution matrix.

    Requires equal totals and cumulative dominance sum_{j<=k} q_j >=
    sum_{j<=k} p_j; zero q-columns are handled by s[k,j] = delta_{k,j}.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0.0) or np.any(q < 0.0):
        raise InvalidParameter("sequences must be nonnegative")
    n = max(p.size, q.size)
    p = np.pad(p, (0, n - p.size))
    q = np.pad(q, (0, n - q.size))
    if abs(p.sum() - q.sum()) > 1e-12 * max(1.0, p.sum()):
        raise InvalidParameter(f"totals differ: sum p = {p.sum()}, sum q = {q.sum()}")
    cum_gap = np.cumsum(q) - np.cumsum(p)
    bad = np.nonzero(cum_gap < -1e-12)[0]
    if bad.size:
        raise NotDominated(int(bad[0]))
    if k_max is None:
        k_max = n - 1
    k_max = min(k_max, n - 1)

    s = np.zeros((k_max + 1, k_max + 1))
    col_used = np.zeros(k_max + 1)
    for k in range(k_max + 1):
        row_mass = 0.0
        for j in range(k + 1):
            if q[j] == 0.0:
                s[k, j] = 1.0 if k == j else 0.0
                continue
            take = min(1.0 - col_used[j], (p[k] - row_mass) / q[j])
            take = min(max(take, 0.0), 1.0)
            s[k, j] = take
            row_mass += take * q[j]
        col_used[: k + 1] += s[k, : k + 1]
    return CouplingMatrix(s=s, p=p, q=q)


# ---------------------------------------------------------------------------
# word space
# ---------------------------------------------------------------------------


def word_h(w, N: int) -> int:
    """Total elapsed time of a word of round outcomes: sum(w) + N |w|."""
    w = list(w)
    return int(sum(int(x) for x in w) + N * len(w))


@dataclass
class PSequence:
    """Round-outcome distribution: atom p_minus1, then p_0, p_1, ... with an
    optional lumped tail mass beyond the stored table."""

    p_minus1: float
    p0: float
    p: np.ndarray
    N: int
    tail_mass: float = 0.0

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p_minus1 < 0.0 or self.p0 < 0.0 or np.any(self.p < -1e-15):
            raise InvalidParameter("probabilities must be nonnegative")
        self.p = np.maximum(self.p, 0.0)
        if self.N < 1:
            raise InvalidParameter("N must be a positive integer")
        total = self.p_minus1 + self.p0 + float(self.p.sum()) + self.tail_mass
        if abs(total - 1.0) > 1e-9:
            raise InconsistentData(f"probabilities sum to {total}, not 1")

    @classmethod
    def from_tower_constants(cls, tc) -> "PSequence":
        return cls(
            p_minus1=tc.p_minus1,
            p0=tc.p0,
            p=tc.p_seq.copy(),
            N=tc.N,
            tail_mass=tc.t(tc.horizon + 1),
        )


@dataclass
class EmpiricalTail:
    """Empirical tail of h with its Wilson upper confidence envelope."""

    n: np.ndarray
    tail: np.ndarray
    wilson: np.ndarray
    n_samples: int
    seed: int
    mean_word_length: float


def wilson_upper(successes: np.ndarray, n: int, z: float = _WILSON_Z99) -> np.ndarray:
    """Wilson score upper confidence limit for a binomial proportion."""
    x = np.asarray(successes, dtype=float)
    phat = x / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = phat + z2 / (2.0 * n)
    rad = z * np.sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n))
    return (centre + rad) / denom


def sample_h(
    pseq: PSequence,
    n_samples: int,
    seed: int,
    n_max: int = 200,
    chunk_words: int = 1 << 16,
) -> EmpiricalTail:
    """Monte Carlo tail of h: |w| geometric with success p_minus1, letters iid
    from p_n / (1 - p_minus1).

    Words whose length alone forces h > n_max draw no letters (h >= N |w|),
    and any letter beyond the stored table exceeds n_max by the length
    precondition; both shortcuts are exact.  Chunks use disjoint Philox
    counter ranges, so the result is identical under any parallel split.
    """
    if n_samples < 1:
        raise InvalidParameter("need at least one sample")
    if pseq.p_minus1 < 1e-12:
        raise InvalidParameter(
            f"p_minus1 = {pseq.p_minus1:.3g} makes word lengths numerically degenerate"
        )
    if pseq.tail_mass > 1e-15 and pseq.p.size < n_max:
        raise InvalidParameter(
            f"table of length {pseq.p.size} with tail mass cannot resolve h <= {n_max}"
        )
    letters_mass = 1.0 - pseq.p_minus1
    probs = np.concatenate(([pseq.p0], pseq.p)) / letters_mass
    cdf = np.cumsum(probs)
    counts = np.zeros(n_max + 2, dtype=np.int64)
    length_total = 0.0

    n_chunks = (n_samples + chunk_words - 1) // chunk_words
    for c in range(n_chunks):
        bg = np.random.Philox(key=seed)
        bg.advance(c * (1 << 40))
        rng = np.random.Generator(bg)
        size = min(chunk_words, n_samples - c * chunk_words)
        lengths = rng.geometric(pseq.p_minus1, size=size) - 1
        length_total += float(lengths.sum())
        hmin = pseq.N * lengths
        exceed = hmin > n_max
        counts[n_max + 1] += int(exceed.sum())
        short = lengths[~exceed]
        nz = short[short > 0]
        h_vals = np.zeros(short.size, dtype=np.int64)
        if nz.size:
            total_letters = int(nz.sum())
            u = rng.random(total_letters)
            letters = np.searchsorted(cdf, u, side="right")
            if pseq.tail_mass <= 1e-15:
                # guard roundoff at cdf[-1]; no genuine tail letters exist
                letters = np.minimum(letters, cdf.size - 1)
            else:
                # letters beyond the table stand for values > table length >= n_max
                letters = np.minimum(letters, n_max + 1)
            starts = np.concatenate(([0], np.cumsum(nz)[:-1]))
            sums = np.add.reduceat(letters, starts)
            h_vals[short > 0] = sums + pseq.N * nz
        h_vals = np.minimum(h_vals, n_max + 1)
        counts += np.bincount(h_vals, minlength=n_max + 2)[: n_max + 2]
    if counts.sum() != n_samples:
        raise InternalCheckError("sample accounting is off")

    above = n_samples - np.cumsum(counts)[: n_max + 1]
    ns = np.arange(n_max + 1)
    tail = above / n_samples
    wilson = wilson_upper(above, n_samples)
    return EmpiricalTail(
        n=ns,
        tail=tail,
        wilson=wilson,
        n_samples=n_samples,
        seed=seed,
        mean_word_length=length_total / n_samples,
    )


# ---------------------------------------------------------------------------
# analytic tail bounds
# ---------------------------------------------------------------------------


def _log_power_series_k_beta(beta: float, p: float, rtol: float = 1e-12) -> float:
    """log of sum_{k>=1} k^beta (1-p)^k, p in (0,1).

    Moderate p: adaptive term summation with a remainder bound.  When p is so
    small that the mode beta/rate (rate = -log(1-p), computed via log1p) is
    out of reach, the valid upper bound Gamma(beta+1)/rate^(beta+1) plus the
    peak term is used instead; working in logs keeps downstream constants
    finite even when the series itself overflows float64.
    """
    if not 0.0 < p < 1.0:
        raise InvalidParameter(f"p must be in (0,1), got {p}")
    rate = -math.log1p(-p)
    if beta / rate > 1e6:
        log_integral = math.lgamma(beta + 1.0) - (beta + 1.0) * math.log(rate)
        log_peak = beta * (math.log(beta / rate) - 1.0)
        return float(np.logaddexp(log_integral, log_peak))
    r = 1.0 - p
    total = 0.0
    k = 1
    block = 4096
    while True:
        ks = np.arange(k, k + block, dtype=float)
        terms = ks**beta * r**ks
        total += float(terms.sum())
        k += block
        # past the mode the term ratio is below r * ((k+1)/k)^beta < 1
        ratio = r * ((k + 1.0) / k) ** beta
        if ratio < 1.0:
            last = float(k**beta * r**k)
            remainder = last / (1.0 - ratio)
            if remainder <= rtol * max(total, 1e-300):
                return math.log(total + remainder)
        if k > 100_000_000:
            raise NotIntegrable("series did not converge")


def _power_series_k_beta(beta: float, r: float) -> float:
    """sum_{k>=1} k^beta r^k; may overflow to inf for r extremely close to 1."""
    lg = _log_power_series_k_beta(beta, 1.0 - r)
    return math.inf if lg > 709.0 else math.exp(lg)


@dataclass
class TailBound:
    """Evaluable analytic bound n -> value for P(h >= n), nonincreasing in n.

    `constants` holds every intermediate constant under its conventional
    name (C1, C1prime, C_Agamma, B, r, Cprime, C); bounds may exceed one.
    """

    kind: str  # "polynomial" | "stretched"
    constants: dict
    N: int
    p_minus1: float

    def bound(self, n) -> np.ndarray | float:
        n_arr = np.asarray(n, dtype=float)
        scalar = n_arr.ndim == 0
        n_arr = np.atleast_1d(n_arr)
        geo_rate = -math.log1p(-self.p_minus1)  # accurate for tiny p_minus1
        geo = np.exp(-geo_rate * np.maximum(n_arr, 0.0) / (2.0 * self.N))
        if self.kind == "polynomial":
            beta = self.constants["beta"]
            log_main = (
                self.constants["log_C1prime"]
                + (beta - 1.0) * math.log(2.0)
                - (beta - 1.0) * np.log(np.maximum(n_arr, 1.0))
            )
            main = np.exp(np.minimum(log_main, 709.0))
            main[log_main > 709.0] = math.inf
        else:
            gamma = self.constants["gamma"]
            B = self.constants["B"]
            main = self.constants["Cprime"] * np.exp(
                -B * np.maximum(n_arr, 0.0) ** gamma / 2.0**gamma
            )
        out = main + geo
        return float(out[0]) if scalar else out

    __call__ = bound


def poly_tail_bound(
    C_tau: float, beta: float, R: float, N: int, p_minus1: float
) -> TailBound:
    """Polynomial tail bound for h from the law m(tau >= n) <= C_tau n^-beta.

    Constants: C1 = C_tau e^R (1-p_minus1)^-1 beta/(beta-1) bounds the letter
    tail, C1' = C1 p_minus1 sum_k k^beta (1-p_minus1)^k bounds sums over word
    lengths, and the final curve is C1' 2^(beta-1) n^-(beta-1) plus the
    geometric word-length term (1-p_minus1)^(n/2N).
    """
    if beta <= 1.0:
        raise NotIntegrable(f"polynomial exponent must exceed 1, got {beta}")
    if C_tau <= 0.0 or R < 0.0:
        raise InvalidParameter("need C_tau > 0 and R >= 0")
    if not 0.0 < p_minus1 < 1.0:
        raise InvalidParameter("p_minus1 must be in (0,1)")
    if N < 1:
        raise InvalidParameter("N must be a positive integer")
    C1 = C_tau * math.exp(R) / (1.0 - p_minus1) * beta / (beta - 1.0)
    # compose C1' in log space: the length series alone can overflow float64
    # when p_minus1 is tiny even though C1' itself is representable
    log_series = _log_power_series_k_beta(beta, p_minus1)
    log_C1prime = math.log(C1) + math.log(p_minus1) + log_series
    C1prime = math.inf if log_C1prime > 709.0 else math.exp(log_C1prime)
    # single-constant form: sup of n^(beta-1) * curve(n)
    geo_rate = -math.log1p(-p_minus1)
    n_star = 2.0 * N * (beta - 1.0) / geo_rate
    geo_peak = (max(n_star, 1.0) / math.e) ** (beta - 1.0) if n_star > 1.0 else 1.0
    constants = {
        "beta": beta,
        "C_tau": C_tau,
        "R": R,
        "C1": C1,
        "C1prime": C1prime,
        "log_C1prime": log_C1prime,
        "C": C1prime * 2.0 ** (beta - 1.0) + geo_peak,
    }
    return TailBound(kind="polynomial", constants=constants, N=N, p_minus1=p_minus1)


def stretched_constant_c_agamma(A: float, gamma: float) -> float:
    """C_{A,gamma} = max(1, gamma^-1 A^(-1/gamma) (2q)^q), q = 1/gamma - 1,
    with the convention 0^0 = 1 so that gamma = 1 gives max(1, 1/A)."""
    q = 1.0 / gamma - 1.0
    factor = 1.0 if q == 0.0 else (2.0 * q) ** q
    return max(1.0, factor * A ** (-1.0 / gamma) / gamma)


def stretched_tail_bound(
    C_tau: float, A: float, gamma: float, R: float, N: int, p_minus1: float
) -> TailBound:
    """Stretched-exponential tail bound for h from m(tau >= n) <= C_tau e^(-A n^gamma).

    Letter tail constant c_w = 3 (1-p_minus1)^-1 e^R C_tau C_{A,gamma} at rate
    A/2; the moment constant is C1 = 4 c_w / A; B is the largest rate <= A/4
    with r = (1 + B C1)(1 - p_minus1) <= 1 - p_minus1/2, found by bisection;
    the curve is C' e^(-B n^gamma / 2^gamma) + (1-p_minus1)^(n/2N) with
    C' = p_minus1 / (1 - r).
    """
    if A <= 0.0 or C_tau <= 0.0 or R < 0.0:
        raise InvalidParameter("need A > 0, C_tau > 0, R >= 0")
    if not 0.0 < gamma <= 1.0:
        raise InvalidParameter("gamma must be in (0,1]")
    if not 0.0 < p_minus1 < 1.0:
        raise NoFeasibleRate(f"p_minus1 = {p_minus1} leaves no feasible contraction rate")
    if N < 1:
        raise InvalidParameter("N must be a positive integer")
    c_agamma = stretched_constant_c_agamma(A, gamma)
    c_w = 3.0 / (1.0 - p_minus1) * math.exp(R) * C_tau * c_agamma
    C1 = 4.0 * c_w / A
    target = 1.0 - p_minus1 / 2.0

    def contraction(B: float) -> float:
        return (1.0 + B * C1) * (1.0 - p_minus1)

    b_hi = A / 4.0
    if contraction(b_hi) <= target:
        B = b_hi
    else:
        lo, hi = 0.0, b_hi
        for _ in range(48):
            mid = 0.5 * (lo + hi)
            if contraction(mid) <= target:
                lo = mid
            else:
                hi = mid
        B = lo
    if B <= 0.0:
        raise NoFeasibleRate("bisection found no positive rate B")
    r = contraction(B)
    Cprime = p_minus1 / (1.0 - r)
    # single-constant Prop form: both terms under rate B_final = min(B/2^gamma, c_geo)
    c_geo = -math.log(1.0 - p_minus1) / (2.0 * N)
    B_final = min(B / 2.0**gamma, c_geo)
    constants = {
        "gamma": gamma,
        "A": A,
        "C_tau": C_tau,
        "R": R,
        "C_Agamma": c_agamma,
        "c_w": c_w,
        "C1": C1,
        "B": B,
        "r": r,
        "Cprime": Cprime,
        "B_final": B_final,
        "C": Cprime + 1.0,
    }
    return TailBound(kind="stretched", constants=constants, N=N, p_minus1=p_minus1)
