"""Full-branch uniformly expanding maps on [0,1] given by inverse branches.

A map is specified by one inverse branch per partition cell: the local
inverse y -> y_a mapping [0,1] into the cell, and its log weight
y -> log zeta(y_a), the log inverse Jacobian at the preimage.  The standing
hypotheses are expansion by lambda > 1 and Hoelder distortion of log zeta
with constants (K, eta); validate_spec checks them on sampled pairs.

Countable partitions are ingested as a finite prefix plus an explicit
truncation mass, and every operator application downstream carries the
associated error term e^K * mass * sup ("truncation_error_bound").
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .certificates import PolynomialTail, ReturnTimeDistribution
from .errors import InvalidParameter, InvalidSpec
from .grid import grid_nodes, midpoint_quadrature

__all__ = [
    "Branch",
    "UEMapSpec",
    "ValidationReport",
    "affine_branch",
    "moebius_branch",
    "tabulated_branch",
    "doubling_spec",
    "moebius_test_spec",
    "lsv_induced_spec",
    "validate_spec",
    "branch_preimages",
    "truncation_error_bound",
    "spec_from_document",
    "spec_to_document",
]


@dataclass(frozen=True)
class Branch:
    """One inverse branch: local inverse, log weight, and the cell it fills.

    inverse_map and log_weight are vectorised callables on [0,1].
    forward_map, when available, inverts inverse_map on the cell and is used
    only for round-trip validation.
    """

    inverse_map: Callable
    log_weight: Callable
    cell: tuple[float, float]
    forward_map: Callable | None = None
    label: str = ""

    def weight(self, y):
        return np.exp(self.log_weight(np.asarray(y, dtype=float)))


@dataclass
class UEMapSpec:
    """Uniformly expanding map: branches plus declared constants (lambda, K, eta).

    Specs are immutable after construction and all operations on them are
    pure; the only internal state is an idempotent per-grid memo of branch
    preimage tables, so concurrent use is safe.
    """

    branches: tuple[Branch, ...]
    lam: float
    K: float
    eta: float
    truncation_mass: float = 0.0
    quad_nodes: int = 2**14
    document: dict | None = field(default=None, repr=False)
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.branches = tuple(self.branches)
        if not self.branches:
            raise InvalidSpec("a map spec needs at least one branch")
        if not self.lam > 1.0:
            raise InvalidParameter(f"lambda must exceed 1, got {self.lam}")
        if self.K < 0.0:
            raise InvalidParameter("K must be nonnegative")
        if not 0.0 < self.eta <= 1.0:
            raise InvalidParameter("eta must be in (0,1]")
        if not 0.0 <= self.truncation_mass < 1.0:
            raise InvalidParameter("truncation mass must lie in [0,1)")

    @property
    def n_branches(self) -> int:
        return len(self.branches)

    def cells(self) -> np.ndarray:
        return np.array([b.cell for b in self.branches])

    def node_tables(self, grid_size: int):
        """Preimages and weights of every branch at the grid nodes, cached.

        Returns (P, W) of shape (n_branches, grid_size+1) with
        P[a,i] = y_a(x_i) and W[a,i] = zeta(y_a(x_i)).
        """
        cached = self._tables.get(grid_size)
        if cached is not None:
            return cached
        x = grid_nodes(grid_size)
        P = np.empty((self.n_branches, x.size))
        W = np.empty_like(P)
        for a, br in enumerate(self.branches):
            P[a] = br.inverse_map(x)
            W[a] = np.exp(br.log_weight(x))
        tables = (P, W)
        self._tables[grid_size] = tables
        return tables


def branch_preimages(spec: UEMapSpec, y: float):
    """All (preimage, weight) pairs of y across retained branches."""
    if not 0.0 <= y <= 1.0:
        raise InvalidParameter(f"point {y} outside [0,1]")
    out = []
    for br in spec.branches:
        ya = float(br.inverse_map(np.array([y]))[0])
        w = float(np.exp(br.log_weight(np.array([y]))[0]))
        out.append((ya, w))
    return out


def truncation_error_bound(spec: UEMapSpec, sup_norm: float) -> float:
    """Pointwise error bound for dropping the omitted branches of P_m phi.

    Each omitted branch has weight at most e^K * m(a) because log zeta varies
    by at most K over Y and the weight integrates to the cell mass.
    """
    if sup_norm < 0.0:
        raise InvalidParameter("sup norm must be nonnegative")
    return math.exp(spec.K) * spec.truncation_mass * sup_norm


# ---------------------------------------------------------------------------
# branch builders
# ---------------------------------------------------------------------------


def _check_cell(cell) -> tuple[float, float]:
    l, r = float(cell[0]), float(cell[1])
    if not (0.0 <= l < r <= 1.0):
        raise InvalidSpec(f"cell [{l}, {r}] is not a nondegenerate subinterval of [0,1]")
    return l, r


def affine_branch(cell, orientation: int = 1, label: str = "") -> Branch:
    l, r = _check_cell(cell)
    width = r - l
    logw = math.log(width)
    if orientation not in (1, -1):
        raise InvalidSpec("orientation must be +1 or -1")
    if orientation == 1:
        inv = lambda y: l + width * np.asarray(y, dtype=float)
        fwd = lambda x: (np.asarray(x, dtype=float) - l) / width
    else:
        inv = lambda y: r - width * np.asarray(y, dtype=float)
        fwd = lambda x: (r - np.asarray(x, dtype=float)) / width
    return Branch(
        inverse_map=inv,
        log_weight=lambda y: np.full_like(np.asarray(y, dtype=float), logw),
        cell=(l, r),
        forward_map=fwd,
        label=label or f"affine[{l},{r}]",
    )


def moebius_branch(cell, curvature: float, orientation: int = 1, label: str = "") -> Branch:
    """Moebius inverse branch h(y) = l + (r-l) y (1+u) / (1 + u y), u = curvature."""
    l, r = _check_cell(cell)
    u = float(curvature)
    if u <= -1.0:
        raise InvalidSpec("curvature must exceed -1")
    width = r - l
    if orientation not in (1, -1):
        raise InvalidSpec("orientation must be +1 or -1")

    def ramp(y):
        y = np.asarray(y, dtype=float)
        return y * (1.0 + u) / (1.0 + u * y)

    def ramp_inv(s):
        s = np.asarray(s, dtype=float)
        return s / (1.0 + u - u * s)

    if orientation == 1:
        inv = lambda y: l + width * ramp(y)
        fwd = lambda x: ramp_inv((np.asarray(x, dtype=float) - l) / width)
    else:
        inv = lambda y: r - width * ramp(y)
        fwd = lambda x: ramp_inv((r - np.asarray(x, dtype=float)) / width)

    def log_weight(y):
        y = np.asarray(y, dtype=float)
        return math.log(width * (1.0 + u)) - 2.0 * np.log(1.0 + u * y)

    return Branch(
        inverse_map=inv,
        log_weight=log_weight,
        cell=(l, r),
        forward_map=fwd,
        label=label or f"moebius[{l},{r};u={u}]",
    )


def moebius_branch_constants(cell, curvature: float) -> tuple[float, float]:
    """(sup |h'|, Lipschitz constant of log h') in closed form."""
    l, r = _check_cell(cell)
    u = float(curvature)
    width = r - l
    sup_slope = width * (1.0 + u) if u >= 0.0 else width / (1.0 + u)
    lip_logw = 2.0 * u if u >= 0.0 else 2.0 * abs(u) / (1.0 + u)
    return sup_slope, lip_logw


def tabulated_branch(cell, y_samples, x_samples, label: str = "") -> Branch:
    """Branch from monotone samples (y_i, x_i) of the inverse map.

    Monotone cubic (PCHIP) interpolation preserves monotonicity; the weight
    is the interpolant's derivative.  Tabulated branches must pass
    validate_spec before use.
    """
    l, r = _check_cell(cell)
    ys = np.asarray(y_samples, dtype=float)
    xs = np.asarray(x_samples, dtype=float)
    if ys.size != xs.size or ys.size < 4:
        raise InvalidSpec("need at least four matched samples")
    if ys[0] != 0.0 or ys[-1] != 1.0 or np.any(np.diff(ys) <= 0.0):
        raise InvalidSpec("y samples must increase strictly from 0 to 1")
    d = np.diff(xs)
    if np.all(d > 0.0):
        orient = 1
    elif np.all(d < 0.0):
        orient = -1
    else:
        raise InvalidSpec("x samples are not strictly monotone")
    interp = PchipInterpolator(ys, xs)
    deriv = interp.derivative()
    fwd_interp = PchipInterpolator(xs[::orient], ys[::orient])

    def log_weight(y):
        return np.log(np.abs(deriv(np.asarray(y, dtype=float))))

    return Branch(
        inverse_map=lambda y: np.clip(interp(np.asarray(y, dtype=float)), l, r),
        log_weight=log_weight,
        cell=(l, r),
        forward_map=lambda x: fwd_interp(np.asarray(x, dtype=float)),
        label=label or f"tabulated[{l},{r}]",
    )


# ---------------------------------------------------------------------------
# stock map specs
# ---------------------------------------------------------------------------


def doubling_spec(quad_nodes: int = 2**14) -> UEMapSpec:
    """The doubling map x -> 2x mod 1: two affine branches, lambda=2, K=0."""
    doc = {
        "lambda": 2.0,
        "K": 0.0,
        "eta": 1.0,
        "truncation_mass": 0.0,
        "branches": [
            {"kind": "affine", "cell": [0.0, 0.5]},
            {"kind": "affine", "cell": [0.5, 1.0]},
        ],
    }
    return UEMapSpec(
        branches=(affine_branch([0.0, 0.5]), affine_branch([0.5, 1.0])),
        lam=2.0,
        K=0.0,
        eta=1.0,
        quad_nodes=quad_nodes,
        document=doc,
    )


def moebius_test_spec(
    curvatures=(0.25, -0.2), split: float = 0.5, quad_nodes: int = 2**14
) -> UEMapSpec:
    """Nonlinear full-branch test map with two Moebius branches.

    The declared lambda and K are the exact closed-form constants of the
    branches, so validate_spec passes with zero margin to spare.
    """
    u1, u2 = curvatures
    b1 = moebius_branch([0.0, split], u1)
    b2 = moebius_branch([split, 1.0], u2)
    s1, k1 = moebius_branch_constants([0.0, split], u1)
    s2, k2 = moebius_branch_constants([split, 1.0], u2)
    lam = 1.0 / max(s1, s2)
    if lam <= 1.0:
        raise InvalidSpec("chosen curvatures do not give a uniformly expanding map")
    doc = {
        "lambda": lam,
        "K": max(k1, k2),
        "eta": 1.0,
        "truncation_mass": 0.0,
        "branches": [
            {"kind": "moebius", "cell": [0.0, split], "curvature": u1},
            {"kind": "moebius", "cell": [split, 1.0], "curvature": u2},
        ],
    }
    return UEMapSpec(
        branches=(b1, b2),
        lam=lam,
        K=max(k1, k2),
        eta=1.0,
        quad_nodes=quad_nodes,
        document=doc,
    )


# --- induced first-return map of the intermittent interval map ------------
#
# Ambient map on [0,1]: T(x) = x (1 + 2^alpha x^alpha) on [0,1/2),
# T(x) = 2x - 1 on [1/2,1].  Inducing on Y = [1/2,1] (rescaled to [0,1])
# gives a full-branch uniformly expanding first-return map whose branch of
# return time n has cell [xi_n, xi_{n-1}) with xi_1 = 1/2, T(xi_{n+1}) = xi_n;
# the tail obeys m(tau >= n) = xi_{n-1} ~ const * n^(-1/alpha).


def _lsv_left_inverse(alpha: float):
    """Vectorised inverse of the left branch x -> x(1 + 2^alpha x^alpha)."""
    c = 2.0**alpha

    def g(u):
        u = np.asarray(u, dtype=float)
        x = np.minimum(u, 0.5)
        for _ in range(80):
            f = x * (1.0 + c * x**alpha) - u
            fp = 1.0 + c * (1.0 + alpha) * x**alpha
            step = f / fp
            x = x - step
            if np.max(np.abs(step)) < 1e-16:
                break
        return np.clip(x, 0.0, 0.5)

    return g


def _lsv_tprime(alpha: float):
    c = 2.0**alpha

    def tp(x):
        x = np.asarray(x, dtype=float)
        return 1.0 + c * (1.0 + alpha) * x**alpha

    return tp


def lsv_induced_spec(
    alpha: float = 0.5,
    n_branches: int = 64,
    law_table: int = 4096,
    quad_nodes: int = 2**12,
):
    """First-return map of the intermittent map, truncated to n_branches.

    Returns (spec, tau, dist): the UEMapSpec in rescaled coordinates on
    [0,1], the return time of each branch (aligned with spec.branches, cells
    ascending so return times descend), and the full return-time
    distribution with a declared polynomial tail of exponent beta = 1/alpha.

    lambda = 2 is exact (the return branch has slope exactly 2 and all other
    branches expand strictly faster); K is measured on a dense grid and
    declared with a 5 percent margin.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidParameter("alpha must be in (0,1)")
    if n_branches < 2:
        raise InvalidParameter("need at least two branches")
    beta = 1.0 / alpha
    g = _lsv_left_inverse(alpha)
    tprime = _lsv_tprime(alpha)

    # boundary points xi_n of the return-time slabs, well past the retained
    # branches so that downstream suffix sums stay table-exact
    n_xi = max(law_table, 4 * n_branches)
    xi = np.empty(n_xi + 1)
    xi[0] = 1.0
    xi[1] = 0.5
    for n in range(1, n_xi):
        xi[n + 1] = float(g(np.array([xi[n]]))[0])

    def make_branch(n: int) -> Branch:
        # return time n: inverse branch u -> g^(n-1)((1+u)/2), cell [xi_n, xi_{n-1})
        if n == 1:

            def inv(y):
                return 0.5 * (1.0 + np.asarray(y, dtype=float))

            def logw(y):
                return np.full_like(np.asarray(y, dtype=float), -math.log(2.0))

            def fwd(x):
                return 2.0 * np.asarray(x, dtype=float) - 1.0

            return Branch(inv, logw, (0.5, 1.0), forward_map=fwd, label="return[1]")

        def chain(y):
            v = 0.5 * (1.0 + np.asarray(y, dtype=float))
            acc = np.full_like(v, -math.log(2.0))
            for _ in range(n - 1):
                v = g(v)
                acc = acc - np.log(tprime(v))
            return v, acc

        def inv(y):
            return chain(y)[0]

        def logw(y):
            return chain(y)[1]

        def fwd(x):
            v = np.asarray(x, dtype=float)
            c = 2.0**alpha
            for _ in range(n - 1):
                v = v * (1.0 + c * v**alpha)
            return 2.0 * v - 1.0

        return Branch(inv, logw, (float(xi[n]), float(xi[n - 1])), forward_map=fwd, label=f"return[{n}]")

    branches = tuple(make_branch(n) for n in range(n_branches, 0, -1))
    tau = np.arange(n_branches, 0, -1)
    truncation = float(xi[n_branches])  # mass of omitted slabs [0, xi_n_branches)

    # measure the distortion constant on a dense grid and declare with margin
    probe = np.linspace(0.0, 1.0, 2049)
    worst = 0.0
    for br in branches:
        lw = br.log_weight(probe)
        worst = max(worst, float(np.max(np.abs(np.diff(lw))) / (probe[1] - probe[0])))
    K_declared = worst * 1.05 + 1e-9

    # declared polynomial tail: smallest C_tau valid on the computed range,
    # with margin for the asymptotic regime beyond it
    ns = np.arange(1, n_xi + 1)
    c_tau = float(np.max(xi[ns - 1] * ns**beta)) * (1.0 + 1e-6)

    dist = ReturnTimeDistribution(
        support=np.arange(1, n_xi + 1),
        masses=-np.diff(xi),
        tail=PolynomialTail(C_tau=c_tau, beta=beta),
        tail_mass=float(xi[n_xi]),
    )
    spec = UEMapSpec(
        branches=branches,
        lam=2.0,
        K=K_declared,
        eta=1.0,
        truncation_mass=truncation,
        quad_nodes=quad_nodes,
        document={
            "lambda": 2.0,
            "K": K_declared,
            "eta": 1.0,
            "truncation_mass": truncation,
            "branches": [{"kind": "lsv_induced", "alpha": alpha, "n_branches": n_branches}],
        },
    )
    return spec, tau, dist


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    passed: bool
    observed_expansion: float  # min over branches of inf |dy| / |d y_a|
    worst_distortion: float  # max over branches of |d log zeta| / |dy|^eta
    branch_distortions: list
    mass_total: float  # sum of branch masses plus truncation mass
    mass_defect: float
    quadrature_mass: float  # midpoint quadrature of P_m 1
    failures: list

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status}: expansion >= {self.observed_expansion:.6g}, "
            f"distortion <= {self.worst_distortion:.6g}, "
            f"mass defect {self.mass_defect:.3g}"
        )


def validate_spec(
    spec: UEMapSpec,
    n_samples: int = 1000,
    rtol: float = 1e-9,
    atol: float = 1e-12,
) -> ValidationReport:
    """Sample-based check of the standing hypotheses against declared constants.

    Expansion and distortion are checked on adjacent pairs of a uniform
    n_samples grid and, for eta < 1, additionally on all pairs of a coarse
    subgrid (Hoelder quotients need not peak at short range).  Structural
    failures (overlapping cells, non-monotone branches) raise InvalidSpec;
    quantitative failures are reported with passed=False.
    """
    if n_samples < 2:
        raise InvalidParameter("need at least two samples")
    cells = spec.cells()
    order = np.argsort(cells[:, 0])
    sorted_cells = cells[order]
    for (l0, r0), (l1, _r1) in zip(sorted_cells[:-1], sorted_cells[1:]):
        if l1 < r0 - 1e-12:
            raise InvalidSpec(f"cells [{l0},{r0}] and starting {l1} overlap")

    y = np.linspace(0.0, 1.0, n_samples)
    coarse = np.linspace(0.0, 1.0, min(n_samples, 65))
    failures: list[str] = []
    worst_ratio = 0.0  # max |d y_a| / |dy| across branches = 1/expansion
    worst_dist = 0.0
    branch_dists = []
    mass_total = spec.truncation_mass

    for br in spec.branches:
        ya = br.inverse_map(y)
        dya = np.diff(ya)
        if not (np.all(dya > 0.0) or np.all(dya < 0.0)):
            raise InvalidSpec(f"branch {br.label}: inverse map not strictly monotone")
        l, r = br.cell
        if np.min(ya) < l - 1e-9 or np.max(ya) > r + 1e-9:
            raise InvalidSpec(f"branch {br.label}: inverse map leaves its cell")
        ratio = float(np.max(np.abs(dya)) / (y[1] - y[0]))
        worst_ratio = max(worst_ratio, ratio)

        lw = br.log_weight(y)
        dist = float(np.max(np.abs(np.diff(lw))) / (y[1] - y[0]) ** spec.eta)
        if spec.eta < 1.0:
            lwc = br.log_weight(coarse)
            dv = np.abs(lwc[:, None] - lwc[None, :])
            dx = np.abs(coarse[:, None] - coarse[None, :]) ** spec.eta
            np.fill_diagonal(dx, np.inf)
            dist = max(dist, float(np.max(dv / dx)))
        branch_dists.append(dist)
        worst_dist = max(worst_dist, dist)

        mass = abs(float(br.inverse_map(np.array([1.0]))[0] - br.inverse_map(np.array([0.0]))[0]))
        mass_total += mass

        if br.forward_map is not None:
            # analytic branches round-trip to 1e-12; tabulated ones only to
            # their interpolation accuracy, so the structural gate is loose
            round_trip = br.forward_map(ya)
            err = float(np.max(np.abs(round_trip - y)))
            if err > 1e-6:
                failures.append(f"branch {br.label}: forward/inverse round trip off by {err:.3g}")

    if worst_ratio > (1.0 / spec.lam) * (1.0 + rtol) + atol:
        failures.append(
            f"expansion: observed {1.0 / worst_ratio:.6g} below declared lambda {spec.lam}"
        )
    if worst_dist > spec.K * (1.0 + rtol) + 1e-8:
        failures.append(f"distortion: observed {worst_dist:.6g} above declared K {spec.K}")

    mass_defect = abs(mass_total - 1.0)
    if mass_defect > 1e-8:
        failures.append(f"branch masses plus truncation sum to {mass_total}, not 1")

    def total_weight(pts):
        acc = np.zeros_like(pts)
        for br in spec.branches:
            acc += np.exp(br.log_weight(pts))
        return acc

    quad_mass = midpoint_quadrature(total_weight, spec.quad_nodes)
    quad_tol = 10.0 * math.exp(spec.K) / spec.quad_nodes**2 + 1e-9
    if abs(quad_mass + spec.truncation_mass - 1.0) > quad_tol + spec.truncation_mass * 1e-6:
        failures.append(
            f"quadrature of P1 gives {quad_mass:.12g} (expected {1.0 - spec.truncation_mass:.12g})"
        )

    return ValidationReport(
        passed=not failures,
        observed_expansion=1.0 / worst_ratio if worst_ratio > 0 else math.inf,
        worst_distortion=worst_dist,
        branch_distortions=branch_dists,
        mass_total=mass_total,
        mass_defect=mass_defect,
        quadrature_mass=quad_mass,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# JSON-shaped map documents
# ---------------------------------------------------------------------------


def spec_from_document(doc: dict) -> UEMapSpec:
    """Build a spec from the map-spec document format.

    Fields: lambda, K, eta, truncation_mass, branches (list of descriptors
    with kind in {affine, moebius, tabulated, lsv_induced}).
    """
    try:
        lam = float(doc["lambda"])
        K = float(doc["K"])
        eta = float(doc["eta"])
        entries = doc["branches"]
    except KeyError as exc:
        raise InvalidSpec(f"map document missing field {exc}") from exc
    truncation = float(doc.get("truncation_mass", 0.0))
    branches: list[Branch] = []
    for entry in entries:
        kind = entry.get("kind")
        if kind == "affine":
            branches.append(affine_branch(entry["cell"], int(entry.get("orientation", 1))))
        elif kind == "moebius":
            branches.append(
                moebius_branch(
                    entry["cell"], float(entry["curvature"]), int(entry.get("orientation", 1))
                )
            )
        elif kind == "tabulated":
            branches.append(tabulated_branch(entry["cell"], entry["y"], entry["x"]))
        elif kind == "lsv_induced":
            sub, _, _ = lsv_induced_spec(
                alpha=float(entry.get("alpha", 0.5)),
                n_branches=int(entry.get("n_branches", 64)),
            )
            branches.extend(sub.branches)
            truncation += sub.truncation_mass
        else:
            raise InvalidSpec(f"unknown branch kind {kind!r}")
    return UEMapSpec(
        branches=tuple(branches),
        lam=lam,
        K=K,
        eta=eta,
        truncation_mass=truncation,
        document=doc,
    )


def spec_to_document(spec: UEMapSpec) -> dict:
    if spec.document is None:
        raise InvalidSpec("spec was built from callables and has no document form")
    return spec.document
