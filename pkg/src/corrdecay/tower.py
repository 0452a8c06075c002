"""Young towers at finite truncation.

A tower stacks the base map under a per-branch return time tau: level l
holds the cells with tau >= l+1, the tower map climbs levels and re-enters
level 0 through the base branches, and the reference measure weights every
level slice by 1/tau_bar.  The tower operator L shifts level l-1 into level
l and assembles level 0 from the weighted tops of all branches.

Observables are stored per retained level on the base grid.  Dead regions
(cells whose column has ended, plus any omitted-branch gap) carry
nearest-alive extensions so interpolation near cell boundaries degrades by
at most one grid cell; integrals only ever run over alive cells.  Retained
towers are dynamically closed, so the operator conserves retained mass
exactly (quadrature defects are corrected on level 0 and charged to the
error budget); omitted columns contribute tail_sup times their measure to
budgets, never to values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .certificates import (
    DecayCertificate,
    PolynomialTail,
    ReturnTimeDistribution,
    StretchedTail,
    TowerConstants,
    tower_constants,
    ue_certificate,
)
from .errors import (
    DegenerateCertificate,
    ErrorBudgetExceeded,
    InconsistentData,
    InvalidParameter,
    NotCoprime,
    NotInB,
    NotMeanZero,
    NotYetValid,
    UseMixingPath,
)
from .grid import grid_nodes
from .maps import UEMapSpec
from .stochastic import PSequence, TailBound, coupling_matrix, poly_tail_bound, stretched_tail_bound

__all__ = [
    "TowerSpec",
    "TowerObservable",
    "TowerDecomposition",
    "build_tower",
    "tower_apply",
    "tower_apply_n",
    "integrate_tower",
    "integrate_tower_abs",
    "integrate_level",
    "integrate_e_tail",
    "level_log_seminorm",
    "tower_sup_norm",
    "indicator_level0",
    "centered_indicator_level0",
    "random_class_a_member",
    "to_class_b",
    "decompose_once",
    "tower_decay_bound",
    "nonmixing_bound",
    "measure_decay",
    "representable",
]


# ---------------------------------------------------------------------------
# grid-level machinery
# ---------------------------------------------------------------------------


class _TowerGrid:
    """Precomputed per-grid structures: node-to-cell map, nearest-alive fill
    indices per level, and exact piecewise-linear cell quadrature tables."""

    def __init__(self, tspec: "TowerSpec", grid_size: int):
        self.grid_size = grid_size
        x = grid_nodes(grid_size)
        cells = tspec.sorted_cells
        tau_sorted = tspec.sorted_tau
        n_cells = cells.shape[0]

        # node -> cell assignment, right-open cells, -1 in the omitted gap
        bounds = cells[:, 0]
        idx = np.searchsorted(bounds, x, side="right") - 1
        idx = np.clip(idx, 0, n_cells - 1)
        inside = (x >= cells[idx, 0] - 1e-12) & (x <= cells[idx, 1] + 1e-12)
        self.node_cell = np.where(inside, idx, -1)
        self.tau_node = np.where(self.node_cell >= 0, tau_sorted[np.maximum(self.node_cell, 0)], 0)

        # quadrature points per cell: cell endpoints plus interior nodes
        pts, seg0, seg1, seg_cell = [], [], [], []
        offset = 0
        for c, (a, b) in enumerate(cells):
            lo = np.searchsorted(x, a, side="right")
            hi = np.searchsorted(x, b, side="left")
            cell_pts = np.concatenate(([a], x[lo:hi], [b]))
            k = cell_pts.size
            pts.append(cell_pts)
            seg0.append(offset + np.arange(k - 1))
            seg1.append(offset + np.arange(1, k))
            seg_cell.append(np.full(k - 1, c))
            offset += k
        P = np.concatenate(pts)
        self.q_idx = np.clip((P * grid_size).astype(int), 0, grid_size - 1)
        self.q_frac = P * grid_size - self.q_idx
        self.seg0 = np.concatenate(seg0)
        self.seg1 = np.concatenate(seg1)
        self.seg_cell = np.concatenate(seg_cell)
        self.seg_dx = P[self.seg1] - P[self.seg0]
        self.cell_tau = tau_sorted

        # nearest-alive fill per level
        n_levels = tspec.n_levels
        n_nodes = x.size
        self.fill = np.tile(np.arange(n_nodes), (n_levels, 1))
        for level in range(n_levels):
            alive = (self.node_cell >= 0) & (self.tau_node >= level + 1)
            if alive.all():
                continue
            alive_idx = np.nonzero(alive)[0]
            if alive_idx.size == 0:
                continue
            pos = np.searchsorted(alive_idx, np.arange(n_nodes))
            left = alive_idx[np.clip(pos - 1, 0, alive_idx.size - 1)]
            right = alive_idx[np.clip(pos, 0, alive_idx.size - 1)]
            nearest = np.where(
                np.abs(np.arange(n_nodes) - left) <= np.abs(right - np.arange(n_nodes)),
                left,
                right,
            )
            self.fill[level] = np.where(alive, np.arange(n_nodes), nearest)
        self.alive_nodes = (self.node_cell[None, :] >= 0) & (
            self.tau_node[None, :] >= np.arange(1, n_levels + 1)[:, None]
        )

    def point_values(self, values: np.ndarray) -> np.ndarray:
        return values[self.q_idx] * (1.0 - self.q_frac) + values[self.q_idx + 1] * self.q_frac

    def cell_mask_integral(self, values: np.ndarray, cell_mask: np.ndarray) -> float:
        """Exact PL integral over the union of the masked cells."""
        keep = cell_mask[self.seg_cell]
        if not keep.any():
            return 0.0
        pv = self.point_values(values)
        v0 = pv[self.seg0[keep]]
        v1 = pv[self.seg1[keep]]
        return float(np.sum(0.5 * (v0 + v1) * self.seg_dx[keep]))

    def cell_mask_abs_integral(self, values: np.ndarray, cell_mask: np.ndarray) -> float:
        keep = cell_mask[self.seg_cell]
        if not keep.any():
            return 0.0
        pv = self.point_values(values)
        v0 = pv[self.seg0[keep]]
        v1 = pv[self.seg1[keep]]
        dx = self.seg_dx[keep]
        same = v0 * v1 >= 0.0
        out = np.empty_like(v0)
        out[same] = 0.5 * (np.abs(v0[same]) + np.abs(v1[same]))
        mixed = ~same
        out[mixed] = 0.5 * (v0[mixed] ** 2 + v1[mixed] ** 2) / (
            np.abs(v0[mixed]) + np.abs(v1[mixed])
        )
        return float(np.sum(out * dx))


# ---------------------------------------------------------------------------
# tower spec and observables
# ---------------------------------------------------------------------------


@dataclass
class TowerSpec:
    base: UEMapSpec
    tau: np.ndarray  # per branch, aligned with base.branches
    tail_law: PolynomialTail | StretchedTail | None
    L_max: int
    constants: TowerConstants
    dist: ReturnTimeDistribution
    sorted_cells: np.ndarray = field(repr=False)
    sorted_tau: np.ndarray = field(repr=False)
    _grids: dict = field(default_factory=dict, repr=False)
    _tail_bound: TailBound | None = field(default=None, repr=False)

    @property
    def n_levels(self) -> int:
        return int(min(self.L_max, int(self.tau.max())))

    @property
    def mixing(self) -> bool:
        return self.constants.d == 1

    @property
    def tau_bar(self) -> float:
        return self.constants.tau_bar

    def grid(self, grid_size: int) -> _TowerGrid:
        g = self._grids.get(grid_size)
        if g is None:
            g = _TowerGrid(self, grid_size)
            self._grids[grid_size] = g
        return g

    def retained_mass(self) -> float:
        """m_Delta-mass of the retained columns (levels below L_max of
        retained branches)."""
        widths = self.sorted_cells[:, 1] - self.sorted_cells[:, 0]
        heights = np.minimum(self.sorted_tau, self.L_max)
        return float(np.sum(widths * heights) / self.tau_bar)

    def level0_mass(self) -> float:
        """Full-measure m_Delta(Delta_0) = 1/tau_bar."""
        return 1.0 / self.tau_bar

    def tail_bound(self) -> TailBound:
        """Raw tail bound for h built from the declared law and tower constants.

        The curve may exceed one (it is a bound, not a probability); the
        decay-bound operations cap the factor at one where the bounded
        quantity is itself a probability.
        """
        if self._tail_bound is None:
            if self.tail_law is None:
                raise InvalidParameter("tower has no declared tail law")
            tc = self.constants
            if isinstance(self.tail_law, PolynomialTail):
                self._tail_bound = poly_tail_bound(
                    self.tail_law.C_tau, self.tail_law.beta, tc.R, tc.N, tc.p_minus1
                )
            else:
                self._tail_bound = stretched_tail_bound(
                    self.tail_law.C_tau,
                    self.tail_law.A,
                    self.tail_law.gamma,
                    tc.R,
                    tc.N,
                    tc.p_minus1,
                )
        return self._tail_bound

    def pseq(self) -> PSequence:
        return PSequence.from_tower_constants(self.constants)


@dataclass
class TowerObservable:
    """Per-level node values on the base grid, plus tail bookkeeping.

    tail_sup bounds the observable on omitted columns; a_preimage certifies
    constructive membership in the image class L^N(A) when present.
    """

    levels: np.ndarray  # (n_levels, grid_size + 1)
    eta: float = 1.0
    error_budget: float = 0.0
    tail_sup: float = 0.0
    a_preimage: "TowerObservable | None" = None

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        if self.levels.ndim != 2:
            raise InvalidParameter("tower observable needs a 2-d level array")

    @property
    def grid_size(self) -> int:
        return self.levels.shape[1] - 1

    @property
    def n_levels(self) -> int:
        return self.levels.shape[0]

    def copy(self) -> "TowerObservable":
        return TowerObservable(
            self.levels.copy(),
            eta=self.eta,
            error_budget=self.error_budget,
            tail_sup=self.tail_sup,
            a_preimage=self.a_preimage,
        )


def build_tower(
    base: UEMapSpec,
    tau,
    tail_law: PolynomialTail | StretchedTail | None = None,
    L_max: int = 128,
    cert: DecayCertificate | None = None,
    dist: ReturnTimeDistribution | None = None,
    target: str = "mixing",
    allow_degenerate: bool = False,
    horizon: int = 10_000,
    max_candidates: int = 8,
) -> TowerSpec:
    """Assemble a TowerSpec: return-time distribution, constants, geometry.

    tau is one positive integer per base branch.  When dist is omitted it is
    aggregated from the retained branch masses with tail_law covering the
    remainder; a supplied dist may carry a longer exact table (the usual case
    for induced maps, where the law past the retained branches is known).
    """
    tau = np.asarray(tau, dtype=int)
    if tau.size != base.n_branches:
        raise InvalidParameter("need one return time per branch")
    if np.any(tau < 1):
        raise InvalidParameter("return times must be positive integers")
    if L_max < 1:
        raise InvalidParameter("L_max must be positive")
    cells = base.cells()
    widths = cells[:, 1] - cells[:, 0]
    support, inverse = np.unique(tau, return_inverse=True)
    branch_masses = np.bincount(inverse, weights=widths)
    if dist is None:
        dist = ReturnTimeDistribution(support=support, masses=branch_masses, tail=tail_law)
    else:
        # a supplied distribution must at least carry the retained branches
        for v, m in zip(support, branch_masses):
            if dist.mass_at(int(v)) < m - 1e-9:
                raise InconsistentData(
                    f"supplied distribution gives m(tau = {int(v)}) = "
                    f"{dist.mass_at(int(v)):.6g}, below the branch mass {m:.6g}"
                )
    if tail_law is not None:
        ns = np.arange(1, dist.n_table + 2)
        lhs = np.array([dist.mass_geq(int(n)) for n in ns])
        if np.any(lhs > tail_law.value(ns) * (1.0 + 1e-9) + 1e-12):
            raise InconsistentData("declared tail law does not dominate the return-time table")
    if cert is None:
        cert = ue_certificate(base.lam, base.K, base.eta)
    constants = tower_constants(
        cert,
        dist,
        target=target,
        allow_degenerate=allow_degenerate,
        horizon=horizon,
        max_candidates=max_candidates,
    )
    order = np.argsort(cells[:, 0])
    return TowerSpec(
        base=base,
        tau=tau,
        tail_law=tail_law,
        L_max=L_max,
        constants=constants,
        dist=dist,
        sorted_cells=cells[order],
        sorted_tau=tau[order],
    )


# ---------------------------------------------------------------------------
# integrals and norms
# ---------------------------------------------------------------------------


def integrate_level(tspec: TowerSpec, phi: TowerObservable, level: int) -> float:
    """Integral of one level slice against m_Delta (the 1/tau_bar weight included)."""
    g = tspec.grid(phi.grid_size)
    mask = g.cell_tau >= level + 1
    return g.cell_mask_integral(phi.levels[level], mask) / tspec.tau_bar


def integrate_tower(tspec: TowerSpec, phi: TowerObservable) -> float:
    g = tspec.grid(phi.grid_size)
    total = 0.0
    for level in range(phi.n_levels):
        mask = g.cell_tau >= level + 1
        total += g.cell_mask_integral(phi.levels[level], mask)
    return total / tspec.tau_bar


def integrate_tower_abs(tspec: TowerSpec, phi: TowerObservable) -> float:
    g = tspec.grid(phi.grid_size)
    total = 0.0
    for level in range(phi.n_levels):
        mask = g.cell_tau >= level + 1
        total += g.cell_mask_abs_integral(phi.levels[level], mask)
    return total / tspec.tau_bar


def integrate_e_tail(tspec: TowerSpec, phi: TowerObservable, from_k: int) -> float:
    """Integral over the union of E_k, k >= from_k (E_k: level = tau - k >= 1)."""
    if from_k < 1:
        raise InvalidParameter("E-tail defined for k >= 1")
    g = tspec.grid(phi.grid_size)
    total = 0.0
    for level in range(1, phi.n_levels):
        # on level l the cell with return time t sits in E_{t - l}
        mask = (g.cell_tau - level >= from_k) & (g.cell_tau >= level + 1)
        if mask.any():
            total += g.cell_mask_integral(phi.levels[level], mask)
    return total / tspec.tau_bar


def tower_sup_norm(tspec: TowerSpec, phi: TowerObservable) -> float:
    g = tspec.grid(phi.grid_size)
    alive = g.alive_nodes[: phi.n_levels]
    if not alive.any():
        return 0.0
    return float(np.max(np.abs(phi.levels[alive])))


def level_log_seminorm(tspec: TowerSpec, phi: TowerObservable) -> float:
    """Grid log-Hoelder seminorm within levels (the level metric separates
    distinct levels, so only same-level pairs count).

    Restricted to alive nodes; consecutive alive pairs suffice for eta = 1 by
    telescoping.  A level mixing zeros with positive values has infinite
    seminorm; all-zero levels contribute nothing (log 0 - log 0 = 0).
    """
    g = tspec.grid(phi.grid_size)
    x = grid_nodes(phi.grid_size)
    worst = 0.0
    for level in range(phi.n_levels):
        alive = g.alive_nodes[level]
        vals = phi.levels[level][alive]
        if vals.size < 2:
            continue
        if np.all(vals == 0.0):
            continue
        if np.any(vals <= 0.0):
            return math.inf
        pos = x[alive]
        quotients = np.abs(np.diff(np.log(vals))) / np.diff(pos) ** phi.eta
        if quotients.size:
            worst = max(worst, float(np.max(quotients)))
    return worst


# ---------------------------------------------------------------------------
# the tower operator
# ---------------------------------------------------------------------------


def tower_apply(tspec: TowerSpec, phi: TowerObservable) -> TowerObservable:
    """One application of the tower operator L.

    Level l >= 1 receives level l-1; level 0 is the weighted sum of every
    branch's top level at the branch preimages.  On the retained tower the
    operator conserves mass; the quadrature defect is removed by an additive
    constant on level 0 and charged to the budget.
    """
    if phi.n_levels != tspec.n_levels:
        raise InvalidParameter("observable level count does not match the tower")
    g = tspec.grid(phi.grid_size)
    nodes = grid_nodes(phi.grid_size)
    preimages, weights = tspec.base.node_tables(phi.grid_size)

    new_levels = np.empty_like(phi.levels)
    new_levels[1:] = phi.levels[:-1]

    level0 = np.zeros(phi.grid_size + 1)
    omitted_weight = 0.0
    for a in range(tspec.base.n_branches):
        top = int(tspec.tau[a]) - 1
        if top < tspec.n_levels:
            level0 += weights[a] * np.interp(preimages[a], nodes, phi.levels[top])
        else:
            omitted_weight += float(np.max(weights[a]))
    new_levels[0] = level0

    h_eta = (1.0 / phi.grid_size) ** phi.eta
    seminorm = 0.0
    for level in range(phi.n_levels):
        alive = g.alive_nodes[level]
        vals = phi.levels[level][alive]
        if vals.size >= 2:
            seminorm = max(seminorm, float(np.max(np.abs(np.diff(vals)))) * phi.grid_size)
    budget = phi.error_budget + seminorm * h_eta * math.exp(tspec.base.K)
    budget += omitted_weight * phi.tail_sup

    out = TowerObservable(
        new_levels, eta=phi.eta, error_budget=budget, tail_sup=phi.tail_sup
    )
    # conservative mass correction on level 0 (retained towers are closed)
    before = integrate_tower(tspec, phi)
    after = integrate_tower(tspec, out)
    mask0 = g.cell_tau >= 1
    width0 = float(np.sum(tspec.sorted_cells[mask0, 1] - tspec.sorted_cells[mask0, 0]))
    defect = before - after
    out.levels[0] += defect * tspec.tau_bar / width0
    out.error_budget += abs(defect) * tspec.tau_bar / width0

    # refresh nearest-alive extensions for the next interpolation pass
    for level in range(out.n_levels):
        out.levels[level] = out.levels[level][g.fill[level]]
    return out


def tower_apply_n(
    tspec: TowerSpec,
    phi: TowerObservable,
    n: int,
    budget_ceiling: float | None = None,
) -> TowerObservable:
    out = phi
    for _ in range(n):
        out = tower_apply(tspec, out)
        if budget_ceiling is not None and out.error_budget > budget_ceiling:
            raise ErrorBudgetExceeded(
                f"tower error budget {out.error_budget:.3g} exceeds ceiling {budget_ceiling:.3g}"
            )
    return out


# ---------------------------------------------------------------------------
# stock observables and class members
# ---------------------------------------------------------------------------


def indicator_level0(tspec: TowerSpec, grid_size: int = 4096) -> TowerObservable:
    levels = np.zeros((tspec.n_levels, grid_size + 1))
    levels[0] = 1.0
    return TowerObservable(levels, eta=tspec.base.eta, tail_sup=0.0)


def centered_indicator_level0(tspec: TowerSpec, grid_size: int = 4096) -> TowerObservable:
    """1 on level 0 minus m_Delta(Delta_0); mean zero against the full law
    measure, so on truncated towers the omitted columns carry the balance
    (tail_sup records their sup)."""
    c = tspec.level0_mass()
    levels = np.full((tspec.n_levels, grid_size + 1), -c)
    levels[0] = 1.0 - c
    return TowerObservable(levels, eta=tspec.base.eta, tail_sup=c)


def random_class_a_member(
    tspec: TowerSpec, grid_size: int, rng: np.random.Generator, margin: float = 0.9
) -> TowerObservable:
    """Random member of the regularity class A: per-level log-smooth positive
    values with logarithmic Lipschitz constant at most margin * R.

    Centred log profiles keep the sup/mass ratio below e^{2 margin R}, which
    sits inside the class bound e^R tau_bar for the towers this library
    builds; membership is still checked and a violation raises NotInB.
    """
    R = tspec.constants.R
    x = grid_nodes(grid_size)
    levels = np.empty((tspec.n_levels, grid_size + 1))
    for level in range(tspec.n_levels):
        amp = margin * R * rng.uniform(0.2, 1.0) / (2.0 * math.pi)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        levels[level] = np.exp(amp * np.sin(2.0 * math.pi * x + phase))
    phi = TowerObservable(levels, eta=tspec.base.eta)
    total = integrate_tower(tspec, phi)
    phi.levels /= total
    sup = tower_sup_norm(tspec, phi)
    cap = math.exp(R) * tspec.tau_bar * integrate_tower(tspec, phi)
    if sup > cap:
        raise NotInB("generated observable misses class A; widen the margin settings")
    return phi


def to_class_b(tspec: TowerSpec, phi: TowerObservable) -> TowerObservable:
    """Push a class-A member through L^N, storing it as the certificate of
    membership in the image class."""
    out = tower_apply_n(tspec, phi, tspec.constants.N)
    out.a_preimage = phi
    return out


# ---------------------------------------------------------------------------
# one-step decomposition
# ---------------------------------------------------------------------------


@dataclass
class TowerDecomposition:
    psi_minus1: TowerObservable
    parts: list  # psi_k for k = 0..k_rows
    masses: np.ndarray  # measured integrals of the parts
    p_targets: np.ndarray
    q: np.ndarray
    matrix: object
    last_part_truncated: bool
    slack_used: bool  # recurrence precondition met only inside the grid slack


def decompose_once(tspec: TowerSpec, psi: TowerObservable, slack: float | None = None) -> TowerDecomposition:
    """Split a unit-mass recurrence-class observable into psi_-1 + sum_k psi_k.

    psi_-1 = p_-1 tau_bar 1_{Delta_0}; the remaining mass is regrouped from
    the E_k pieces g_k through the greedy coupling matrix so that
    integral(psi_k) = p_k.  Grid slack (budget plus seminorm smearing) is
    accepted on the recurrence precondition; genuine failures raise NotInB.
    """
    tc = tspec.constants
    g = tspec.grid(psi.grid_size)
    total = integrate_tower(tspec, psi)
    if abs(total - 1.0) > 1e-8:
        raise InvalidParameter(f"decompose expects unit mass, got {total}")
    if np.any(psi.levels[g.alive_nodes[: psi.n_levels]] < -1e-12):
        raise InvalidParameter("decompose expects a nonnegative observable")
    allowed = psi.error_budget + 1e-12 if slack is None else slack
    lsn = level_log_seminorm(tspec, psi)
    h_eta = (1.0 / psi.grid_size) ** psi.eta
    if lsn > tc.R + 4.0 * tc.R * h_eta + 1e-9:
        raise NotInB(f"level log-seminorm {lsn:.6g} exceeds R = {tc.R:.6g}")
    mass0 = integrate_level(tspec, psi, 0)
    if mass0 < tc.eps * total - allowed:
        raise NotInB(
            f"level-0 mass {mass0:.6g} below eps = {tc.eps:.6g}; recurrence hypothesis fails"
        )
    slack_used = mass0 < tc.eps * total

    # psi_-1 and the level-0 remainder g_0
    base_val = tc.p_minus1 * tspec.tau_bar
    psi_m1_levels = np.zeros_like(psi.levels)
    psi_m1_levels[0] = base_val
    psi_minus1 = TowerObservable(psi_m1_levels, eta=psi.eta)

    g0 = np.zeros_like(psi.levels)
    g0[0] = psi.levels[0] - base_val
    if np.any(g0[0][g.alive_nodes[0]] < -allowed - 1e-12):
        raise NotInB("subtracting the coupled slice drove the density negative")

    # E_k pieces for k >= 1 (level = tau - k >= 1)
    max_k = int(tspec.sorted_tau.max()) - 1
    pieces = [g0]
    q = [integrate_tower(tspec, TowerObservable(g0, eta=psi.eta))]
    for k in range(1, max_k + 1):
        gk = np.zeros_like(psi.levels)
        nonzero = False
        for level in range(1, psi.n_levels):
            mask_nodes = g.alive_nodes[level] & (g.tau_node - level == k)
            if mask_nodes.any():
                gk[level][mask_nodes] = psi.levels[level][mask_nodes]
                nonzero = True
        pieces.append(gk)
        if nonzero:
            cell_mask = lambda lvl: (g.cell_tau - lvl == k) & (g.cell_tau >= lvl + 1)
            val = sum(
                g.cell_mask_integral(gk[lvl], cell_mask(lvl)) for lvl in range(1, psi.n_levels)
            ) / tspec.tau_bar
        else:
            val = 0.0
        q.append(val)
    q = np.array(q)

    # rows of the coupling matrix until the columns can complete
    q_total = float(q.sum())
    p_list = [tc.p(0)]
    p_running = p_list[0]
    while p_running < q_total - 1e-13:
        p_list.append(tc.p(len(p_list)))
        p_running += p_list[-1]
        if len(p_list) > tc.horizon:
            raise InvalidParameter(
                "p-sequence support exceeds the stored horizon; decomposition "
                "cannot complete on this tower"
            )
    p_arr = np.array(p_list)
    truncated = p_arr.sum() > q_total + 1e-13
    if truncated:
        p_arr[-1] -= p_arr.sum() - q_total
    k_rows = p_arr.size - 1
    q_padded = np.pad(q, (0, max(0, k_rows + 1 - q.size)))[: k_rows + 1]
    matrix = coupling_matrix(p_arr, q_padded, k_max=k_rows)

    parts = []
    masses = []
    for k in range(k_rows + 1):
        acc = np.zeros_like(psi.levels)
        for j in range(min(k, q.size - 1) + 1):
            s = matrix.s[k, j]
            if s != 0.0:
                acc += s * pieces[j]
        part = TowerObservable(acc, eta=psi.eta)
        parts.append(part)
        masses.append(integrate_tower(tspec, part))
    return TowerDecomposition(
        psi_minus1=psi_minus1,
        parts=parts,
        masses=np.array(masses),
        p_targets=p_arr,
        q=q,
        matrix=matrix,
        last_part_truncated=truncated,
        slack_used=slack_used,
    )


# ---------------------------------------------------------------------------
# analytic bounds and measurement
# ---------------------------------------------------------------------------


def _decay_curve(tspec: TowerSpec, phi_norm: float, n: int, clamp: bool) -> float:
    tc = tspec.constants
    if tc.R <= 0.0:
        raise DegenerateCertificate("decay bound needs R > 0; rebuild the tower with an override")
    k = n - tc.N
    if k < 0:
        if not clamp:
            raise NotYetValid(f"bound valid from n = N = {tc.N}, requested {n}")
        k = 0
    # the tail factor bounds a probability, so 1 is always a valid cap
    tail = min(float(tspec.tail_bound().bound(k)), 1.0)
    return 2.0 * phi_norm * (1.0 + 1.0 / tc.R) * tail


def tower_decay_bound(tspec: TowerSpec, phi_norm: float, n: int) -> float:
    """Analytic bound on integral |L^n phi| for ||phi||_eta = phi_norm, n >= N."""
    if phi_norm < 0.0:
        raise InvalidParameter("norm must be nonnegative")
    return _decay_curve(tspec, phi_norm, n, clamp=False)


def _sub_distribution(dist: ReturnTimeDistribution, d: int) -> ReturnTimeDistribution:
    if isinstance(dist.tail, PolynomialTail):
        tail = PolynomialTail(C_tau=dist.tail.C_tau * d**-dist.tail.beta, beta=dist.tail.beta)
    elif isinstance(dist.tail, StretchedTail):
        tail = StretchedTail(
            C_tau=dist.tail.C_tau, A=dist.tail.A * d**dist.tail.gamma, gamma=dist.tail.gamma
        )
    else:
        tail = None
    return ReturnTimeDistribution(
        support=dist.support // d,
        masses=dist.masses.copy(),
        tail=tail,
        tail_mass=dist.tail_mass,
    )


def nonmixing_bound(tspec: TowerSpec, phi_norm: float, n: int) -> float:
    """Bound on integral |sum_{k<d} L^{nd+k} phi| via the gcd-d sub-tower.

    The tower splits into d cyclic pieces on which f^d is mixing with data
    {I_k / d}; the mixing bound for the sub-tower is scaled by
    C1 d = 2 tau_bar e^R (1+R)(1+1/R) d, and by d^-(beta-1) for polynomial
    tails.  Values below the sub-tower's own N clamp to the origin of
    validity.
    """
    tc = tspec.constants
    d = tc.d
    if d < 2:
        raise UseMixingPath("tower is mixing; use tower_decay_bound")
    if tc.R <= 0.0:
        raise DegenerateCertificate("nonmixing bound needs R > 0")
    sub_dist = _sub_distribution(tspec.dist, d)
    cert = DecayCertificate(
        R=tc.R, xi=tc.xi, C=4.0 * math.exp(tc.R) * (1.0 + tc.R), gamma=1.0 - tc.xi,
        degenerate=False, source="user-override",
    )
    sub_tc = tower_constants(cert, sub_dist, target="mixing")
    if isinstance(tspec.tail_law, PolynomialTail):
        sub_law = PolynomialTail(
            C_tau=tspec.tail_law.C_tau * d**-tspec.tail_law.beta, beta=tspec.tail_law.beta
        )
        tb = poly_tail_bound(sub_law.C_tau, sub_law.beta, sub_tc.R, sub_tc.N, sub_tc.p_minus1)
        scale = d ** -(tspec.tail_law.beta - 1.0)
    elif isinstance(tspec.tail_law, StretchedTail):
        sub_law = StretchedTail(
            C_tau=tspec.tail_law.C_tau,
            A=tspec.tail_law.A * d**tspec.tail_law.gamma,
            gamma=tspec.tail_law.gamma,
        )
        tb = stretched_tail_bound(
            sub_law.C_tau, sub_law.A, sub_law.gamma, sub_tc.R, sub_tc.N, sub_tc.p_minus1
        )
        scale = 1.0
    else:
        raise InvalidParameter("nonmixing bound needs a declared tail law")
    C1 = 2.0 * tc.tau_bar * math.exp(tc.R) * (1.0 + tc.R) * (1.0 + 1.0 / tc.R)
    k = max(0, n - sub_tc.N)
    sub_bound = 2.0 * phi_norm * (1.0 + 1.0 / sub_tc.R) * min(float(tb.bound(k)), 1.0)
    return C1 * d * scale * sub_bound


def measure_decay(
    tspec: TowerSpec,
    phi: TowerObservable,
    n_max: int,
    budget_ceiling: float | None = None,
):
    """Measured L1 norms of L^n phi for n = 0..n_max, with per-step budgets.

    The mean-zero precondition is checked against the full measure: the
    retained integral must vanish up to the omitted-column allowance
    tail_sup * (1 - retained mass).
    """
    tail_allowance = phi.tail_sup * (1.0 - tspec.retained_mass())
    mean = integrate_tower(tspec, phi)
    if abs(mean) > 1e-10 + tail_allowance + phi.error_budget:
        raise NotMeanZero(f"retained mean {mean:.3g} exceeds the truncation allowance")
    l1 = np.empty(n_max + 1)
    budgets = np.empty(n_max + 1)
    current = phi
    for n in range(n_max + 1):
        l1[n] = integrate_tower_abs(tspec, current)
        budgets[n] = current.error_budget + tail_allowance
        if n < n_max:
            current = tower_apply(tspec, current)
            if budget_ceiling is not None and current.error_budget > budget_ceiling:
                raise ErrorBudgetExceeded(
                    f"budget {current.error_budget:.3g} over ceiling at step {n + 1}"
                )
    return l1, budgets


def representable(n: int, i_set) -> bool:
    """Membership of n in the numerical semigroup generated by i_set (gcd 1)."""
    gens = sorted({int(v) for v in i_set})
    if not gens or any(v < 1 for v in gens):
        raise InvalidParameter("generators must be positive integers")
    d = 0
    for v in gens:
        d = math.gcd(d, v)
    if d != 1:
        raise NotCoprime(f"generators {gens} have gcd {d}")
    if n < 0:
        return False
    reach = np.zeros(n + 1, dtype=bool)
    reach[0] = True
    for v in gens:
        for m in range(v, n + 1):
            if reach[m - v]:
                reach[m] = True
    return bool(reach[n])
