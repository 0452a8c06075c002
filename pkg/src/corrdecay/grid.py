"""Uniform-grid observables on [0,1]: interpolation, quadrature, seminorms.

Grid convention: an observable of grid size m stores m+1 node values at
x_i = i/m, endpoints included, so piecewise-linear interpolation covers all
of [0,1] and dyadic cell boundaries fall exactly on nodes.  Quadrature of
grid observables integrates the piecewise-linear interpolant exactly;
quadrature of callables uses the composite midpoint rule.

Grid Hoelder seminorms are maxima over node pairs and therefore lower
bounds of the true seminorms; inequality tests built on them must add an
explicit grid slack term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter

__all__ = [
    "GridObservable",
    "grid_nodes",
    "holder_seminorm",
    "log_holder_seminorm",
    "integrate",
    "integrate_product",
    "integrate_interval",
    "integrate_abs_interval",
    "midpoint_quadrature",
]

DEFAULT_GRID_SIZE = 4096


def grid_nodes(grid_size: int) -> np.ndarray:
    """Nodes i/m, i = 0..m, of the size-m grid."""
    return np.linspace(0.0, 1.0, grid_size + 1)


@dataclass
class GridObservable:
    """Real observable sampled at the m+1 nodes of a uniform grid on [0,1].

    error_budget is a running sup-norm bound on the distance between the
    stored values and the function they stand for; operator applications
    only ever increase it.
    """

    values: np.ndarray
    eta: float = 1.0
    error_budget: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size < 2:
            raise InvalidParameter("grid observable needs at least two node values")
        if not 0.0 < self.eta <= 1.0:
            raise InvalidParameter(f"eta must be in (0,1], got {self.eta}")
        if self.error_budget < 0.0:
            raise InvalidParameter("error budget must be nonnegative")

    @classmethod
    def from_function(cls, f, grid_size: int = DEFAULT_GRID_SIZE, eta: float = 1.0):
        x = grid_nodes(grid_size)
        return cls(np.asarray(f(x), dtype=float) * np.ones_like(x), eta=eta)

    @classmethod
    def constant(cls, c: float, grid_size: int = DEFAULT_GRID_SIZE, eta: float = 1.0):
        return cls(np.full(grid_size + 1, float(c)), eta=eta)

    @property
    def grid_size(self) -> int:
        return self.values.size - 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.grid_size

    @property
    def nodes(self) -> np.ndarray:
        return grid_nodes(self.grid_size)

    def evaluate(self, points) -> np.ndarray:
        """Piecewise-linear interpolation at arbitrary points of [0,1]."""
        return np.interp(points, self.nodes, self.values)

    def integral(self) -> float:
        return integrate(self)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def copy(self) -> "GridObservable":
        return GridObservable(self.values.copy(), eta=self.eta, error_budget=self.error_budget)


def _pairwise_max_quotient(values: np.ndarray, nodes: np.ndarray, eta: float) -> float:
    # eta = 1: the Lipschitz quotient is maximised on adjacent nodes
    # (telescoping); otherwise scan all pairs in row chunks.
    h = nodes[1] - nodes[0]
    if eta == 1.0:
        return float(np.max(np.abs(np.diff(values))) / h)
    n = values.size
    best = 0.0
    chunk = max(1, int(2**22) // n)
    for start in range(0, n - 1, chunk):
        stop = min(start + chunk, n - 1)
        dv = np.abs(values[start:stop, None] - values[None, :])
        dx = np.abs(nodes[start:stop, None] - nodes[None, :])
        np.fill_diagonal(dx[:, start:stop], np.inf)
        dx[dx == 0.0] = np.inf
        best = max(best, float(np.max(dv / dx**eta)))
    return best


def holder_seminorm(phi: GridObservable, eta: float | None = None) -> float:
    """Grid Hoelder seminorm: max over node pairs of |v_i - v_j| / |x_i - x_j|^eta.

    This is a lower bound of the seminorm of the underlying function.
    """
    e = phi.eta if eta is None else eta
    if not 0.0 < e <= 1.0:
        raise InvalidParameter(f"eta must be in (0,1], got {e}")
    return _pairwise_max_quotient(phi.values, phi.nodes, e)


def log_holder_seminorm(phi: GridObservable, eta: float | None = None) -> float:
    """Grid Hoelder seminorm of log(phi); requires strictly positive values."""
    if np.any(phi.values <= 0.0):
        raise InvalidParameter("log-Hoelder seminorm needs strictly positive values")
    e = phi.eta if eta is None else eta
    if not 0.0 < e <= 1.0:
        raise InvalidParameter(f"eta must be in (0,1], got {e}")
    return _pairwise_max_quotient(np.log(phi.values), phi.nodes, e)


def integrate(phi: GridObservable) -> float:
    """Exact integral of the piecewise-linear interpolant (trapezoid weights)."""
    v = phi.values
    h = phi.spacing
    return float(h * (0.5 * (v[0] + v[-1]) + v[1:-1].sum()))


def integrate_product(phi: GridObservable, psi: GridObservable) -> float:
    """Exact integral of the product of the two piecewise-linear interpolants.

    Per cell with endpoint values (a0,a1), (b0,b1) the product integrates to
    h/6 * (2 a0 b0 + a0 b1 + a1 b0 + 2 a1 b1).
    """
    if phi.values.size != psi.values.size:
        raise InvalidParameter("grid sizes differ")
    a, b = phi.values, psi.values
    h = phi.spacing
    a0, a1 = a[:-1], a[1:]
    b0, b1 = b[:-1], b[1:]
    return float(h / 6.0 * np.sum(2.0 * a0 * b0 + a0 * b1 + a1 * b0 + 2.0 * a1 * b1))


def _segment_integrals(v0: np.ndarray, v1: np.ndarray, widths) -> np.ndarray:
    return 0.5 * (v0 + v1) * widths


def _segment_abs_integrals(v0: np.ndarray, v1: np.ndarray, widths) -> np.ndarray:
    same = v0 * v1 >= 0.0
    out = np.empty_like(v0)
    out[same] = 0.5 * (np.abs(v0[same]) + np.abs(v1[same]))
    mixed = ~same
    denom = np.abs(v0[mixed]) + np.abs(v1[mixed])
    out[mixed] = 0.5 * (v0[mixed] ** 2 + v1[mixed] ** 2) / denom
    return out * widths


def _clip_segments(values: np.ndarray, a: float, b: float):
    """Node/endpoint data of the piecewise-linear interpolant restricted to [a,b]."""
    m = values.size - 1
    nodes = grid_nodes(m)
    a = max(0.0, a)
    b = min(1.0, b)
    if b <= a:
        return None
    i0 = int(np.searchsorted(nodes, a, side="right") - 1)
    i1 = int(np.searchsorted(nodes, b, side="left"))
    xs = np.concatenate(([a], nodes[i0 + 1 : i1], [b]))
    vs = np.interp(xs, nodes, values)
    return xs, vs


def integrate_interval(phi: GridObservable, a: float, b: float) -> float:
    """Exact integral of the piecewise-linear interpolant over [a,b] in [0,1]."""
    clipped = _clip_segments(phi.values, a, b)
    if clipped is None:
        return 0.0
    xs, vs = clipped
    return float(np.sum(_segment_integrals(vs[:-1], vs[1:], np.diff(xs))))


def integrate_abs_interval(phi: GridObservable, a: float, b: float) -> float:
    """Exact integral of |interpolant| over [a,b], zero crossings resolved."""
    clipped = _clip_segments(phi.values, a, b)
    if clipped is None:
        return 0.0
    xs, vs = clipped
    return float(np.sum(_segment_abs_integrals(vs[:-1], vs[1:], np.diff(xs))))


def midpoint_quadrature(f, n_nodes: int = 2**14, a: float = 0.0, b: float = 1.0) -> float:
    """Composite midpoint rule for callables on [a,b]."""
    if n_nodes < 1:
        raise InvalidParameter("need at least one quadrature node")
    h = (b - a) / n_nodes
    x = a + h * (np.arange(n_nodes) + 0.5)
    return float(h * np.sum(f(x)))
