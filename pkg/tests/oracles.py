"""Independent oracles used to cross-check the library's primary routes.

These deliberately avoid the code paths they verify: the Ulam density comes
from a sparse transition matrix built out of branch endpoint arithmetic and
power iteration, representability from plain brute force over coefficient
tuples, and the series values from closed forms.
"""

import numpy as np
import scipy.sparse as sp


def ulam_matrix(spec, n_cells):
    """Row-stochastic Ulam matrix A[i,j] = m(I_i intersect F^-1 I_j) / m(I_i).

    Preimage intervals come straight from the inverse branches evaluated at
    cell edges; no transfer-operator code is involved.
    """
    edges = np.linspace(0.0, 1.0, n_cells + 1)
    rows, cols, vals = [], [], []
    for br in spec.branches:
        lo = br.inverse_map(edges[:-1])
        hi = br.inverse_map(edges[1:])
        a = np.minimum(lo, hi)
        b = np.maximum(lo, hi)
        for j in range(n_cells):
            i0 = max(0, int(np.floor(a[j] * n_cells)))
            i1 = min(n_cells - 1, int(np.floor(b[j] * n_cells - 1e-15)))
            for i in range(i0, i1 + 1):
                overlap = min(b[j], edges[i + 1]) - max(a[j], edges[i])
                if overlap > 0.0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(overlap * n_cells)
    return sp.coo_matrix((vals, (rows, cols)), shape=(n_cells, n_cells)).tocsr()


def ulam_density(spec, n_cells, max_iter=5000, tol=1e-13):
    """Leading left eigenvector of the Ulam matrix, normalised as a density."""
    A = ulam_matrix(spec, n_cells)
    pi = np.full(n_cells, 1.0 / n_cells)
    for _ in range(max_iter):
        nxt = pi @ A
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            pi = nxt
            break
        pi = nxt
    return pi * n_cells


def brute_force_representable(n, gens):
    """Exhaustive search for nonnegative integer combinations summing to n."""
    gens = sorted(gens)
    if n == 0:
        return True
    if n < 0:
        return False
    return any(brute_force_representable(n - g, gens) for g in gens if g <= n)


def geometric_power_sum(beta_int, r):
    """Closed forms for sum_{k>=1} k^beta r^k at small integer beta."""
    if beta_int == 1:
        return r / (1.0 - r) ** 2
    if beta_int == 2:
        return r * (1.0 + r) / (1.0 - r) ** 3
    if beta_int == 3:
        return r * (1.0 + 4.0 * r + r * r) / (1.0 - r) ** 4
    raise ValueError("no closed form wired for this exponent")
