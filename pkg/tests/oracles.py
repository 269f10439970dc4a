"""Independent reference computations used by the tests.

None of these share code with the package: they enumerate couplings or
interval pairs directly.
"""

from __future__ import annotations

import itertools

import numpy as np


def interval_pair_table(s1, w1, s0, w0, delta, family, strict=True):
    """All (I, J) pairs with their objective and feasibility, by direct loops.

    Intervals are inclusive index ranges or None. The objective is
    ``sum_{I} w1 - sum_{not J} w0``.
    """
    n1, n0 = len(s1), len(s0)
    ivs1 = [None] + [(a, b) for a in range(n1) for b in range(a, n1)]
    ivs0 = [None] + [(a, b) for a in range(n0) for b in range(a, n0)]
    if family == "lower":
        ok = (lambda d: d < delta) if strict else (lambda d: d <= delta)
    else:
        ok = (lambda d: d > delta) if strict else (lambda d: d >= delta)
    rows = []
    for i in ivs1:
        vi = 0.0 if i is None else sum(w1[i[0] : i[1] + 1])
        for j in ivs0:
            vj = -sum(w0) if j is None else -(sum(w0[: j[0]]) + sum(w0[j[1] + 1 :]))
            feasible = i is None or j is None or all(
                ok(s1[a] - s0[b]) for a in range(i[0], i[1] + 1) for b in range(j[0], j[1] + 1)
            )
            rows.append((i, j, vi + vj, feasible))
    return rows


def brute_interval_dual(s1, w1, s0, w0, delta, family, strict=True):
    return max(v for _, _, v, f in interval_pair_table(s1, w1, s0, w0, delta, family, strict) if f)


def two_point_coupling_range(p1, p0, c):
    """Min and max of E[c] over couplings of two-point marginals.

    ``p1 = P(Y1 = 1)``, ``p0 = P(Y0 = 1)`` on {0, 1}; ``c`` is a 2x2 array
    indexed ``[y1, y0]``. The only free parameter is ``pi11``.
    """
    lo, hi = max(0.0, p1 + p0 - 1.0), min(p1, p0)
    vals = []
    for pi11 in np.linspace(lo, hi, 2001):
        pi = np.array([[1 - p1 - p0 + pi11, p0 - pi11], [p1 - pi11, pi11]])
        vals.append(float(np.sum(pi * c)))
    return min(vals), max(vals)


def permutation_range(y1, y0, c):
    """Min and max of E[c] over couplings of two uniform n-point marginals.

    Extreme points of the coupling polytope are permutation matrices.
    """
    y1, y0 = np.asarray(y1, float), np.asarray(y0, float)
    n = y1.size
    vals = [float(np.mean(c(y1, y0[list(perm)]))) for perm in itertools.permutations(range(n))]
    return min(vals), max(vals)


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        out[k] = (f(x + e) - f(x - e)) / (2 * h)
    return out
