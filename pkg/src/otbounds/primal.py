"""Primal transport problems for proper marginals.

``primal_oracle`` solves the Kantorovich problem with a transportation
simplex that does not share code with the dual solvers, so the two can be
checked against each other.
"""

from __future__ import annotations

from collections import deque

import numpy as np

from .errors import ConfigurationError, SolverError
from .measures import SignedMeasure


def _northwest_corner(p: np.ndarray, q: np.ndarray):
    m, n = p.size, q.size
    x = np.zeros((m, n))
    basis = []
    s, d = p.copy(), q.copy()
    i = j = 0
    while True:
        amt = min(s[i], d[j])
        x[i, j] = amt
        basis.append((i, j))
        s[i] -= amt
        d[j] -= amt
        if i == m - 1 and j == n - 1:
            break
        if j == n - 1 or (i < m - 1 and s[i] <= d[j]):
            i += 1
        else:
            j += 1
    return x, basis


def _potentials(C, basis, m, n):
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        a = queue.popleft()
        for b in adj[a]:
            if np.isnan(pot[b]):
                i, j = (a, b - m) if a < m else (b, a - m)
                pot[b] = C[i, j] - pot[a]
                queue.append(b)
    return pot[:m], pot[m:], adj


def _tree_path(adj, src, dst):
    parent = {src: None}
    queue = deque([src])
    while queue:
        a = queue.popleft()
        if a == dst:
            break
        for b in adj[a]:
            if b not in parent:
                parent[b] = a
                queue.append(b)
    path = [dst]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def transport_simplex(p, q, C, tol: float = 1e-12, max_iter: int = 100_000):
    """Minimise ``<pi, C>`` over couplings of ``p`` and ``q``.

    Starts from the northwest corner rule and pivots on the most negative
    reduced cost, switching to the lowest-index rule (which cannot cycle)
    after a run of degenerate pivots. Returns ``(plan, value)``.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    C = np.asarray(C, dtype=float)
    m, n = p.size, q.size
    if C.shape != (m, n):
        raise ValueError("cost matrix shape does not match the marginals")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ConfigurationError("marginals must have equal total mass")
    q = q * (p.sum() / q.sum())
    x, basis = _northwest_corner(p, q)
    scale = 1.0 + np.abs(C).max()
    degenerate_run = 0
    for _ in range(max_iter):
        u, v, adj = _potentials(C, basis, m, n)
        red = C - u[:, None] - v[None, :]
        for i, j in basis:
            red[i, j] = 0.0
        if red.min() >= -tol * scale:
            return x, float(np.sum(x * C))
        if degenerate_run > m + n:
            i0, j0 = np.argwhere(red < -tol * scale)[0]
        else:
            i0, j0 = np.unravel_index(int(np.argmin(red)), red.shape)
        path = _tree_path(adj, int(i0), m + int(j0))
        # edges along the path alternate -, +, -, ... starting at row i0
        cells = []
        for a, b in zip(path, path[1:]):
            cells.append((a, b - m) if a < m else (b, a - m))
        minus = cells[0::2]
        plus = cells[1::2]
        theta_cell = min(minus, key=lambda c: (x[c], c))
        theta = x[theta_cell]
        for c in minus:
            x[c] -= theta
        for c in plus:
            x[c] += theta
        x[i0, j0] += theta
        x[theta_cell] = 0.0
        basis.remove(theta_cell)
        basis.append((int(i0), int(j0)))
        degenerate_run = degenerate_run + 1 if theta <= 0 else 0
    raise SolverError("transportation simplex did not converge")


def _check_proper(mu: SignedMeasure):
    if not mu.proper:
        raise ConfigurationError("primal problem needs nonnegative marginals")


def primal_oracle(mu1: SignedMeasure, mu0: SignedMeasure, cost) -> float:
    """Minimal expected cost over couplings of two proper distributions.

    ``cost`` is a vectorised callable ``c(y1, y0)``.
    """
    _check_proper(mu1)
    _check_proper(mu0)
    C = np.asarray(cost(mu1.support[:, None], mu0.support[None, :]), dtype=float)
    C = np.broadcast_to(C, (len(mu1), len(mu0)))
    _, value = transport_simplex(mu1.weights, mu0.weights, C)
    return value


def monotone_coupling_value(mu1: SignedMeasure, mu0: SignedMeasure, cost, antitone: bool = False) -> float:
    """Expected cost under the comonotone (or antitone) coupling.

    Optimal for costs with a constant-sign cross derivative: the comonotone
    coupling minimises submodular costs and the antitone one minimises
    supermodular costs.
    """
    _check_proper(mu1)
    _check_proper(mu0)
    t1 = np.cumsum(mu1.weights)
    w0 = mu0.weights[::-1] if antitone else mu0.weights
    s0 = mu0.support[::-1] if antitone else mu0.support
    t0 = np.cumsum(w0)
    t1 = t1 / t1[-1]
    t0 = t0 / t0[-1]
    knots = np.unique(np.concatenate([[0.0], t1, t0]))
    mids = 0.5 * (knots[:-1] + knots[1:])
    mass = np.diff(knots)
    i = np.minimum(np.searchsorted(t1, mids), len(mu1) - 1)
    j = np.minimum(np.searchsorted(t0, mids), len(mu0) - 1)
    return float(np.sum(mass * np.asarray(cost(mu1.support[i], s0[j]), dtype=float)) * mu1.total)
