"""Restricted optimal-transport duals.

Smooth costs are solved as a linear program over the values of ``phi`` on
the support of ``mu1`` and ``psi`` on the support of ``mu0``. Indicator
costs reduce to a search over interval pairs, solved by a linear sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .costs import IndicatorCost, SmoothCost
from .errors import ConfigurationError, SolverError, UnboundedDualError
from .measures import SignedMeasure

FEAS_TOL = 1e-9
OPT_TOL = 1e-9


@dataclass(frozen=True)
class IntervalPair:
    """``(phi, psi) = (1_I, -1_{J^c})`` with ``I``, ``J`` index ranges into the supports.

    ``i`` and ``j`` are inclusive ``(lo, hi)`` index pairs or None for the
    empty interval.
    """

    i: tuple[int, int] | None
    j: tuple[int, int] | None

    def phi(self, n1: int) -> np.ndarray:
        out = np.zeros(n1)
        if self.i is not None:
            out[self.i[0] : self.i[1] + 1] = 1.0
        return out

    def psi(self, n0: int) -> np.ndarray:
        out = -np.ones(n0)
        if self.j is not None:
            out[self.j[0] : self.j[1] + 1] = 0.0
        return out

    def describe(self, s1: np.ndarray, s0: np.ndarray) -> dict:
        def rng(iv, s):
            return None if iv is None else [float(s[iv[0]]), float(s[iv[1]])]

        return {"I": rng(self.i, s1), "J": rng(self.j, s0)}


@dataclass(frozen=True, eq=False)
class DualSolution:
    phi: np.ndarray
    psi: np.ndarray
    objective: float
    status: str
    max_violation: float
    restricted: bool = True
    pair: IntervalPair | None = None

    @property
    def certificate(self) -> dict:
        return {"status": self.status, "max_violation": self.max_violation}


# ---------------------------------------------------------------- smooth


def _rectangle(mu1: SignedMeasure, mu0: SignedMeasure) -> tuple[float, float]:
    lo = min(mu1.support[0], mu0.support[0])
    hi = max(mu1.support[-1], mu0.support[-1])
    return float(lo), float(hi)


def _ensure_bounds(cost: SmoothCost, mu1, mu0) -> SmoothCost:
    if cost.has_class_bounds:
        return cost
    return cost.with_class_bounds(_rectangle(mu1, mu0))


def _lipschitz_rows(n: int, offset: int, nvar: int, y: np.ndarray, L: float):
    """Rows encoding ``|v_{k+1} - v_k| <= L (y_{k+1} - y_k)``."""
    if n < 2:
        return sp.csr_matrix((0, nvar)), np.zeros(0)
    k = np.arange(n - 1)
    rows = np.concatenate([k, k, n - 1 + k, n - 1 + k])
    cols = offset + np.concatenate([k + 1, k, k, k + 1])
    vals = np.concatenate([np.ones(n - 1), -np.ones(n - 1), np.ones(n - 1), -np.ones(n - 1)])
    A = sp.csr_matrix((vals, (rows, cols)), shape=(2 * (n - 1), nvar))
    gap = L * np.diff(y)
    return A, np.concatenate([gap, gap])


def constraint_violation(
    phi: np.ndarray, psi: np.ndarray, C: np.ndarray, cost: SmoothCost | None, s1, s0, restricted: bool
) -> float:
    """Largest violation of the dual constraints (0 when feasible)."""
    v = float(np.max(phi[:, None] + psi[None, :] - C))
    if restricted and cost is not None:
        K, L = cost.sup_norm, cost.lipschitz
        v = max(v, float(np.max(np.abs(phi))) - K, float(np.max(psi)), float(np.max(-psi)) - 2 * K)
        for f, y in ((phi, s1), (psi, s0)):
            if f.size > 1:
                v = max(v, float(np.max(np.abs(np.diff(f)) - L * np.diff(y))))
    return max(v, 0.0)


def _pair_rows(ii: np.ndarray, jj: np.ndarray, n1: int, nvar: int) -> sp.csr_matrix:
    """Rows ``phi_i + psi_j`` for the given index pairs."""
    r = np.arange(ii.size)
    return sp.csr_matrix(
        (np.ones(2 * ii.size), (np.concatenate([r, r]), np.concatenate([ii, n1 + jj]))), shape=(ii.size, nvar)
    )


def _linprog(c_obj, A, b, bounds):
    return linprog(
        c_obj,
        A_ub=A,
        b_ub=b,
        bounds=bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": OPT_TOL},
    )


def solve_dual_smooth(
    mu1: SignedMeasure, mu0: SignedMeasure, cost: SmoothCost, restricted: bool | None = None
) -> DualSolution:
    """Maximise ``mu1(phi) + mu0(psi)`` subject to ``phi_i + psi_j <= c(y_i, y_j)``.

    With ``restricted`` the class constraints are added: ``|phi| <= K``,
    ``-2K <= psi <= 0`` and Lipschitz constraints between adjacent support
    points (sufficient on the line). ``K`` and ``L`` come from the cost, or
    are derived over the support rectangle for built-in costs.
    ``restricted=None`` restricts exactly when a weight is negative.
    """
    if restricted is None:
        restricted = not (mu1.proper and mu0.proper)
    elif not restricted and not (mu1.proper and mu0.proper):
        raise UnboundedDualError("signed marginals need restricted=True; the unrestricted dual is unbounded")
    s1, s0 = mu1.support, mu0.support
    n1, n0 = s1.size, s0.size
    if restricted:
        cost = _ensure_bounds(cost, mu1, mu0)
    C = cost.matrix(s1, s0)
    if not np.all(np.isfinite(C)):
        raise ConfigurationError(f"cost {cost.name!r} is not finite on the support")

    nvar = n1 + n0
    ii, jj = np.divmod(np.arange(n1 * n0), n0)
    A = _pair_rows(ii, jj, n1, nvar)
    b = C.ravel()
    if restricted:
        K, L = float(cost.sup_norm), float(cost.lipschitz)
        A1, b1 = _lipschitz_rows(n1, 0, nvar, s1, L)
        A0, b0 = _lipschitz_rows(n0, n1, nvar, s0, L)
        A = sp.vstack([A, A1, A0], format="csr")
        b = np.concatenate([b, b1, b0])
        bounds = [(-K, K)] * n1 + [(-2 * K, 0.0)] * n0
    else:
        bounds = [(None, None)] * nvar
    res = _linprog(-np.concatenate([mu1.weights, mu0.weights]), A, b, bounds)
    if res.status == 3:
        raise UnboundedDualError("dual is unbounded; use restricted=True for signed marginals")
    if res.status != 0:
        raise SolverError(f"dual LP failed: {res.message}")
    phi, psi = res.x[:n1].copy(), res.x[n1:].copy()
    if not restricted:
        # remove the free additive shift so the solution is reproducible
        shift = phi.max()
        phi -= shift
        psi += shift
    obj = float(mu1.weights @ phi + mu0.weights @ psi)
    viol = constraint_violation(phi, psi, C, cost, s1, s0, restricted)
    return DualSolution(phi, psi, obj, "optimal", viol, restricted)


# -------------------------------------------------------------- indicator


def _pred(y1, y0, delta, op: str):
    diff = y1 - y0
    if op == "lt":
        return diff < delta
    if op == "le":
        return diff <= delta
    if op == "gt":
        return diff > delta
    return diff >= delta


def split_index(y1, s0: np.ndarray, delta, op: str) -> np.ndarray:
    """Boundary index where ``pred(y1 - s0[c], delta)`` changes status.

    For ``lt``/``le`` the predicate is False on ``s0[:k]`` and True on
    ``s0[k:]``; for ``gt``/``ge`` it is True on ``s0[:k]`` and False after.
    The predicate is evaluated exactly in floating point so that the index
    agrees with a direct pairwise check. Broadcasts over ``y1`` and ``delta``.
    """
    y1 = np.asarray(y1, dtype=float)
    delta = np.asarray(delta, dtype=float)
    t = y1 - delta
    side = "right" if op in ("lt", "ge") else "left"
    k = np.searchsorted(s0, t, side=side)
    n = s0.size
    left = (lambda idx: ~_pred(y1, s0[idx], delta, op)) if op in ("lt", "le") else (
        lambda idx: _pred(y1, s0[idx], delta, op)
    )
    # rounding in y1 - delta can misplace k by a position or two
    for _ in range(n + 1):
        dec = (k > 0) & ~left(np.maximum(k - 1, 0))
        inc = (k < n) & left(np.minimum(k, n - 1))
        if not (dec.any() or inc.any()):
            break
        k = k - dec + (inc & ~dec)
    return k


def _best_ending(w: np.ndarray):
    """Best sum of ``w[a..b]`` over ``a <= b`` for every ``b``, and its ``a``."""
    n = w.size
    val = np.empty(n)
    start = np.empty(n, dtype=np.intp)
    run, a = -math.inf, 0
    for b in range(n):
        if run > 0:
            run += w[b]
        else:
            run, a = w[b], b
        val[b], start[b] = run, a
    return val, start


def _best_starting(w: np.ndarray):
    val, end = _best_ending(w[::-1])
    n = w.size
    return val[::-1].copy(), (n - 1 - end)[::-1].copy()


def _family_op(family: str, strict: bool) -> str:
    if family == "lower":
        return "lt" if strict else "le"
    if family == "upper":
        return "gt" if strict else "ge"
    raise ConfigurationError(f"family must be 'lower' or 'upper', got {family!r}")


class IndicatorSweep:
    """Precomputed best-interval tables for one pair of measures.

    The dual for ``c = 1{y1 - y0 < delta}`` (``lower``) or
    ``1{y1 - y0 > delta}`` (``upper``) is the maximum of
    ``mu1(I) + mu0(J) - mu0(R)`` over support intervals ``I``, ``J`` (each
    possibly empty) such that every pair in ``I x J`` satisfies the cost
    inequality. For ``lower`` only ``max I`` and ``min J`` matter, for
    ``upper`` only ``min I`` and ``max J``. The tables below do not depend
    on ``delta``, so many thresholds can be evaluated at once.
    """

    def __init__(self, mu1: SignedMeasure, mu0: SignedMeasure):
        self.mu1, self.mu0 = mu1, mu0
        w1, w0 = mu1.weights, mu0.weights
        self.end1, self.st1 = _best_ending(w1)
        self.beg1, self.en1 = _best_starting(w1)
        self.end0, self.st0 = _best_ending(w0)
        self.beg0, self.en0 = _best_starting(w0)
        # best J starting at or after c, best J ending at or before e
        rev = self.beg0[::-1]
        self.suf0 = np.maximum.accumulate(rev)[::-1].copy()
        self.suf0_arg = (self.beg0.size - 1 - _running_argmax(rev))[::-1].copy()
        self.pre0 = np.maximum.accumulate(self.end0)
        self.pre0_arg = _running_argmax(self.end0)
        self.single = max(0.0, float(self.end1.max()), float(self.beg0.max()))
        self.total0 = mu0.total

    def _pair_values(self, delta, family: str, strict: bool):
        op = _family_op(family, strict)
        s1, s0 = self.mu1.support, self.mu0.support
        k = split_index(s1, s0, np.asarray(delta, dtype=float)[..., None], op)
        n0 = s0.size
        if family == "lower":
            ok = k < n0
            vals = np.where(ok, self.end1 + self.suf0[np.minimum(k, n0 - 1)], -np.inf)
        else:
            ok = k > 0
            vals = np.where(ok, self.beg1 + self.pre0[np.maximum(k - 1, 0)], -np.inf)
        return vals, k

    def values(self, delta, family: str = "lower", strict: bool = True) -> np.ndarray:
        """Optimal dual values at every threshold in ``delta``."""
        vals, _ = self._pair_values(delta, family, strict)
        return np.maximum(vals.max(axis=-1), self.single) - self.total0

    def solve(self, delta: float, family: str = "lower", strict: bool = True) -> "DualSolution":
        vals, k = self._pair_values(float(delta), family, strict)
        cands = [(0.0, IntervalPair(None, None))]
        b = int(np.argmax(self.end1))
        cands.append((float(self.end1[b]), IntervalPair((int(self.st1[b]), b), None)))
        c = int(np.argmax(self.beg0))
        cands.append((float(self.beg0[c]), IntervalPair(None, (c, int(self.en0[c])))))
        if np.isfinite(vals).any():
            a = int(np.argmax(vals))
            if family == "lower":
                cc = int(self.suf0_arg[k[a]])
                pair = IntervalPair((int(self.st1[a]), a), (cc, int(self.en0[cc])))
            else:
                e = int(self.pre0_arg[k[a] - 1])
                pair = IntervalPair((a, int(self.en1[a])), (int(self.st0[e]), e))
            cands.append((float(vals[a]), pair))
        _, pair = max(cands, key=lambda t: t[0])
        s1, s0 = self.mu1.support, self.mu0.support
        phi, psi = pair.phi(s1.size), pair.psi(s0.size)
        obj = float(self.mu1.weights @ phi + self.mu0.weights @ psi)
        C = _pred(s1[:, None], s0[None, :], delta, _family_op(family, strict)).astype(float)
        viol = float(max(0.0, np.max(phi[:, None] + psi[None, :] - C)))
        return DualSolution(phi, psi, obj, "optimal", viol, True, pair)


def _running_argmax(v: np.ndarray) -> np.ndarray:
    """Index of the first maximum of ``v[:k+1]`` for every ``k``."""
    out = np.empty(v.size, dtype=np.intp)
    best, bi = -math.inf, 0
    for t, x in enumerate(v):
        if x > best:
            best, bi = x, t
        out[t] = bi
    return out


def solve_dual_indicator(
    mu1: SignedMeasure, mu0: SignedMeasure, delta: float, family: str = "lower", strict: bool = True
) -> DualSolution:
    """Exact dual for the indicator cost via a linear sweep.

    ``family="lower"`` uses ``1{y1 - y0 < delta}`` and ``"upper"`` uses
    ``1{y1 - y0 > delta}``; ``strict=False`` switches to the non-strict
    inequality. The optimising :class:`IntervalPair` is attached.
    """
    if not math.isfinite(delta):
        raise ConfigurationError("delta must be finite")
    _family_op(family, strict)
    return IndicatorSweep(mu1, mu0).solve(delta, family, strict)


def indicator_theta(mu1: SignedMeasure, mu0: SignedMeasure, cost: IndicatorCost) -> tuple[float, float]:
    """``(theta_L, theta_H)`` for the CDF of ``Y1 - Y0`` at ``cost.delta``."""
    lo = solve_dual_indicator(mu1, mu0, cost.delta, "lower", strict=cost.ties == "open")
    hi = solve_dual_indicator(mu1, mu0, cost.delta, "upper", strict=True)
    return lo.objective, 1.0 - hi.objective


def makarov_closed_form(mu1: SignedMeasure, mu0: SignedMeasure, delta, strict: bool = True):
    """Makarov bounds on ``P(Y1 - Y0 <= delta)`` for proper marginals.

    ``delta`` may be an array; results then have its shape. ``strict=False``
    replaces the strict lower cost by ``1{y1 - y0 <= delta}``.
    """
    if not (mu1.proper and mu0.proper):
        raise ConfigurationError("closed form needs proper marginals; use solve_dual_indicator")
    delta = np.asarray(delta, dtype=float)
    s1, s0 = mu1.support, mu0.support
    w1 = mu1.weights
    cum0 = np.concatenate([[0.0], np.cumsum(mu0.weights)])
    t0 = cum0[-1]
    F1 = np.cumsum(w1)
    S1 = F1[-1] - np.concatenate([[0.0], F1[:-1]])  # P1([y, inf)) at each support point

    d = delta[..., None]
    op_l = "lt" if strict else "le"
    kl = split_index(s1, s0, d, op_l)  # mass of s0 where the lower predicate fails
    low = np.max(F1 - cum0[kl], axis=-1)
    first = _pred(s1, s0[0], d, op_l)
    low = np.maximum(np.maximum(low, 0.0), np.sum(np.where(first, w1, 0.0), axis=-1))

    kh = split_index(s1, s0, d, "gt")  # s0[:kh] satisfy y1 - y0 > delta
    up = np.max(S1 - (t0 - cum0[kh]), axis=-1)
    last = _pred(s1, s0[-1], d, "gt")
    up = np.maximum(np.maximum(up, 0.0), np.sum(np.where(last, w1, 0.0), axis=-1))
    theta_l, theta_h = low, 1.0 - up
    if theta_l.ndim == 0:
        return float(theta_l), float(theta_h)
    return theta_l, theta_h


# ------------------------------------------------------- approximate argmax


@dataclass(frozen=True, eq=False)
class IndicatorArgmaxSet:
    """Every feasible interval pair whose value is within ``slack`` of the optimum."""

    i_ranges: np.ndarray  # (p, 2) inclusive index pairs, (-1, -1) for empty
    j_ranges: np.ndarray
    mask: np.ndarray  # (p, q) boolean
    optimum: float

    def __len__(self) -> int:
        return int(self.mask.sum())

    def pairs(self) -> list[IntervalPair]:
        out = []
        for a, b in zip(*np.nonzero(self.mask)):
            i = None if self.i_ranges[a, 0] < 0 else (int(self.i_ranges[a, 0]), int(self.i_ranges[a, 1]))
            j = None if self.j_ranges[b, 0] < 0 else (int(self.j_ranges[b, 0]), int(self.j_ranges[b, 1]))
            out.append(IntervalPair(i, j))
        return out

    def evaluate(self, h1: np.ndarray, h0: np.ndarray) -> float:
        """``max`` over the set of ``h1(phi) + h0(psi)``."""
        v1 = _interval_sums(h1, self.i_ranges)
        v0 = _interval_sums(h0, self.j_ranges) - float(np.sum(h0))
        rows = np.flatnonzero(self.mask.any(axis=1))
        best = -math.inf
        for r in rows:
            best = max(best, v1[r] + float(np.max(v0[self.mask[r]])))
        return best


@dataclass(frozen=True, eq=False)
class SmoothArgmaxSet:
    """Finite subsample of near-optimal LP vertices (rows of ``phi``/``psi``)."""

    phi: np.ndarray
    psi: np.ndarray
    optimum: float
    approximate: bool = True

    def __len__(self) -> int:
        return self.phi.shape[0]

    def evaluate(self, h1: np.ndarray, h0: np.ndarray) -> float:
        return float(np.max(self.phi @ h1 + self.psi @ h0))


def _all_ranges(n: int) -> np.ndarray:
    a, b = np.triu_indices(n)
    return np.vstack([[-1, -1], np.column_stack([a, b])]).astype(np.intp)


def _interval_sums(w: np.ndarray, ranges: np.ndarray) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(w)])
    out = cum[ranges[:, 1] + 1] - cum[ranges[:, 0]]
    out[ranges[:, 0] < 0] = 0.0
    return out


MAX_ENUMERATION = 40_000_000


def enumerate_interval_pairs(mu1: SignedMeasure, mu0: SignedMeasure, delta: float, family: str, strict: bool = True):
    """Brute-force table over all interval pairs: (I ranges, J ranges, values, feasible)."""
    op = _family_op(family, strict)
    s1, s0 = mu1.support, mu0.support
    R1, R0 = _all_ranges(s1.size), _all_ranges(s0.size)
    if R1.shape[0] * R0.shape[0] > MAX_ENUMERATION:
        raise ConfigurationError(
            f"interval enumeration of size {R1.shape[0]}x{R0.shape[0]} is too large; use the simple bootstrap"
        )
    v1 = _interval_sums(mu1.weights, R1)
    v0 = _interval_sums(mu0.weights, R0) - mu0.total
    e1 = R1[:, 0] < 0
    e0 = R0[:, 0] < 0
    if family == "lower":
        y1 = s1[np.where(e1, 0, R1[:, 1])]
        y0 = s0[np.where(e0, 0, R0[:, 0])]
    else:
        y1 = s1[np.where(e1, 0, R1[:, 0])]
        y0 = s0[np.where(e0, 0, R0[:, 1])]
    feas = _pred(y1[:, None], y0[None, :], delta, op) | e1[:, None] | e0[None, :]
    return R1, R0, v1, v0, feas


def approx_argmax_set(
    mu1: SignedMeasure,
    mu0: SignedMeasure,
    cost,
    slack: float,
    family: str = "lower",
    n_directions: int = 16,
    seed: int = 0,
):
    """Dual solutions whose objective is within ``slack`` of the optimum.

    For an :class:`IndicatorCost` the set is exact. For a smooth cost it is
    the optimal vertex plus the vertices found by maximising
    ``n_directions`` fixed random directions over the near-optimal face,
    deduplicated at 1e-8 after removing the additive shift.
    """
    if not (slack >= 0):
        raise ConfigurationError("slack must be nonnegative")
    if isinstance(cost, IndicatorCost):
        strict = True if family == "upper" else cost.ties == "open"
        opt = solve_dual_indicator(mu1, mu0, cost.delta, family, strict).objective
        R1, R0, v1, v0, feas = enumerate_interval_pairs(mu1, mu0, cost.delta, family, strict)
        tol = 1e-12 * (1.0 + abs(opt))
        mask = feas & (v1[:, None] + v0[None, :] >= opt - slack - tol)
        return IndicatorArgmaxSet(R1, R0, mask, opt)
    if not math.isfinite(slack):
        raise ConfigurationError("slack must be finite for smooth costs")
    return _smooth_argmax(mu1, mu0, cost, slack, n_directions, seed)


def _smooth_argmax(mu1, mu0, cost: SmoothCost, slack: float, R: int, seed: int) -> SmoothArgmaxSet:
    cost = _ensure_bounds(cost, mu1, mu0)
    base = solve_dual_smooth(mu1, mu0, cost, restricted=True)
    s1, s0 = mu1.support, mu0.support
    n1, n0 = s1.size, s0.size
    nvar = n1 + n0
    C = cost.matrix(s1, s0)
    ii, jj = np.divmod(np.arange(n1 * n0), n0)
    A = _pair_rows(ii, jj, n1, nvar)
    K, L = float(cost.sup_norm), float(cost.lipschitz)
    A1, b1 = _lipschitz_rows(n1, 0, nvar, s1, L)
    A0, b0 = _lipschitz_rows(n0, n1, nvar, s0, L)
    wts = np.concatenate([mu1.weights, mu0.weights])
    near = sp.csr_matrix(-wts[None, :])
    A = sp.vstack([A, A1, A0, near], format="csr")
    b = np.concatenate([C.ravel(), b1, b0, [-(base.objective - slack)]])
    bounds = [(-K, K)] * n1 + [(-2 * K, 0.0)] * n0

    rng = np.random.default_rng(seed)
    sols = [np.concatenate([base.phi, base.psi])]
    for _ in range(R):
        direction = rng.standard_normal(nvar)
        res = linprog(
            -direction,
            A_ub=A,
            b_ub=b,
            bounds=bounds,
            method="highs-ds",
            options={"primal_feasibility_tolerance": FEAS_TOL, "dual_feasibility_tolerance": OPT_TOL},
        )
        if res.status == 0:
            sols.append(res.x.copy())
    keys, keep = set(), []
    for x in sols:
        z = x.copy()
        z[:n1] -= x[0]
        z[n1:] += x[0]
        key = tuple(np.round(z / 1e-8).astype(np.int64))
        if key not in keys:
            keys.add(key)
            keep.append(x)
    X = np.array(keep)
    return SmoothArgmaxSet(X[:, :n1], X[:, n1:], base.objective)
