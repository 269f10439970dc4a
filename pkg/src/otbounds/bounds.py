"""Bounds on theta per cell and in aggregate, and the induced bounds on gamma = g(theta, eta)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import costs as _costs
from .costs import IndicatorCost, SmoothCost
from .data import Sample
from .dual import IndicatorSweep, makarov_closed_form, solve_dual_smooth
from .errors import ConfigurationError, EvaluationError
from .measures import ComplierShares, EtaHat, FirstStage, SignedMeasure, eta_hat, first_stage, pooled_measure
from .primal import monotone_coupling_value

POOLING_TOL = 1e-7
ORDER_TOL = 1e-7


# ------------------------------------------------------------ parameters


@dataclass(frozen=True)
class ParameterSpec:
    """A parameter ``gamma = g(theta, eta)``.

    ``theta`` is the expectation of ``cost`` under the unknown coupling and
    ``eta`` stacks the marginal moments ``E[f(Y1)]`` for ``f`` in ``eta1``
    followed by ``E[f(Y0)]`` for ``f`` in ``eta0``. ``grad`` returns
    ``(dg/dtheta, dg/deta...)``.
    """

    name: str
    cost: SmoothCost | IndicatorCost
    g: Callable[[float, np.ndarray], float]
    grad: Callable[[float, np.ndarray], np.ndarray]
    eta1: tuple = ()
    eta0: tuple = ()
    monotone: str = "unknown"

    def __post_init__(self):
        if self.monotone not in ("increasing", "decreasing", "unknown"):
            raise ConfigurationError(f"monotone must be increasing, decreasing or unknown, got {self.monotone!r}")

    @property
    def k(self) -> int:
        return len(self.eta1) + len(self.eta0)

    def with_cost(self, cost) -> "ParameterSpec":
        return replace(self, cost=cost)


def _ident(y):
    return y


def _square(y):
    return y * y


def identity(cost: SmoothCost | IndicatorCost | str = "product") -> ParameterSpec:
    if isinstance(cost, str):
        cost = _costs.smooth_cost(cost)
    return ParameterSpec(
        f"identity[{cost.name}]", cost, lambda t, e: t, lambda t, e: np.array([1.0]), monotone="increasing"
    )


def variance_te() -> ParameterSpec:
    """Var(Y1 - Y0) = E[(Y1 - Y0)^2] - (E Y1 - E Y0)^2."""

    def g(t, e):
        return t - (e[0] - e[1]) ** 2

    def grad(t, e):
        d = e[0] - e[1]
        return np.array([1.0, -2 * d, 2 * d])

    return ParameterSpec("variance_te", _costs.squared_diff(), g, grad, (_ident,), (_ident,), "increasing")


def correlation() -> ParameterSpec:
    """Corr(Y1, Y0) from E[Y1 Y0] and the first two moments of each marginal."""

    def parts(t, e):
        m1, q1, m0, q0 = e
        v1, v0 = q1 - m1 * m1, q0 - m0 * m0
        return t - m1 * m0, v1 * v0, m1, m0, v1, v0

    def g(t, e):
        r, q, *_ = parts(t, e)
        if not q > 0:
            return math.nan
        return r / math.sqrt(q)

    def grad(t, e):
        r, q, m1, m0, v1, v0 = parts(t, e)
        if not q > 0:
            return np.full(5, math.nan)
        a, b = q**-0.5, -0.5 * r * q**-1.5
        # q = v1 v0 with v1 = q1 - m1^2, v0 = q0 - m0^2
        return np.array([a, -m0 * a + b * (-2 * m1 * v0), b * v0, -m1 * a + b * (-2 * m0 * v1), b * v1])

    return ParameterSpec("correlation", _costs.product(), g, grad, (_ident, _square), (_ident, _square), "increasing")


def cov_te_y0() -> ParameterSpec:
    """Cov(Y1 - Y0, Y0)."""

    def g(t, e):
        return t - (e[0] - e[1]) * e[1]

    def grad(t, e):
        return np.array([1.0, -e[1], 2 * e[1] - e[0]])

    return ParameterSpec("cov_te_y0", _costs.effect_times_control(), g, grad, (_ident,), (_ident,), "increasing")


def ols_slope() -> ParameterSpec:
    """Slope from regressing Y1 - Y0 on a constant and Y0."""

    def g(t, e):
        e1, m0, q0 = e
        v = q0 - m0 * m0
        if not v > 0:
            return math.nan
        return (t - (e1 - m0) * m0) / v

    def grad(t, e):
        e1, m0, q0 = e
        v = q0 - m0 * m0
        if not v > 0:
            return np.full(4, math.nan)
        num = t - (e1 - m0) * m0
        return np.array([1 / v, -m0 / v, (2 * m0 - e1) / v + 2 * m0 * num / v**2, -num / v**2])

    return ParameterSpec(
        "ols_slope", _costs.effect_times_control(), g, grad, (_ident,), (_ident, _square), "increasing"
    )


def percent_change() -> ParameterSpec:
    """E[(Y1 - Y0) / Y0]; outcomes must be bounded away from zero."""
    return ParameterSpec(
        "percent_change", _costs.ratio_change(), lambda t, e: t, lambda t, e: np.array([1.0]), monotone="increasing"
    )


def cdf(delta: float = 0.0, ties: str = "open") -> ParameterSpec:
    """P(Y1 - Y0 <= delta)."""
    return ParameterSpec(
        f"cdf[{delta:g}]", IndicatorCost(float(delta), ties), lambda t, e: t, lambda t, e: np.array([1.0]),
        monotone="increasing",
    )


def prop_benefit(ties: str = "open") -> ParameterSpec:
    """P(Y1 > Y0) = 1 - P(Y1 - Y0 <= 0)."""
    return ParameterSpec(
        "prop_benefit", IndicatorCost(0.0, ties), lambda t, e: 1.0 - t, lambda t, e: np.array([-1.0]),
        monotone="decreasing",
    )


PARAMETERS: dict[str, Callable[..., ParameterSpec]] = {
    "identity": identity,
    "variance_te": variance_te,
    "correlation": correlation,
    "cov_te_y0": cov_te_y0,
    "ols_slope": ols_slope,
    "percent_change": percent_change,
    "cdf": cdf,
    "prop_benefit": prop_benefit,
}


def parameter(name: str, **options) -> ParameterSpec:
    """Look up a built-in parameter, e.g. ``parameter("cdf", delta=0.5)``."""
    try:
        factory = PARAMETERS[name]
    except KeyError:
        raise ConfigurationError(f"unknown parameter {name!r}; choose from {sorted(PARAMETERS)}") from None
    try:
        return factory(**options)
    except TypeError as exc:
        raise ConfigurationError(f"bad options for parameter {name!r}: {exc}") from None


# ---------------------------------------------------------- theta bounds


@dataclass(frozen=True)
class CellBounds:
    lower: float
    upper: float
    method: str


def _monotone_ok(mu1: SignedMeasure, mu0: SignedMeasure, cost) -> bool:
    return isinstance(cost, SmoothCost) and cost.cross_sign is not None and mu1.proper and mu0.proper


def theta_bounds_cell(
    mu1: SignedMeasure,
    mu0: SignedMeasure,
    cost: SmoothCost | IndicatorCost,
    solver: str = "lp",
    rectangle: tuple[float, float] | None = None,
) -> CellBounds:
    """Sharp bounds on ``E[c(Y1, Y0)]`` given the two marginals.

    Smooth costs use the restricted dual LP for ``c`` and ``-c``.
    ``solver="monotone"`` instead evaluates the comonotone and antitone
    couplings, which is exact for proper marginals when the cross
    derivative of ``c`` has constant sign; ``"auto"`` uses it when it
    applies. Indicator costs use the closed form for proper marginals and
    the interval sweep otherwise.
    """
    if isinstance(cost, IndicatorCost):
        strict = cost.ties == "open"
        if mu1.proper and mu0.proper:
            lo, hi = makarov_closed_form(mu1, mu0, cost.delta, strict=strict)
            return CellBounds(lo, hi, "closed_form")
        sw = IndicatorSweep(mu1, mu0)
        lo = float(sw.values(cost.delta, "lower", strict))
        hi = 1.0 - float(sw.values(cost.delta, "upper", True))
        return CellBounds(lo, hi, "sweep")

    if solver not in ("lp", "monotone", "auto"):
        raise ConfigurationError(f"solver must be lp, monotone or auto, got {solver!r}")
    if solver == "monotone" or (solver == "auto" and _monotone_ok(mu1, mu0, cost)):
        if not _monotone_ok(mu1, mu0, cost):
            raise ConfigurationError("monotone solver needs proper marginals and a cost with known cross sign")
        como = monotone_coupling_value(mu1, mu0, cost)
        anti = monotone_coupling_value(mu1, mu0, cost, antitone=True)
        lo, hi = (anti, como) if cost.cross_sign > 0 else (como, anti)
        return CellBounds(lo, hi, "monotone")

    if not cost.has_class_bounds:
        if rectangle is None:
            rectangle = (
                float(min(mu1.support[0], mu0.support[0])),
                float(max(mu1.support[-1], mu0.support[-1])),
            )
        cost = cost.with_class_bounds(rectangle)
    lo = solve_dual_smooth(mu1, mu0, cost, restricted=True).objective
    hi = -solve_dual_smooth(mu1, mu0, cost.negated(), restricted=True).objective
    return CellBounds(lo, hi, "lp")


def _subset_index(cells: Sequence[str], subset) -> np.ndarray:
    if subset is None:
        return np.arange(len(cells))
    subset = list(subset)
    if not subset:
        raise ConfigurationError("covariate subset is empty")
    unknown = [c for c in subset if c not in cells]
    if unknown:
        raise ConfigurationError(f"unknown cells {unknown}; known cells are {list(cells)}")
    return np.array(sorted({list(cells).index(c) for c in subset}))


def aggregate_theta(shares, per_cell, subset=None, cells: Sequence[str] | None = None) -> tuple[float, float]:
    """Share-weighted bounds, renormalised to ``subset`` when given."""
    s = np.asarray(shares.shares if isinstance(shares, ComplierShares) else shares, dtype=float)
    if cells is None:
        cells = shares.cells if isinstance(shares, ComplierShares) else [str(k) for k in range(s.size)]
    b = np.asarray(per_cell, dtype=float).reshape(s.size, 2)
    idx = _subset_index(cells, subset)
    w = s[idx] / s[idx].sum()
    return float(w @ b[idx, 0]), float(w @ b[idx, 1])


# ---------------------------------------------------------- gamma bounds


def _g(p: ParameterSpec, t: float, eta: np.ndarray) -> float:
    v = float(p.g(t, eta))
    if not math.isfinite(v):
        raise EvaluationError(f"parameter {p.name!r}: g is not finite at theta={t!r}, eta={list(eta)}")
    return v


def _extremum(p, lo, hi, eta, sign, grid):
    ts = np.linspace(lo, hi, grid)
    vals = np.array([sign * _g(p, t, eta) for t in ts])
    k = int(np.argmin(vals))
    best_t, best_v = float(ts[k]), float(vals[k])
    a, b = float(ts[max(k - 1, 0)]), float(ts[min(k + 1, grid - 1)])
    if b > a:
        res = minimize_scalar(lambda t: sign * _g(p, t, eta), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-10})
        if res.success and res.fun < best_v:
            best_t, best_v = float(res.x), float(res.fun)
    for t in (lo, hi):
        v = sign * _g(p, t, eta)
        if v <= best_v:
            best_t, best_v = t, v
    return sign * best_v, best_t


def gamma_bounds(theta_l: float, theta_h: float, eta, p: ParameterSpec, grid: int = 1001):
    """``(gamma_L, gamma_H, t_L, t_H)``: extrema of ``g(., eta)`` over ``[theta_l, theta_h]``.

    Monotone parameters are evaluated at the endpoints. Otherwise a uniform
    grid is refined by bounded scalar minimisation around the best point.
    """
    eta = np.asarray(eta, dtype=float)
    if p.monotone == "increasing":
        return _g(p, theta_l, eta), _g(p, theta_h, eta), theta_l, theta_h
    if p.monotone == "decreasing":
        return _g(p, theta_h, eta), _g(p, theta_l, eta), theta_h, theta_l
    lo, hi = min(theta_l, theta_h), max(theta_l, theta_h)
    gl, tl = _extremum(p, lo, hi, eta, 1.0, grid)
    gh, th = _extremum(p, lo, hi, eta, -1.0, grid)
    return gl, gh, tl, th


def grad_envelope(theta_l, theta_h, eta, p: ParameterSpec, t_l, t_h):
    """Gradients of ``g^L`` and ``g^H`` with respect to ``(theta_L, theta_H, eta)``.

    The theta derivative flows only to the endpoint where the optimum sits.
    When the interval is degenerate the endpoint is chosen by the sign of
    ``dg/dtheta``, which gives the one-sided derivative that moves the
    optimum.
    """
    eta = np.asarray(eta, dtype=float)
    tol = 1e-9 * (1.0 + abs(theta_h - theta_l))
    out = []
    for t, minimise in ((t_l, True), (t_h, False)):
        gr = np.asarray(p.grad(t, eta), dtype=float)
        gt = gr[0]
        at_l, at_h = abs(t - theta_l) <= tol, abs(t - theta_h) <= tol
        if at_l and at_h:
            to_low = (gt >= 0) == minimise
            at_l, at_h = to_low, not to_low
        out.append(np.concatenate([[gt * at_l, gt * at_h], gr[1:]]))
    return out[0], out[1]


# --------------------------------------------------------------- pipeline


@dataclass(eq=False)
class BoundsResult:
    parameter: str
    cells: tuple[str, ...]
    shares: np.ndarray
    first_stage: np.ndarray
    theta_cells: np.ndarray  # (M, 2)
    methods: list[str]
    theta: tuple[float, float]
    eta: EtaHat
    eta_used: np.ndarray
    gamma: tuple[float, float]
    t_star: tuple[float, float]
    subset: tuple[str, ...] | None = None
    pooled_theta: tuple[float, float] | None = None
    pooled_gamma: tuple[float, float] | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        out = {
            "parameter": self.parameter,
            "shares": {c: float(s) for c, s in zip(self.cells, self.shares)},
            "first_stage": {c: float(f) for c, f in zip(self.cells, self.first_stage)},
            "theta_cells": {
                c: {"lower": float(b[0]), "upper": float(b[1]), "method": m}
                for c, b, m in zip(self.cells, self.theta_cells, self.methods)
            },
            "theta": list(self.theta),
            "eta": [float(v) for v in self.eta_used],
            "gamma": list(self.gamma),
            "t_star": list(self.t_star),
            "subset": None if self.subset is None else list(self.subset),
            "warnings": list(self.warnings),
        }
        if self.pooled_theta is not None:
            out["pooled"] = {"theta": list(self.pooled_theta), "gamma": list(self.pooled_gamma)}
        return out


def sample_rectangle(s: Sample) -> tuple[float, float]:
    return float(s.y.min()), float(s.y.max())


def _prepare_cost(cost, rectangle):
    if isinstance(cost, SmoothCost) and not cost.has_class_bounds:
        return cost.with_class_bounds(rectangle)
    return cost


def estimate(
    s: Sample,
    p: ParameterSpec,
    w=None,
    subset=None,
    solver: str = "lp",
    rectangle: tuple[float, float] | None = None,
    pooled: bool | None = None,
    fs: FirstStage | None = None,
) -> BoundsResult:
    """Plug-in bounds on ``gamma`` from a (possibly bootstrap weighted) sample.

    ``pooled`` also computes the covariate-free bounds and checks that they
    contain the covariate-aggregated ones; it defaults to True for
    unweighted runs with more than one cell.
    """
    rectangle = rectangle or sample_rectangle(s)
    cost = _prepare_cost(p.cost, rectangle)
    if fs is None:
        fs = first_stage(s, w)
    M = s.n_cells
    per, methods = np.zeros((M, 2)), []
    for x in range(M):
        cb = theta_bounds_cell(fs.measures[1, x], fs.measures[0, x], cost, solver, rectangle)
        per[x] = cb.lower, cb.upper
        methods.append(cb.method)
    eta = eta_hat(fs.measures, fs.shares, p.eta1, p.eta0)
    theta = aggregate_theta(fs.shares, per, subset, s.cells)
    idx = _subset_index(s.cells, subset)
    sw = fs.shares.shares[idx]
    eta_used = (sw / sw.sum()) @ eta.per_cell[idx] if subset is not None else eta.stacked

    warnings: list[str] = []
    for x in range(M):
        if per[x, 0] > per[x, 1] + ORDER_TOL:
            warnings.append(f"cell {s.cells[x]!r}: lower bound exceeds upper bound by {per[x, 0] - per[x, 1]:.3g}")
    if isinstance(cost, IndicatorCost) and (per.min() < -1e-12 or per.max() > 1 + 1e-12):
        warnings.append("probability bounds fall outside [0, 1] because of negative complier weights; reported unclipped")
    gl, gh, tl, th = gamma_bounds(theta[0], theta[1], eta_used, p)
    if abs(theta[1] - theta[0]) <= 1e-9 * (1 + abs(theta[1])):
        warnings.append("theta bounds coincide; gamma bounds are not differentiable here")

    res = BoundsResult(
        p.name, s.cells, fs.shares.shares.copy(), fs.shares.first_stage.copy(), per, methods, theta, eta,
        np.asarray(eta_used, dtype=float), (gl, gh), (tl, th),
        None if subset is None else tuple(s.cells[k] for k in idx), warnings=warnings,
    )
    if pooled is None:
        pooled = w is None and M > 1
    if pooled and M > 1:
        m1, m0 = pooled_measure(fs, 1), pooled_measure(fs, 0)
        cb = theta_bounds_cell(m1, m0, cost, solver, rectangle)
        res.pooled_theta = (cb.lower, cb.upper)
        pg = gamma_bounds(cb.lower, cb.upper, eta.stacked, p)
        res.pooled_gamma = (pg[0], pg[1])
        if subset is None:
            agg = aggregate_theta(fs.shares, per)
            if cb.lower > agg[0] + POOLING_TOL or cb.upper < agg[1] - POOLING_TOL:
                raise EvaluationError(
                    f"pooled bounds {cb.lower, cb.upper} do not contain the covariate bounds {agg}"
                )
    return res


# ------------------------------------------------------- CDF and quantiles


@dataclass(eq=False)
class CdfCurve:
    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cells_lower: np.ndarray  # (M, G)
    cells_upper: np.ndarray


def default_delta_grid(s: Sample, cap: int = 5000) -> np.ndarray:
    """Differences between treated and untreated outcome values, their midpoints and two outer points."""
    y1 = np.unique(s.y[s.d == 1])
    y0 = np.unique(s.y[s.d == 0])
    if y1.size == 0 or y0.size == 0:
        diffs = np.array([0.0])
    else:
        diffs = np.unique((y1[:, None] - y0[None, :]).ravel())
    mids = 0.5 * (diffs[:-1] + diffs[1:])
    grid = np.unique(np.concatenate([diffs, mids]))
    if grid.size > cap - 2:
        grid = grid[np.unique(np.linspace(0, grid.size - 1, cap - 2).round().astype(int))]
    pad = max(1.0, 0.05 * (grid[-1] - grid[0]))
    return np.concatenate([[grid[0] - pad], grid, [grid[-1] + pad]])


def cdf_bound_curve(
    s: Sample, grid=None, ties: str = "open", w=None, subset=None, fs: FirstStage | None = None
) -> CdfCurve:
    """Bounds on ``P(Y1 - Y0 <= delta)`` for every ``delta`` in ``grid``."""
    grid = default_delta_grid(s) if grid is None else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or not np.all(np.isfinite(grid)) or np.any(np.diff(grid) < 0):
        raise ConfigurationError("delta grid must be finite and sorted")
    if fs is None:
        fs = first_stage(s, w)
    strict = ties == "open"
    M = s.n_cells
    lo, hi = np.zeros((M, grid.size)), np.zeros((M, grid.size))
    for x in range(M):
        m1, m0 = fs.measures[1, x], fs.measures[0, x]
        if m1.proper and m0.proper:
            lo[x], hi[x] = makarov_closed_form(m1, m0, grid, strict=strict)
        else:
            sw = IndicatorSweep(m1, m0)
            lo[x] = sw.values(grid, "lower", strict)
            hi[x] = 1.0 - sw.values(grid, "upper", True)
    idx = _subset_index(s.cells, subset)
    wts = fs.shares.shares[idx] / fs.shares.shares[idx].sum()
    return CdfCurve(grid, wts @ lo[idx], wts @ hi[idx], lo, hi)


def _components(grid: np.ndarray, keep: np.ndarray) -> list[tuple[float, float]]:
    out = []
    k = 0
    while k < keep.size:
        if keep[k]:
            j = k
            while j + 1 < keep.size and keep[j + 1]:
                j += 1
            out.append((float(grid[k]), float(grid[j])))
            k = j + 1
        else:
            k += 1
    return out


def quantile_identified_set(curve: CdfCurve, tau: float) -> list[tuple[float, float]]:
    """Grid points ``q`` with ``theta_L(q) <= tau <= theta_H(q)`` as connected runs."""
    if not 0 < tau <= 1:
        raise ConfigurationError("tau must lie in (0, 1]")
    # aggregated probabilities carry rounding error of a few ulps
    tol = 1e-12
    keep = (curve.lower <= tau + tol) & (tau - tol <= curve.upper)
    return _components(curve.grid, keep)
