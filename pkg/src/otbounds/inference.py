"""Exchangeable bootstrap and confidence sets for the identified set."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bounds import (
    BoundsResult,
    CdfCurve,
    ParameterSpec,
    _components,
    _prepare_cost,
    cdf_bound_curve,
    estimate,
    grad_envelope,
    sample_rectangle,
)
from .costs import IndicatorCost
from .data import Sample
from .dual import approx_argmax_set
from .errors import BootstrapFailureError, ConfigurationError, OTBoundsError
from .measures import FirstStage, SignedMeasure, eta_hat, first_stage

FAILURE_LIMIT = 0.05


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``kappa`` is ``(c, a)`` for the slack rule ``kappa_n = c * n**a``;
    None selects ``log(n)``. ``scheme="unit"`` sets every weight to one,
    which reproduces the point estimate and is useful for checks.
    """

    scheme: str = "bayesian"
    replicates: int = 500
    seed: int = 0
    method: str = "simple"
    kappa: tuple[float, float] | None = None
    alpha: float = 0.05
    solver: str = "lp"
    threads: int = 1

    def __post_init__(self):
        if self.scheme not in ("bayesian", "multinomial", "unit"):
            raise ConfigurationError(f"unknown bootstrap scheme {self.scheme!r}")
        if self.method not in ("simple", "derivative"):
            raise ConfigurationError(f"unknown bootstrap method {self.method!r}")
        if int(self.replicates) < 1:
            raise ConfigurationError("replicates must be at least 1")
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.kappa is not None and (self.kappa[0] <= 0 or self.kappa[1] >= 0.5):
            raise ConfigurationError("kappa rule c * n**a needs c > 0 and a < 1/2")
        if int(self.threads) < 1:
            raise ConfigurationError("threads must be at least 1")

    def kappa_n(self, n: int) -> float:
        k = math.log(n) if self.kappa is None else self.kappa[0] * n ** self.kappa[1]
        if not (k > 0 and k / math.sqrt(n) < 1):
            raise ConfigurationError(f"kappa_n={k:.4g} must be positive and below sqrt(n) at n={n}")
        return k


def replicate_rng(seed: int, b: int, attempt: int = 0) -> np.random.Generator:
    """Independent stream for replicate ``b``; the same for any execution order."""
    key = (b,) if attempt == 0 else (b, attempt)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def gen_bootstrap_weights(scheme: str, n: int, rng: np.random.Generator) -> np.ndarray:
    if scheme == "multinomial":
        return rng.multinomial(n, np.full(n, 1.0 / n)).astype(float)
    if scheme == "bayesian":
        xi = rng.standard_exponential(n)
        return xi / xi.mean()
    if scheme == "unit":
        return np.ones(n)
    raise ConfigurationError(f"unknown bootstrap scheme {scheme!r}")


@dataclass(eq=False)
class InferenceResult:
    draws: np.ndarray  # (B, 2)
    c_hat: float
    c_raw: float
    interval: tuple[float, float]
    alpha: float
    method: str
    scheme: str
    failed: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "scheme": self.scheme,
            "replicates": int(self.draws.shape[0]),
            "alpha": self.alpha,
            "c_hat": self.c_hat,
            "c_raw": self.c_raw,
            "interval": list(self.interval),
            "failed_replicates": self.failed,
            "diagnostics": self.diagnostics,
        }


def order_statistic_index(alpha: float, B: int) -> int:
    """1-based index ``ceil((1 - alpha) B)``, guarded against rounding up by one."""
    return min(B, max(1, math.ceil((1 - alpha) * B - 1e-9)))


def confidence_set(draws, gamma_hat, n: int, alpha: float = 0.05):
    """``(c_hat, c_raw, interval)`` from bootstrap draws of ``(gamma_L, gamma_H)``.

    ``c_raw`` is the order statistic of
    ``max(sqrt(n)(gL* - gL), -sqrt(n)(gH* - gH))``; ``c_hat`` clamps it at
    zero so the interval always contains the estimated bounds.
    """
    draws = np.asarray(draws, dtype=float).reshape(-1, 2)
    if draws.shape[0] == 0:
        raise BootstrapFailureError("no successful bootstrap draws")
    rn = math.sqrt(n)
    stat = np.maximum(rn * (draws[:, 0] - gamma_hat[0]), -rn * (draws[:, 1] - gamma_hat[1]))
    c_raw = float(np.sort(stat)[order_statistic_index(alpha, stat.size) - 1]) + 0.0  # no negative zero
    c = c_raw if c_raw > 0 else 0.0
    return c, c_raw, (float(gamma_hat[0] - c / rn), float(gamma_hat[1] + c / rn))


# ------------------------------------------------------- simple bootstrap


def _run_replicates(fn: Callable[[np.ndarray], object], s: Sample, cfg: BootstrapConfig):
    """Evaluate ``fn(weights)`` for every replicate, retrying a failure once."""

    def one(b):
        for attempt in (0, 1):
            w = gen_bootstrap_weights(cfg.scheme, s.n, replicate_rng(cfg.seed, b, attempt))
            try:
                return fn(w), attempt
            except OTBoundsError:
                continue
        return None, 2

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as ex:
            out = list(ex.map(one, range(cfg.replicates)))
    else:
        out = [one(b) for b in range(cfg.replicates)]
    retried = sum(1 for _, a in out if a > 0)
    if retried > FAILURE_LIMIT * cfg.replicates:
        raise BootstrapFailureError(
            f"{retried} of {cfg.replicates} replicates hit an empty or degenerate cell; "
            "use the bayesian scheme"
        )
    return [r for r, a in out if a < 2], retried


def bootstrap_draws(
    s: Sample,
    p: ParameterSpec,
    est: BoundsResult,
    cfg: BootstrapConfig,
    subset=None,
    rectangle=None,
) -> InferenceResult:
    """Bootstrap draws of the estimated bounds and the resulting confidence set."""
    rectangle = rectangle or sample_rectangle(s)
    if cfg.method == "derivative":
        draws, failed, diag = _derivative_draws(s, p, est, cfg, subset, rectangle)
    else:
        def fn(w):
            r = estimate(s, p, w=w, subset=subset, solver=cfg.solver, rectangle=rectangle, pooled=False)
            return r.gamma

        res, failed = _run_replicates(fn, s, cfg)
        draws = np.array(res, dtype=float).reshape(-1, 2)
        diag = {}
    c, c_raw, interval = confidence_set(draws, est.gamma, s.n, cfg.alpha)
    return InferenceResult(draws, c, c_raw, interval, cfg.alpha, cfg.method, cfg.scheme, failed, diag)


# --------------------------------------------------- derivative bootstrap


@dataclass(eq=False)
class DerivativeMatrices:
    d3: np.ndarray  # (2 + K, M (3 + K))
    d4: np.ndarray  # (2, 2 + K)


def build_derivative_matrices(shares, theta_cells, eta_cells, grads) -> DerivativeMatrices:
    """Linear maps from per-cell increments to increments of ``(gamma_L, gamma_H)``.

    Per cell the columns are ``(theta_L, theta_H, eta, s)``; rows of ``d3``
    are ``(theta_L, theta_H, eta)`` of the aggregate.
    """
    s = np.asarray(shares, dtype=float)
    th = np.asarray(theta_cells, dtype=float).reshape(s.size, 2)
    et = np.asarray(eta_cells, dtype=float).reshape(s.size, -1)
    K = et.shape[1]
    gl, gh = (np.asarray(g, dtype=float) for g in grads)
    if gl.shape != (2 + K,) or gh.shape != (2 + K,):
        raise ValueError(f"gradients must have length {2 + K}")
    width = 3 + K
    d3 = np.zeros((2 + K, s.size * width))
    for x in range(s.size):
        o = x * width
        d3[0, o] = s[x]
        d3[1, o + 1] = s[x]
        d3[2:, o + 2 : o + 2 + K] = s[x] * np.eye(K)
        d3[0, o + width - 1] = th[x, 0]
        d3[1, o + width - 1] = th[x, 1]
        d3[2:, o + width - 1] = et[x]
    return DerivativeMatrices(d3, np.vstack([gl, gh]))


def _on_support(m: SignedMeasure, support: np.ndarray) -> np.ndarray:
    """Weights of ``m`` placed on a superset ``support``."""
    idx = np.searchsorted(support, m.support)
    if np.any(idx >= support.size) or np.any(support[np.minimum(idx, support.size - 1)] != m.support):
        raise ValueError("bootstrap measure has support outside the sample measure")
    out = np.zeros(support.size)
    out[idx] = m.weights
    return out


def evaluate_t2prime(increments, argmax_sets) -> np.ndarray:
    """Stack ``(OT'_L, -OT'_H, h_eta, h_s)`` over cells.

    ``increments[x]`` is ``(h1, h0, h_eta, h_s)`` with ``h1``, ``h0`` given
    on the supports of the sample measures; ``argmax_sets[x]`` is the pair
    of near-optimal sets for the lower and upper costs.
    """
    out = []
    for (h1, h0, h_eta, h_s), (lo, hi) in zip(increments, argmax_sets):
        if len(lo) == 0 or len(hi) == 0:
            raise ValueError("approximate argmax set is empty")
        out.append([lo.evaluate(h1, h0), -hi.evaluate(h1, h0), *np.atleast_1d(h_eta), h_s])
    return np.concatenate([np.asarray(v, dtype=float) for v in out])


def _cell_argmax_sets(fs: FirstStage, p: ParameterSpec, cost, slack: float):
    sets = []
    for x in range(fs.shares.shares.size):
        m1, m0 = fs.measures[1, x], fs.measures[0, x]
        if isinstance(cost, IndicatorCost):
            lo = approx_argmax_set(m1, m0, cost, slack, family="lower")
            hi = approx_argmax_set(m1, m0, cost, slack, family="upper")
        else:
            lo = approx_argmax_set(m1, m0, cost, slack)
            hi = approx_argmax_set(m1, m0, cost.negated(), slack)
        sets.append((lo, hi))
    return sets


def _derivative_draws(s, p, est: BoundsResult, cfg, subset, rectangle):
    if subset is not None:
        raise ConfigurationError("the derivative bootstrap does not support covariate subsets")
    n = s.n
    rn = math.sqrt(n)
    cost = _prepare_cost(p.cost, rectangle)
    fs = first_stage(s)
    slack = cfg.kappa_n(n) / rn
    sets = _cell_argmax_sets(fs, p, cost, slack)
    grads = grad_envelope(est.theta[0], est.theta[1], est.eta_used, p, *est.t_star)
    dm = build_derivative_matrices(fs.shares.shares, est.theta_cells, est.eta.per_cell, grads)
    lin = dm.d4 @ dm.d3
    M = s.n_cells

    def fn(w):
        fsb = first_stage(s, w)
        etab = eta_hat(fsb.measures, fsb.shares, p.eta1, p.eta0)
        incs = []
        for x in range(M):
            h = []
            for d in (1, 0):
                base = fs.measures[d, x]
                h.append(rn * (_on_support(fsb.measures[d, x], base.support) - base.weights))
            h_eta = rn * (etab.per_cell[x] - est.eta.per_cell[x])
            h_s = rn * (fsb.shares.shares[x] - fs.shares.shares[x])
            incs.append((h[0], h[1], h_eta, h_s))
        t2 = evaluate_t2prime(incs, sets)
        return np.asarray(est.gamma) + lin @ t2 / rn

    res, failed = _run_replicates(fn, s, cfg)
    diag = {
        "kappa_n": cfg.kappa_n(n),
        "argmax_sizes": {c: [len(a), len(b)] for c, (a, b) in zip(s.cells, sets)},
        "argmax_exact": isinstance(cost, IndicatorCost),
    }
    return np.array(res, dtype=float).reshape(-1, 2), failed, diag


# ----------------------------------------------------- quantile inversion


@dataclass(eq=False)
class QuantileConfidenceResult:
    grid: np.ndarray
    keep: np.ndarray
    c_hat: np.ndarray
    components: list[tuple[float, float]]
    curve: CdfCurve


def quantile_confidence_set(
    s: Sample, tau: float, grid=None, cfg: BootstrapConfig = BootstrapConfig(), ties: str = "open", subset=None
) -> QuantileConfidenceResult:
    """Invert pointwise tests of ``theta_L(q) <= tau <= theta_H(q)`` over a grid.

    Every grid point reuses the same bootstrap weights.
    """
    if not 0 < tau <= 1:
        raise ConfigurationError("tau must lie in (0, 1]")
    curve = cdf_bound_curve(s, grid, ties, subset=subset)
    g = curve.grid

    def fn(w):
        cb = cdf_bound_curve(s, g, ties, w=w, subset=subset)
        return np.stack([cb.lower, cb.upper], axis=1)

    res, _ = _run_replicates(fn, s, cfg)
    draws = np.array(res)  # (B, G, 2)
    c = np.empty(g.size)
    lo_adj = np.empty(g.size)
    hi_adj = np.empty(g.size)
    for k in range(g.size):
        c[k], _, (lo_adj[k], hi_adj[k]) = confidence_set(
            draws[:, k, :], (curve.lower[k], curve.upper[k]), s.n, cfg.alpha
        )
    keep = (lo_adj <= tau + 1e-12) & (tau - 1e-12 <= hi_adj)
    return QuantileConfidenceResult(g, keep, c, _components(g, keep), curve)


def draws_to_csv(draws: np.ndarray) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["gamma_lower", "gamma_upper"])
    for a, b in np.asarray(draws).reshape(-1, 2):
        wr.writerow([repr(float(a)), repr(float(b))])
    return buf.getvalue()
