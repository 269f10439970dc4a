"""Complier shares and the signed point-mass representation of complier marginals.

The conditional distribution of ``Y_d`` for compliers with covariate value
``x`` is estimated by a finitely supported measure whose weight on
observation ``i`` is

    w_i / n * (1{d,x,z=d}/p_{x,d} - 1{d,x,z=1-d}/p_{x,1-d})
          / (p_{d,x,d}/p_{x,d} - p_{d,x,1-d}/p_{x,1-d})

Weights are negative for observations whose treatment differs from the
instrument, so the measure is a signed measure of total mass one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import DEGENERATE_TOL, Sample
from .errors import DegenerateCellError, IdentificationError

EtaFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class CellProbs:
    """Empirical (optionally bootstrap weighted) cell frequencies.

    ``p_dxz[d, x, z]``, ``p_xz[x, z]`` and ``p_x[x]``.
    """

    p_dxz: np.ndarray
    p_xz: np.ndarray
    p_x: np.ndarray

    def first_stage(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.p_dxz[1, :, 1] / self.p_xz[:, 1] - self.p_dxz[1, :, 0] / self.p_xz[:, 0]


def _check_weights(w, n: int) -> np.ndarray:
    if w is None:
        return np.ones(n)
    w = np.asarray(w, dtype=float)
    if w.shape != (n,):
        raise ValueError(f"weights must have shape ({n},), got {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("bootstrap weights must be finite and nonnegative")
    if abs(w.sum() / n - 1.0) > 1e-10:
        raise ValueError(f"bootstrap weights must average one, got mean {w.sum() / n!r}")
    return w


def cell_probabilities(s: Sample, w=None) -> CellProbs:
    w = _check_weights(w, s.n)
    p = np.zeros((2, s.n_cells, 2))
    np.add.at(p, (s.d, s.x, s.z), w / s.n)
    p_xz = p.sum(axis=0)
    return CellProbs(p, p_xz, p_xz.sum(axis=1))


@dataclass(frozen=True, eq=False)
class ComplierShares:
    shares: np.ndarray
    first_stage: np.ndarray
    cells: tuple[str, ...]

    def __getitem__(self, k) -> float:
        return float(self.shares[k])

    def as_dict(self) -> dict[str, float]:
        return {c: float(v) for c, v in zip(self.cells, self.shares)}


def complier_share(cp: CellProbs, cells: Sequence[str] | None = None) -> ComplierShares:
    """Share of compliers in each covariate cell."""
    M = cp.p_x.size
    cells = tuple(cells) if cells is not None else tuple(str(k) for k in range(M))
    if np.any(cp.p_xz <= DEGENERATE_TOL):
        k = int(np.argwhere(cp.p_xz <= DEGENERATE_TOL)[0][0])
        raise IdentificationError(f"cell {cells[k]!r} has an empty instrument arm")
    fs = cp.first_stage()
    bad = np.flatnonzero(fs <= DEGENERATE_TOL)
    if bad.size:
        raise IdentificationError(f"cell {cells[bad[0]]!r} has nonpositive first stage {fs[bad[0]]:.6g}")
    num = fs * cp.p_x
    return ComplierShares(num / num.sum(), fs, cells)


@dataclass(frozen=True, eq=False)
class SignedMeasure:
    """Finitely supported measure with strictly increasing support."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        sup = np.ascontiguousarray(self.support, dtype=float)
        wts = np.ascontiguousarray(self.weights, dtype=float)
        if sup.ndim != 1 or sup.shape != wts.shape:
            raise ValueError("support and weights must be 1-d arrays of equal length")
        if sup.size == 0:
            raise ValueError("measure has empty support")
        if np.any(np.diff(sup) <= 0):
            raise ValueError("support must be strictly increasing")
        sup.setflags(write=False)
        wts.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", wts)

    @classmethod
    def from_points(cls, y, w) -> "SignedMeasure":
        """Collapse repeated outcome values by summing their weights."""
        y = np.asarray(y, dtype=float)
        w = np.asarray(w, dtype=float)
        sup, inv = np.unique(y, return_inverse=True)
        return cls(sup, np.bincount(inv, weights=w, minlength=sup.size))

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    @property
    def proper(self) -> bool:
        return bool(np.all(self.weights >= 0))

    def __len__(self) -> int:
        return self.support.size

    def cdf(self, y) -> np.ndarray:
        """``mu((-inf, y])`` evaluated elementwise."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cum[np.searchsorted(self.support, y, side="right")]

    def __repr__(self) -> str:
        pts = ", ".join(f"{s:g}: {w:.4g}" for s, w in zip(self.support[:6], self.weights[:6]))
        more = ", ..." if len(self) > 6 else ""
        return f"SignedMeasure({{{pts}{more}}})"


def complier_measure(s: Sample, cp: CellProbs, d: int, x: int, w=None) -> SignedMeasure:
    """Estimate the complier marginal of ``Y_d`` in covariate cell ``x``.

    ``cp`` must have been computed with the same weights ``w``.
    """
    if d not in (0, 1):
        raise ValueError("d must be 0 or 1")
    w = _check_weights(w, s.n)
    p_own, p_other = cp.p_xz[x, d], cp.p_xz[x, 1 - d]
    if p_own <= DEGENERATE_TOL or p_other <= DEGENERATE_TOL:
        raise DegenerateCellError(f"cell {s.cells[x]!r} has an empty instrument arm")
    den = cp.p_dxz[d, x, d] / p_own - cp.p_dxz[d, x, 1 - d] / p_other
    if den <= DEGENERATE_TOL:
        raise DegenerateCellError(f"cell {s.cells[x]!r}, d={d}: complier denominator {den:.3g} is not positive")
    sel = (s.d == d) & (s.x == x) & (w != 0)
    if not np.any(sel):
        raise DegenerateCellError(f"cell {s.cells[x]!r}, d={d}: no observations")
    same = s.z[sel] == d
    omega = (w[sel] / s.n) * np.where(same, 1.0 / p_own, -1.0 / p_other) / den
    return SignedMeasure.from_points(s.y[sel], omega)


def measure_apply(m: SignedMeasure, f) -> float:
    """Integrate ``f`` against ``m``; ``f`` is a vectorised callable or values on the support."""
    vals = f(m.support) if callable(f) else np.asarray(f, dtype=float)
    vals = np.broadcast_to(np.asarray(vals, dtype=float), m.support.shape)
    return float(np.dot(m.weights, vals))


@dataclass(frozen=True, eq=False)
class EtaHat:
    """Nuisance moments: stacked ``(eta_1, eta_0)`` and per-cell components.

    ``per_cell[x]`` has the same layout as ``stacked``.
    """

    stacked: np.ndarray
    per_cell: np.ndarray
    k1: int
    k0: int

    @property
    def eta1(self) -> np.ndarray:
        return self.stacked[: self.k1]

    @property
    def eta0(self) -> np.ndarray:
        return self.stacked[self.k1 :]


def eta_hat(
    measures: dict[tuple[int, int], SignedMeasure],
    shares: ComplierShares,
    eta1: Sequence[EtaFunc],
    eta0: Sequence[EtaFunc],
) -> EtaHat:
    M = shares.shares.size
    K = len(eta1) + len(eta0)
    per = np.zeros((M, K))
    for x in range(M):
        per[x, : len(eta1)] = [measure_apply(measures[1, x], f) for f in eta1]
        per[x, len(eta1) :] = [measure_apply(measures[0, x], f) for f in eta0]
    return EtaHat(shares.shares @ per, per, len(eta1), len(eta0))


@dataclass(frozen=True, eq=False)
class FirstStage:
    """Everything the plug-in estimator extracts from (weighted) data."""

    probs: CellProbs
    shares: ComplierShares
    measures: dict[tuple[int, int], SignedMeasure]

    @property
    def proper(self) -> bool:
        return all(m.proper for m in self.measures.values())


def first_stage(s: Sample, w=None) -> FirstStage:
    """Cell frequencies, complier shares and every ``(d, x)`` measure."""
    cp = cell_probabilities(s, w)
    shares = complier_share(cp, s.cells)
    measures = {(d, x): complier_measure(s, cp, d, x, w) for x in range(s.n_cells) for d in (0, 1)}
    return FirstStage(cp, shares, measures)


def pooled_measure(fs: FirstStage, d: int) -> SignedMeasure:
    """Mixture ``sum_x s_x P_{d|x}`` that ignores the covariates."""
    M = fs.shares.shares.size
    ys = np.concatenate([fs.measures[d, x].support for x in range(M)])
    ws = np.concatenate([fs.shares.shares[x] * fs.measures[d, x].weights for x in range(M)])
    return SignedMeasure.from_points(ys, ws)
