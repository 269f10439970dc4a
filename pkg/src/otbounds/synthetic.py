"""Synthetic designs with known population marginals, for simulations and demos."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import ParameterSpec, aggregate_theta, gamma_bounds, theta_bounds_cell
from .data import Sample
from .measures import SignedMeasure


@dataclass(frozen=True)
class UniformCell:
    """Uniform potential-outcome marginals ``Y1 ~ U[lo1, hi1]``, ``Y0 ~ U[lo0, hi0]``."""

    label: str
    lo1: float
    hi1: float
    lo0: float
    hi0: float
    weight: float = 1.0


@dataclass(frozen=True)
class UniformDesign:
    """Cells drawn with probability proportional to ``weight``.

    ``complier_share`` below one adds always-takers and never-takers in
    equal parts, drawn from the same marginals as the compliers, and makes
    the instrument differ from the treatment. With ``exogenous`` the
    treatment is assigned with probability ``p_treat`` and no instrument
    column is produced.
    """

    cells: tuple[UniformCell, ...]
    p_treat: float = 0.5
    exogenous: bool = True
    complier_share: float = 1.0
    decimals: int | None = None

    @property
    def probs(self) -> np.ndarray:
        w = np.array([c.weight for c in self.cells], dtype=float)
        return w / w.sum()

    def draw(self, n: int, rng: np.random.Generator) -> Sample:
        k = rng.choice(len(self.cells), n, p=self.probs)
        z = (rng.uniform(size=n) < self.p_treat).astype(int)
        if self.exogenous:
            d = z
        else:
            kind = rng.uniform(size=n)
            edge = (1 - self.complier_share) / 2
            d = np.where(kind < edge, 1, np.where(kind < 2 * edge, 0, z))
        u = rng.uniform(size=n)
        lo = np.array([[c.lo0, c.lo1] for c in self.cells])[k, d]
        hi = np.array([[c.hi0, c.hi1] for c in self.cells])[k, d]
        y = lo + (hi - lo) * u
        if self.decimals is not None:
            y = np.round(y, self.decimals)
        labels = [self.cells[j].label for j in k]
        return Sample.from_arrays(y, d, None if self.exogenous else z, labels)

    def population_measures(self, points: int = 300) -> list[tuple[SignedMeasure, SignedMeasure]]:
        """Midpoint-quantile discretisations of every cell's two marginals."""
        u = (np.arange(points) + 0.5) / points
        w = np.full(points, 1.0 / points)
        return [
            (SignedMeasure(c.lo1 + (c.hi1 - c.lo1) * u, w), SignedMeasure(c.lo0 + (c.hi0 - c.lo0) * u, w))
            for c in self.cells
        ]

    def population_bounds(self, p: ParameterSpec, points: int = 300, solver: str = "lp"):
        """Identified set for ``p`` from the discretised population marginals.

        Cells are weighted by their population probability, which equals the
        complier share because the complier fraction is the same in every
        cell. Returns ``(gamma_L, gamma_H, per_cell_theta)``.
        """
        meas = self.population_measures(points)
        rect = (min(min(c.lo1, c.lo0) for c in self.cells), max(max(c.hi1, c.hi0) for c in self.cells))
        per = np.array([
            [cb.lower, cb.upper]
            for cb in (theta_bounds_cell(m1, m0, p.cost, solver, rect) for m1, m0 in meas)
        ])
        theta = aggregate_theta(self.probs, per)
        eta1 = [np.array([f(m1.support) @ m1.weights for f in p.eta1]) for m1, _ in meas]
        eta0 = [np.array([f(m0.support) @ m0.weights for f in p.eta0]) for _, m0 in meas]
        eta = np.concatenate([self.probs @ np.array(eta1).reshape(len(meas), -1),
                              self.probs @ np.array(eta0).reshape(len(meas), -1)])
        gl, gh, _, _ = gamma_bounds(theta[0], theta[1], eta, p)
        return gl, gh, per


def two_cell_design(**kw) -> UniformDesign:
    """The design used by the coverage experiment: two cells with overlapping supports."""
    return UniformDesign(
        (UniformCell("a", 1.0, 3.0, 0.0, 2.0), UniformCell("b", 2.0, 5.0, 0.5, 2.5)), **kw
    )
