"""Cost functions and the constants that define their restricted dual classes."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Union

import numpy as np

from .errors import ConfigurationError

BoundsFn = Callable[[float, float], "tuple[float, float]"]


@dataclass(frozen=True)
class SmoothCost:
    """Lipschitz cost ``c(y1, y0)``.

    ``cross_sign`` is the sign of the mixed partial derivative when it is
    constant (+1 supermodular, -1 submodular); it enables the monotone
    coupling shortcut for proper marginals. ``lipschitz`` and ``sup_norm``
    are the class constants over the working rectangle; built-in costs
    derive them with ``with_class_bounds``.
    """

    name: str
    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    bounds_fn: BoundsFn | None = None
    cross_sign: int | None = None
    lipschitz: float | None = None
    sup_norm: float | None = None
    sign: int = 1

    def __call__(self, y1, y0):
        return self.sign * self.func(np.asarray(y1, dtype=float), np.asarray(y0, dtype=float))

    def matrix(self, s1: np.ndarray, s0: np.ndarray) -> np.ndarray:
        return self(s1[:, None], s0[None, :])

    def negated(self) -> "SmoothCost":
        cs = None if self.cross_sign is None else -self.cross_sign
        name = self.name[1:] if self.name.startswith("-") else "-" + self.name
        return replace(self, sign=-self.sign, cross_sign=cs, name=name)

    def with_class_bounds(self, rectangle: tuple[float, float]) -> "SmoothCost":
        L, sup = derive_class_bounds(self, rectangle)
        return replace(self, lipschitz=L, sup_norm=sup)

    @property
    def has_class_bounds(self) -> bool:
        return self.lipschitz is not None and self.sup_norm is not None


@dataclass(frozen=True)
class IndicatorCost:
    """Cost ``1{y1 - y0 <= delta}`` handled through its two one-sided versions.

    ``ties="open"`` bounds the CDF from below with ``1{y1 - y0 < delta}``,
    which is lower semicontinuous and sharp for continuous marginals but
    only an outer bound when outcomes have atoms. ``ties="closed"`` uses
    ``1{y1 - y0 <= delta}`` itself, which is exact for finitely supported
    marginals.
    """

    delta: float
    ties: str = "open"

    def __post_init__(self):
        if not math.isfinite(self.delta):
            raise ConfigurationError("indicator threshold delta must be finite")
        if self.ties not in ("open", "closed"):
            raise ConfigurationError(f"ties must be 'open' or 'closed', got {self.ties!r}")

    @property
    def name(self) -> str:
        return f"cdf(delta={self.delta:g})"


CostSpec = Union[SmoothCost, IndicatorCost]


def derive_class_bounds(cost: SmoothCost, rectangle: tuple[float, float]) -> tuple[float, float]:
    """Lipschitz constant and sup norm of ``cost`` over ``[lo, hi]^2``.

    Custom costs must carry both constants; built-ins evaluate closed forms
    at the rectangle corners and critical points.
    """
    if cost.bounds_fn is None:
        if cost.has_class_bounds:
            return float(cost.lipschitz), float(cost.sup_norm)
        raise ConfigurationError(
            f"cost {cost.name!r} is custom: supply both its Lipschitz constant and sup norm"
        )
    lo, hi = (float(v) for v in rectangle)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ConfigurationError(f"rectangle must be finite with lo <= hi, got {rectangle}")
    L, sup = cost.bounds_fn(lo, hi)
    return float(L), float(sup)


def _corners(lo, hi):
    return [(a, b) for a in (lo, hi) for b in (lo, hi)]


def _product_bounds(lo, hi):
    m = max(abs(lo), abs(hi))
    return math.sqrt(2.0) * m, m * m


def _sqdiff_bounds(lo, hi):
    return 2.0 * math.sqrt(2.0) * (hi - lo), (hi - lo) ** 2


def _absdiff_bounds(lo, hi):
    return (math.sqrt(2.0) if hi > lo else 0.0), hi - lo


def _effect_control_bounds(lo, hi):
    # c = (y1 - y0) y0, grad = (y0, y1 - 2 y0)
    L = max(math.hypot(y0, y1 - 2 * y0) for y1, y0 in _corners(lo, hi))
    pts = _corners(lo, hi)
    pts += [(y1, y1 / 2) for y1 in (lo, hi) if lo <= y1 / 2 <= hi]
    if lo <= 0 <= hi:
        pts.append((0.0, 0.0))
    return L, max(abs((y1 - y0) * y0) for y1, y0 in pts)


def _ratio_bounds(lo, hi):
    if lo <= 0 <= hi:
        raise ConfigurationError("ratio cost needs outcomes bounded away from zero")
    L = max(math.sqrt(1 / y0**2 + y1**2 / y0**4) for y1, y0 in _corners(lo, hi))
    return L, max(abs((y1 - y0) / y0) for y1, y0 in _corners(lo, hi))


def _constant_zero_bounds(lo, hi):
    return 0.0, 0.0


def product() -> SmoothCost:
    return SmoothCost("product", lambda a, b: a * b, _product_bounds, cross_sign=1)


def squared_diff() -> SmoothCost:
    return SmoothCost("squared_diff", lambda a, b: (a - b) ** 2, _sqdiff_bounds, cross_sign=-1)


def abs_diff() -> SmoothCost:
    return SmoothCost("abs_diff", lambda a, b: np.abs(a - b), _absdiff_bounds, cross_sign=-1)


def effect_times_control() -> SmoothCost:
    return SmoothCost("effect_times_control", lambda a, b: (a - b) * b, _effect_control_bounds, cross_sign=1)


def ratio_change() -> SmoothCost:
    return SmoothCost("ratio_change", lambda a, b: (a - b) / b, _ratio_bounds, cross_sign=-1)


def zero() -> SmoothCost:
    return SmoothCost("zero", lambda a, b: np.zeros(np.broadcast(a, b).shape), _constant_zero_bounds, cross_sign=0)


def custom(name: str, func, lipschitz: float, sup_norm: float, cross_sign: int | None = None) -> SmoothCost:
    if lipschitz is None or sup_norm is None:
        raise ConfigurationError("custom costs need both lipschitz and sup_norm")
    if lipschitz < 0 or sup_norm < 0 or not (math.isfinite(lipschitz) and math.isfinite(sup_norm)):
        raise ConfigurationError("lipschitz and sup_norm must be finite and nonnegative")
    return SmoothCost(name, func, None, cross_sign, float(lipschitz), float(sup_norm))


SMOOTH_COSTS: dict[str, Callable[[], SmoothCost]] = {
    "product": product,
    "squared_diff": squared_diff,
    "abs_diff": abs_diff,
    "effect_times_control": effect_times_control,
    "ratio_change": ratio_change,
    "zero": zero,
}


def smooth_cost(name: str) -> SmoothCost:
    try:
        return SMOOTH_COSTS[name]()
    except KeyError:
        raise ConfigurationError(f"unknown cost {name!r}; choose from {sorted(SMOOTH_COSTS)}") from None
