"""Sample ingestion, covariate binning and checks of the identifying assumptions."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import AssumptionViolationError, EmptySampleError, SchemaError, WeakInstrumentError

# denominators below this are treated as zero everywhere downstream
DEGENERATE_TOL = 1e-10


@dataclass(frozen=True)
class Observation:
    y: float
    d: int
    z: int
    x: str = "all"


@dataclass(frozen=True)
class BinRule:
    """Breakpoints for one raw covariate.

    ``closed="left"`` gives intervals ``[a, b)``, ``closed="right"`` gives
    ``(a, b]``. The outermost bins extend to -inf and +inf.
    """

    breaks: tuple[float, ...]
    closed: str = "left"

    def __post_init__(self):
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        if self.closed not in ("left", "right"):
            raise SchemaError(f"bin rule closed must be 'left' or 'right', got {self.closed!r}")
        if any(b2 <= b1 for b1, b2 in zip(self.breaks, self.breaks[1:])):
            raise SchemaError("bin breakpoints must be strictly increasing")

    @classmethod
    def from_config(cls, obj) -> "BinRule":
        if isinstance(obj, Mapping):
            return cls(tuple(obj["breaks"]), obj.get("closed", "left"))
        return cls(tuple(obj))

    def labels(self) -> list[str]:
        edges = (-math.inf, *self.breaks, math.inf)
        out = []
        for lo, hi in zip(edges, edges[1:]):
            left = "[" if self.closed == "left" and math.isfinite(lo) else "("
            right = "]" if self.closed == "right" and math.isfinite(hi) else ")"
            out.append(f"{left}{_fmt(lo)}, {_fmt(hi)}{right}")
        return out

    def assign(self, values: np.ndarray) -> np.ndarray:
        side = "right" if self.closed == "left" else "left"
        return np.searchsorted(np.asarray(self.breaks), values, side=side)


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(int(v)) if float(v).is_integer() else repr(v)


@dataclass(frozen=True)
class Schema:
    y: str
    d: str
    z: str | None = None
    x: tuple[str, ...] = ()
    delimiter: str = ","

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(self.x))


@dataclass(frozen=True, eq=False)
class Sample:
    """Immutable collection of observations indexed by covariate cell.

    ``x`` holds integer codes into ``cells``; cells are kept in order of
    first appearance.
    """

    y: np.ndarray
    d: np.ndarray
    z: np.ndarray
    x: np.ndarray
    cells: tuple[str, ...]
    exogenous: bool = False

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=float)
        d = np.ascontiguousarray(self.d, dtype=np.int8)
        z = np.ascontiguousarray(self.z, dtype=np.int8)
        x = np.ascontiguousarray(self.x, dtype=np.intp)
        if y.size == 0:
            raise EmptySampleError("sample has no observations")
        if not (y.shape == d.shape == z.shape == x.shape) or y.ndim != 1:
            raise SchemaError("y, d, z and x must be 1-d arrays of equal length")
        if not np.all(np.isfinite(y)):
            raise SchemaError("outcome must be finite", row=int(np.flatnonzero(~np.isfinite(y))[0]) + 1)
        for name, arr in (("d", d), ("z", z)):
            bad = np.flatnonzero((arr != 0) & (arr != 1))
            if bad.size:
                raise SchemaError(f"{name} must be 0 or 1", row=int(bad[0]) + 1)
        if len(self.cells) == 0 or x.min() < 0 or x.max() >= len(self.cells):
            raise SchemaError("covariate codes must reference registered cells")
        for name, arr in (("y", y), ("d", d), ("z", z), ("x", x)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "cells", tuple(str(c) for c in self.cells))

    @property
    def n(self) -> int:
        return int(self.y.size)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def observations(self) -> list[Observation]:
        return [
            Observation(float(y), int(d), int(z), self.cells[x])
            for y, d, z, x in zip(self.y, self.d, self.z, self.x)
        ]

    def pooled(self) -> "Sample":
        """Same data with all covariate cells merged into one."""
        return Sample(self.y, self.d, self.z, np.zeros(self.n, dtype=np.intp), ("all",), self.exogenous)

    @classmethod
    def from_arrays(cls, y, d, z=None, x=None) -> "Sample":
        """Build a sample from arrays; ``z=None`` declares exogenous treatment."""
        y = np.asarray(y, dtype=float)
        d = np.asarray(d)
        exogenous = z is None
        z = d if exogenous else np.asarray(z)
        if x is None:
            codes, cells = np.zeros(y.size, dtype=np.intp), ("all",)
        else:
            codes, cells = _encode_cells([str(v) for v in x])
        return cls(y, d, z, codes, cells, exogenous)

    @classmethod
    def from_observations(cls, obs: Iterable[Observation]) -> "Sample":
        obs = list(obs)
        if not obs:
            raise EmptySampleError("sample has no observations")
        codes, cells = _encode_cells([str(o.x) for o in obs])
        return cls(
            np.array([o.y for o in obs], dtype=float),
            np.array([o.d for o in obs]),
            np.array([o.z for o in obs]),
            codes,
            cells,
            all(o.d == o.z for o in obs),
        )


def _encode_cells(labels: Sequence[str]) -> tuple[np.ndarray, tuple[str, ...]]:
    index: dict[str, int] = {}
    codes = np.empty(len(labels), dtype=np.intp)
    for i, lab in enumerate(labels):
        codes[i] = index.setdefault(lab, len(index))
    return codes, tuple(index)


def _parse_binary(raw: str, name: str, row: int) -> int:
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise SchemaError(f"column {name!r} value {raw!r} is not numeric", row=row) from None
    if v not in (0.0, 1.0):
        raise SchemaError(f"column {name!r} must be 0 or 1, got {raw!r}", row=row)
    return int(v)


def load_sample(
    source: str | os.PathLike | TextIO,
    schema: Schema,
    binning: Mapping[str, BinRule] | None = None,
) -> Sample:
    """Read a delimited text table into a :class:`Sample`.

    Parameters
    ----------
    source
        Path or open text stream. A header row is required.
    schema
        Column names. If ``schema.z`` is None, or names a column that is
        absent, treatment is taken as exogenous and ``z = d`` for every row.
    binning
        Optional breakpoints per raw covariate column. Covariates without a
        rule are used as categorical labels. The cartesian product of the
        per-column labels forms the covariate cells.
    """
    binning = dict(binning or {})
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            text = fh.read()
    else:
        text = source.read()
    reader = csv.reader(io.StringIO(text), delimiter=schema.delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptySampleError("input has no header row") from None
    col = {name: i for i, name in enumerate(header)}

    required = [schema.y, schema.d, *schema.x]
    missing = [c for c in required if c not in col]
    if missing:
        raise SchemaError(f"missing columns {missing}; header is {header}", row=0)
    for c in binning:
        if c not in schema.x:
            raise SchemaError(f"bin rule given for {c!r}, which is not a covariate column")
    exogenous = schema.z is None or schema.z not in col

    ys, ds, zs, labels = [], [], [], []
    for i, rec in enumerate(reader, start=1):
        if not rec or all(not f.strip() for f in rec):
            continue
        if len(rec) < len(header):
            raise SchemaError(f"expected {len(header)} fields, found {len(rec)}", row=i)
        raw_y = rec[col[schema.y]].strip()
        try:
            y = float(raw_y)
        except ValueError:
            raise SchemaError(f"outcome {raw_y!r} is not numeric", row=i) from None
        if not math.isfinite(y):
            raise SchemaError(f"outcome {raw_y!r} is not finite", row=i)
        d = _parse_binary(rec[col[schema.d]].strip(), schema.d, i)
        z = d if exogenous else _parse_binary(rec[col[schema.z]].strip(), schema.z, i)
        parts = []
        for c in schema.x:
            raw = rec[col[c]].strip()
            if c in binning:
                try:
                    v = float(raw)
                except ValueError:
                    raise SchemaError(f"covariate {c!r} value {raw!r} is not numeric", row=i) from None
                rule = binning[c]
                parts.append(f"{c}:{rule.labels()[int(rule.assign(np.array([v]))[0])]}")
            else:
                if raw == "":
                    raise SchemaError(f"covariate {c!r} is missing", row=i)
                parts.append(f"{c}:{raw}")
        ys.append(y)
        ds.append(d)
        zs.append(z)
        labels.append("|".join(parts) if parts else "all")

    if not ys:
        raise EmptySampleError("input has a header but no data rows")
    codes, cells = _encode_cells(labels)
    return Sample(np.array(ys), np.array(ds), np.array(zs), codes, cells, exogenous)


@dataclass
class CellDiagnostics:
    cell: str
    n: int
    counts: dict[str, int]  # keys "d{d}z{z}"
    p_x: float
    p_xz: tuple[float, float]
    first_stage: float


@dataclass
class Diagnostics:
    cells: list[CellDiagnostics]
    n: int
    min_cell_size: int
    warnings: list[str] = field(default_factory=list)

    def first_stage(self) -> dict[str, float]:
        return {c.cell: c.first_stage for c in self.cells}

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "min_cell_size": self.min_cell_size,
            "cells": [
                {
                    "cell": c.cell,
                    "n": c.n,
                    "counts": c.counts,
                    "p_x": c.p_x,
                    "p_xz": list(c.p_xz),
                    "first_stage": c.first_stage,
                }
                for c in self.cells
            ],
            "warnings": list(self.warnings),
        }


def validate_assumptions(s: Sample, min_cell: int = 10) -> Diagnostics:
    """Check positivity of every (x, z) cell and a positive first stage per x.

    Violations raise; small but nonempty (d, x, z) cells only warn.
    """
    M = s.n_cells
    counts = np.zeros((2, M, 2), dtype=int)
    np.add.at(counts, (s.d, s.x, s.z), 1)
    out: list[CellDiagnostics] = []
    warnings: list[str] = []
    for k, cell in enumerate(s.cells):
        n_xz = counts[:, k, :].sum(axis=0)
        for z in (0, 1):
            if n_xz[z] == 0:
                raise AssumptionViolationError(f"cell {cell!r} has no observations with z={z}")
        fs = counts[1, k, 1] / n_xz[1] - counts[1, k, 0] / n_xz[0]
        if fs <= DEGENERATE_TOL:
            raise WeakInstrumentError(
                f"cell {cell!r} has nonpositive first stage {fs:.6g}: "
                f"P(D=1|Z=1)={counts[1, k, 1] / n_xz[1]:.6g}, P(D=1|Z=0)={counts[1, k, 0] / n_xz[0]:.6g}",
                cell=cell,
            )
        cd = {f"d{d}z{z}": int(counts[d, k, z]) for d in (0, 1) for z in (0, 1)}
        for key, c in cd.items():
            if 0 < c < min_cell:
                warnings.append(f"cell {cell!r} has only {c} observations with {key}")
        out.append(
            CellDiagnostics(
                cell=cell,
                n=int(n_xz.sum()),
                counts=cd,
                p_x=float(n_xz.sum() / s.n),
                p_xz=(float(n_xz[0] / s.n), float(n_xz[1] / s.n)),
                first_stage=float(fs),
            )
        )
    populated = counts[counts > 0]
    return Diagnostics(out, s.n, int(populated.min()), warnings)
