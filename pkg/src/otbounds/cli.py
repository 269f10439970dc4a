"""Command line front end.

Usage::

    otbounds --config run.json [--seed N] [--threads N] [--mode bounds|cdf-curve|quantile]
             [--emit-draws PATH] [--emit-curve PATH]

Every flag can also be set through an environment variable named
``OTBOUNDS_<FLAG>`` (for example ``OTBOUNDS_SEED``); explicit flags win.
The report is a JSON document written to ``output.report`` in the config,
or to standard output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import __version__
from .bounds import (
    ParameterSpec,
    cdf_bound_curve,
    estimate,
    parameter,
    quantile_identified_set,
)
from .costs import SmoothCost, custom, smooth_cost
from .data import BinRule, Schema, load_sample, validate_assumptions
from .errors import ConfigurationError, OTBoundsError
from .inference import BootstrapConfig, bootstrap_draws, draws_to_csv, quantile_confidence_set

SCHEMA_VERSION = 1
ENV_PREFIX = "OTBOUNDS_"
MODES = ("bounds", "cdf-curve", "quantile")


@dataclass
class RunConfig:
    input: str
    schema: Schema
    binning: dict[str, BinRule] = field(default_factory=dict)
    parameter: str = "identity"
    parameter_options: dict[str, Any] = field(default_factory=dict)
    subset: list[str] | None = None
    tau: float | None = None
    cost_overrides: dict[str, Any] = field(default_factory=dict)
    solver: str = "lp"
    bootstrap: BootstrapConfig | None = None
    mode: str = "bounds"
    grid: list[float] | None = None
    pooled: bool = True
    min_cell: int = 10
    report: str | None = None
    draws: str | None = None
    curve: str | None = None
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, obj: dict, base_dir: str = ".") -> "RunConfig":
        try:
            inp = obj["input"]
            sch = inp["schema"]
            schema = Schema(sch["y"], sch["d"], sch.get("z"), tuple(sch.get("x", ())), inp.get("delimiter", ","))
            binning = {k: BinRule.from_config(v) for k, v in (inp.get("binning") or {}).items()}
            path = inp["path"]
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"config input block is incomplete: {exc}") from None
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        par = dict(obj.get("parameter") or {"name": "identity"})
        name = par.pop("name", "identity")
        subset = par.pop("subset", None)
        tau = par.pop("tau", None)
        boot = obj.get("bootstrap")
        bcfg = None
        if boot is not None:
            boot = dict(boot)
            if boot.get("kappa") is not None:
                k = boot["kappa"]
                boot["kappa"] = (float(k["c"]), float(k["a"])) if isinstance(k, dict) else tuple(k)
            try:
                bcfg = BootstrapConfig(**boot)
            except TypeError as exc:
                raise ConfigurationError(f"bad bootstrap block: {exc}") from None
        out = {k: (v if v is None or os.path.isabs(v) else os.path.join(base_dir, v))
               for k, v in (obj.get("output") or {}).items()}
        grid = obj.get("grid")
        if isinstance(grid, dict):
            grid = list(np.linspace(float(grid["lo"]), float(grid["hi"]), int(grid["num"])))
        return cls(
            input=path,
            schema=schema,
            binning=binning,
            parameter=name,
            parameter_options=par,
            subset=subset,
            tau=tau,
            cost_overrides=dict(obj.get("cost_overrides") or {}),
            solver=obj.get("solver", "lp"),
            bootstrap=bcfg,
            mode=obj.get("mode", "bounds"),
            grid=grid,
            pooled=bool(obj.get("pooled", True)),
            min_cell=int(obj.get("min_cell", 10)),
            report=out.get("report"),
            draws=out.get("draws"),
            curve=out.get("curve"),
            raw=obj,
        )


def build_parameter(cfg: RunConfig) -> ParameterSpec:
    opts = dict(cfg.parameter_options)
    if cfg.parameter == "identity" and isinstance(opts.get("cost"), str):
        opts["cost"] = smooth_cost(opts["cost"])
    p = parameter(cfg.parameter, **opts)
    ov = cfg.cost_overrides
    if isinstance(p.cost, SmoothCost) and ("lipschitz" in ov or "sup_norm" in ov):
        if "lipschitz" not in ov or "sup_norm" not in ov:
            raise ConfigurationError("cost overrides need both lipschitz and sup_norm")
        c = p.cost
        p = p.with_cost(custom(c.name, c.func, ov["lipschitz"], ov["sup_norm"], c.cross_sign))
    return p


def _rectangle(cfg: RunConfig, y: np.ndarray):
    r = cfg.cost_overrides.get("rectangle")
    if r is None:
        return float(y.min()), float(y.max())
    lo, hi = float(r[0]), float(r[1])
    if lo > y.min() or hi < y.max():
        raise ConfigurationError(f"rectangle {r} does not cover the observed outcomes")
    return lo, hi


def _clean(obj):
    """Make a structure JSON-safe with deterministic float rendering."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def run_analysis(cfg: RunConfig) -> tuple[dict, dict]:
    """Run the configured analysis; returns ``(report, side_outputs)``."""
    if cfg.mode not in MODES:
        raise ConfigurationError(f"mode must be one of {MODES}, got {cfg.mode!r}")
    s = load_sample(cfg.input, cfg.schema, cfg.binning)
    diag = validate_assumptions(s, cfg.min_cell)
    report: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "version": __version__,
        "mode": cfg.mode,
        "config": cfg.raw,
        "sample": {"n": s.n, "cells": list(s.cells), "exogenous": s.exogenous},
        "diagnostics": diag.to_dict(),
    }
    warnings = list(diag.warnings)
    side: dict[str, str] = {}
    rect = _rectangle(cfg, s.y)

    if cfg.mode == "bounds":
        p = build_parameter(cfg)
        est = estimate(s, p, subset=cfg.subset, solver=cfg.solver, rectangle=rect, pooled=cfg.pooled)
        report["bounds"] = est.to_dict()
        warnings += est.warnings
        if cfg.bootstrap is not None:
            inf = bootstrap_draws(s, p, est, cfg.bootstrap, subset=cfg.subset, rectangle=rect)
            report["inference"] = inf.to_dict()
            if cfg.bootstrap.method == "derivative" and isinstance(p.cost, SmoothCost):
                warnings.append("derivative bootstrap uses a finite subsample of near-optimal dual vertices")
            side["draws"] = draws_to_csv(inf.draws)
    else:
        ties = cfg.parameter_options.get("ties", "open")
        curve = cdf_bound_curve(s, cfg.grid, ties, subset=cfg.subset)
        report["curve"] = {"points": int(curve.grid.size), "ties": ties}
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["delta", "theta_lower", "theta_upper"])
        for row in zip(curve.grid, curve.lower, curve.upper):
            wr.writerow([repr(float(v)) for v in row])
        side["curve"] = buf.getvalue()
        if cfg.mode == "quantile":
            if cfg.tau is None:
                raise ConfigurationError("quantile mode needs parameter.tau")
            q = {"tau": cfg.tau, "identified_set": quantile_identified_set(curve, cfg.tau)}
            if cfg.bootstrap is not None:
                qc = quantile_confidence_set(s, cfg.tau, curve.grid, cfg.bootstrap, ties, cfg.subset)
                q["confidence_set"] = qc.components
                q["alpha"] = cfg.bootstrap.alpha
                q["replicates"] = cfg.bootstrap.replicates
            report["quantile"] = q
        if np.any(curve.lower < -1e-12) or np.any(curve.upper > 1 + 1e-12):
            warnings.append("CDF bounds fall outside [0, 1] because of negative complier weights; reported unclipped")
    report["warnings"] = warnings
    return _clean(report), side


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def emit_report(report: dict, side: dict, report_path: str | None, draws: str | None, curve: str | None,
                stream=None) -> None:
    text = dumps_report(report)
    targets = [(report_path, text)]
    if draws and "draws" in side:
        targets.append((draws, side["draws"]))
    if curve and "curve" in side:
        targets.append((curve, side["curve"]))
    for path, body in targets:
        if path is None:
            (stream or sys.stdout).write(body)
            continue
        try:
            with open(path, "w", newline="") as fh:
                fh.write(body)
        except OSError as exc:
            raise OTBoundsError(f"cannot write {path}: {exc}") from None


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="otbounds", description="Sharp bounds via optimal transport duality.")
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--threads", type=int)
    ap.add_argument("--mode", choices=MODES)
    ap.add_argument("--emit-draws", dest="emit_draws")
    ap.add_argument("--emit-curve", dest="emit_curve")
    return ap


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name.upper())


def main(argv=None, stdout=None) -> int:
    stdout = stdout or sys.stdout
    args = _parser().parse_args(argv)
    try:
        for key in ("config", "seed", "threads", "mode", "emit_draws", "emit_curve"):
            if getattr(args, key) is None and _env(key) is not None:
                val = _env(key)
                setattr(args, key, int(val) if key in ("seed", "threads") else val)
        if args.config is None:
            raise ConfigurationError("--config is required")
        try:
            with open(args.config) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
        if args.mode is not None:
            raw["mode"] = args.mode
        if raw.get("bootstrap") is not None:
            if args.seed is not None:
                raw["bootstrap"]["seed"] = args.seed
            if args.threads is not None:
                raw["bootstrap"]["threads"] = args.threads
        cfg = RunConfig.from_dict(raw, os.path.dirname(os.path.abspath(args.config)))
        if cfg.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {cfg.mode!r}")
        report, side = run_analysis(cfg)
        emit_report(report, side, cfg.report, args.emit_draws or cfg.draws, args.emit_curve or cfg.curve, stdout)
    except OTBoundsError as exc:
        stdout.write(dumps_report({"schema_version": SCHEMA_VERSION, "error": exc.to_dict()}))
        return 2 if isinstance(exc, ConfigurationError) else 1
    except ValueError as exc:
        stdout.write(dumps_report({"schema_version": SCHEMA_VERSION,
                                   "error": {"type": type(exc).__name__, "module": "cli", "message": str(exc)}}))
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
