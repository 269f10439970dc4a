"""Bounds on the slope of treatment effects on untreated earnings in the NSW sample.

Needs the LaLonde subset of the National Supported Work data (297 treated,
425 control men) as CSV with columns ``re78``, ``treat``, ``age`` and a
baseline earnings column (``re74`` by default). Treatment is randomised, so
the sample is treated as exogenous. Covariate cells are baseline earnings
zero or positive crossed with age in (16, 20], (20, 26], (26, inf).

    python scripts/nsw_replication.py --csv lalonde.csv
"""

import argparse
import json

from otbounds.cli import RunConfig, run_analysis

TARGETS = {"covariates": (-1.73, -0.004), "no_covariates": (-1.78, 0.189), "interval": (-1.94, 0.20)}


def config(path, income="re74", replicates=500, seed=0, covariates=True):
    cfg = {
        "input": {"path": path, "schema": {"y": "re78", "d": "treat"}},
        "parameter": {"name": "ols_slope"},
        "solver": "auto",
    }
    if covariates:
        cfg["input"]["schema"]["x"] = [income, "age"]
        cfg["input"]["binning"] = {
            income: {"breaks": [0], "closed": "right"},
            "age": {"breaks": [20, 26], "closed": "right"},
        }
        cfg["bootstrap"] = {"replicates": replicates, "seed": seed, "solver": "auto"}
    return cfg


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--csv", required=True)
    ap.add_argument("--income", default="re74", help="baseline earnings column")
    ap.add_argument("--replicates", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--report", help="also write the full covariate report here")
    args = ap.parse_args()

    rep, _ = run_analysis(RunConfig.from_dict(config(args.csv, args.income, args.replicates, args.seed)))
    flat, _ = run_analysis(RunConfig.from_dict(config(args.csv, args.income, covariates=False)))
    got = {
        "covariates": tuple(rep["bounds"]["gamma"]),
        "no_covariates": tuple(flat["bounds"]["gamma"]),
        "interval": tuple(rep["inference"]["interval"]),
    }
    print(f"cells: {', '.join(rep['sample']['cells'])}")
    for key, (a, b) in got.items():
        ta, tb = TARGETS[key]
        print(f"{key:>14}: ({a:.3f}, {b:.3f})   target ({ta}, {tb})")
    if args.report:
        with open(args.report, "w") as fh:
            json.dump(rep, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
