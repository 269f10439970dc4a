"""Write a synthetic instrument-variable sample and a matching run configuration.

    python scripts/make_synthetic.py --out-dir demo --n 1000 --complier-share 0.7
    otbounds --config demo/run.json
"""

import argparse
import json
import os

import numpy as np

from otbounds.synthetic import two_cell_design


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out-dir", default="synthetic_run")
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--complier-share", type=float, default=1.0,
                    help="below 1 adds always- and never-takers and an instrument column")
    ap.add_argument("--parameter", default="variance_te")
    ap.add_argument("--replicates", type=int, default=200)
    args = ap.parse_args()

    exogenous = args.complier_share >= 1.0
    design = two_cell_design(exogenous=exogenous, complier_share=args.complier_share, decimals=3)
    s = design.draw(args.n, np.random.default_rng(args.seed))
    os.makedirs(args.out_dir, exist_ok=True)

    cols = ["y", "d"] + ([] if exogenous else ["z"]) + ["group"]
    with open(os.path.join(args.out_dir, "data.csv"), "w") as fh:
        fh.write(",".join(cols) + "\n")
        for ob in s.observations():
            row = [repr(ob.y), str(ob.d)] + ([] if exogenous else [str(ob.z)]) + [ob.x]
            fh.write(",".join(row) + "\n")

    schema = {"y": "y", "d": "d", "x": ["group"]}
    if not exogenous:
        schema["z"] = "z"
    cfg = {
        "input": {"path": "data.csv", "schema": schema},
        "parameter": {"name": args.parameter},
        "bootstrap": {"replicates": args.replicates, "seed": args.seed},
        "output": {"report": "report.json"},
    }
    with open(os.path.join(args.out_dir, "run.json"), "w") as fh:
        json.dump(cfg, fh, indent=2)
    print(f"wrote {s.n} rows and run.json to {args.out_dir}")


if __name__ == "__main__":
    main()
