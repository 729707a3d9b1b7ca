"""Desk-scale simulation study runner.

Replicates the sky-survey comparison (ballet point estimate, its credible-ball
bounds, the plugin estimate, and default-parameter DBSCAN) on fresh synthetic
surveys and writes summary.csv plus study.json into --out. Defaults are sized
to finish on a laptop in a few minutes; pass --full for the survey-scale
configuration (much slower).

Usage:
    python3 scripts/run_desk_study.py --out results/desk
    python3 scripts/run_desk_study.py --reps 20 --n 8000 --components 16 --jobs 4
"""

import argparse
import json
import sys
import time
from pathlib import Path

from ballet.bench import (
    BalletStudyConfig,
    DbscanStudyConfig,
    SkySurveySpec,
    run_simulation_study,
)


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--reps", type=int, default=10, help="number of replicates")
    ap.add_argument("--n", type=int, default=4000, help="points per survey")
    ap.add_argument("--components", type=int, default=10, help="Gaussian components")
    ap.add_argument("--noise-mass", type=float, default=0.9, help="background mass")
    ap.add_argument("--nu", type=float, default=0.9, help="target noise fraction")
    ap.add_argument("--ensemble-size", type=int, default=100, help="posterior draws per replicate")
    ap.add_argument("--seed", type=int, default=0, help="master seed")
    ap.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    ap.add_argument("--out", default="results/desk_study", help="output directory")
    ap.add_argument("--full", action="store_true", help="survey-scale run: n=40000, 42 components")
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    if args.full:
        args.n, args.components = 40000, 42
    spec = SkySurveySpec(
        n=args.n, n_components=args.components, noise_mass=args.noise_mass, seed=args.seed
    )
    ballet = BalletStudyConfig(nu=args.nu, S=args.ensemble_size)
    dbscan = DbscanStudyConfig(nu=args.nu)
    t0 = time.perf_counter()
    result = run_simulation_study(args.reps, spec, ballet, dbscan, n_jobs=args.jobs)
    dt = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(result.summary_csv())
    payload = result.to_json_dict()
    payload["spec"] = {
        "n": spec.n,
        "n_components": spec.n_components,
        "noise_mass": spec.noise_mass,
        "seed": spec.seed,
        "nu": args.nu,
        "S": args.ensemble_size,
    }
    (out / "study.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")

    print(f"{args.reps} replicates in {dt:.1f}s -> {out}", file=sys.stderr)
    print(result.summary_csv(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
