#!/usr/bin/env python3
"""Diversity/power trade-off: pairwise-similarity of correct selections as the
mixture weight lambda varies, against the one-shot baseline.

Writes a long-format CSV (one row per sigma x arm) with power, FDR and the
average pairwise similarity among correctly selected units.  Example:

    python scripts/diversity_tradeoff.py --reps 100 --lambdas 0 0.3 0.5
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from acsel.bench import Arm, ExperimentGrid, emit, run_grid  # noqa: E402

FOREST = "forest[trees=15,depth=11,feats=12]"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=500)
    parser.add_argument("--m", type=int, default=200)
    parser.add_argument("--alpha", type=float, default=0.1)
    parser.add_argument("--reps", type=int, default=100)
    parser.add_argument("--sigmas", type=float, nargs="+", default=[0.3, 0.6, 0.9])
    parser.add_argument("--lambdas", type=float, nargs="+", default=[0.3])
    parser.add_argument("--sigma0", type=float, default=5.0, help="rbf width for the similarity metric")
    parser.add_argument("--seed", type=int, default=20240802)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="diversity_tradeoff.csv")
    args = parser.parse_args()

    arms = [Arm("cs", f"cs:{FOREST}"), Arm("acs", f"acs:refit:{FOREST}[L=10]")]
    for lam in args.lambdas:
        arms.append(Arm(
            f"div{lam}",
            f"acs:div:{FOREST}[lambda={lam},kernel=rbf({args.sigma0}),L=10]",
        ))
    grid = ExperimentGrid(
        setting=1, m=args.m, sigmas=tuple(args.sigmas), ns=(args.n,),
        alpha=args.alpha, reps=args.reps, arms=tuple(arms),
    )
    rows = run_grid(grid, seed=args.seed, n_jobs=args.jobs)
    emit(rows, args.out, "csv")
    for r in rows:
        es = "   -  " if r.es_hat is None else f"{r.es_hat:.4f}"
        print(f"sigma={r.sigma:4} {r.arm:8s} power={r.power_hat:.3f} fdr={r.fdr_hat:.3f} "
              f"similarity={es} (n2={r.n2_count})")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
