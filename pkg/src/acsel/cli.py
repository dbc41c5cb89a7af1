"""Command-line entry points: headless experiments, one-off selections,
the steering service, and event-log replay."""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import bench, engine
from .data import CsvSchema, DataError, ingest_csv, quantile_thresholds
from .learners import SpecError
from .policies import PolicyError, make_policy, parse_policy
from .results import SelectionResult


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="acsel", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo benchmark grid")
    sim.add_argument("--grid", help="JSON grid config file (overrides single-cell flags)")
    sim.add_argument("--setting", type=int, default=1)
    sim.add_argument("--n", type=int, default=200, help="per-arm sample parameter; labeled pool is 2n")
    sim.add_argument("--m", type=int, default=100)
    sim.add_argument("--sigma", type=float, default=0.1)
    sim.add_argument("--alpha", type=float, default=0.1)
    sim.add_argument("--reps", type=int, default=200)
    sim.add_argument("--policy", default="refit:forest[trees=25,depth=6,feats=8]",
                     help="arm spec: ACS policy grammar, or cs:<learner> / cs_screen:<learner>")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True)
    sim.add_argument("--reveal-labels", action="store_true",
                     help="reveal test labels after screening (feeds aug policies)")
    sim.add_argument("--jobs", type=int, default=1)
    sim.add_argument("--format", choices=("csv", "json"), default=None)
    sim.add_argument("--trace-dir", default=None)

    sel = sub.add_parser("select", help="screen a CSV dataset once")
    sel.add_argument("--data", required=True)
    sel.add_argument("--alpha", type=float, required=True)
    sel.add_argument("--policy", required=True)
    sel.add_argument("--seed", type=int, default=0)
    group = sel.add_mutually_exclusive_group()
    group.add_argument("--k", type=int, default=None, help="training reserve size (ACS)")
    group.add_argument("--train-frac", type=float, default=0.5, help="training fraction (CS)")
    sel.add_argument("--quantile", type=float, default=None)
    sel.add_argument("--group", default=None)
    sel.add_argument("--outcome-col", default="y")
    sel.add_argument("--fingerprint-col", default=None)
    sel.add_argument("--out", required=True)

    srv = sub.add_parser("serve", help="start the steering session service")
    srv.add_argument("--port", type=int, default=8008)
    srv.add_argument("--bind", default=None, help="bind address (default: env ACSEL_BIND or 127.0.0.1)")
    srv.add_argument("--config", default=None, help="JSON file with service defaults")

    rep = sub.add_parser("replay", help="replay a session event log headlessly")
    rep.add_argument("--events", required=True)
    rep.add_argument("--out", required=True)
    return parser


def _grid_from_flags(args) -> bench.ExperimentGrid:
    if args.grid:
        with open(args.grid) as fh:
            return bench.ExperimentGrid.from_dict(json.load(fh))
    method = args.policy if args.policy.split(":")[0] in ("cs", "cs_screen") else f"acs:{args.policy}"
    return bench.ExperimentGrid(
        setting=args.setting, m=args.m, sigmas=(args.sigma,), ns=(args.n,),
        alpha=args.alpha, reps=args.reps,
        arms=(bench.Arm(args.policy, method),),
        reveal_labels=args.reveal_labels,
    )


def cmd_simulate(args) -> int:
    grid = _grid_from_flags(args)
    for arm in grid.arms:
        arm.parsed()  # surface grammar errors before any work
    rows = bench.run_grid(grid, seed=args.seed, n_jobs=args.jobs, trace_dir=args.trace_dir)
    fmt = args.format or ("json" if str(args.out).endswith(".json") else "csv")
    bench.emit(rows, args.out, fmt)
    total_runtime = sum(r.runtime for r in rows)
    print(f"wrote {len(rows)} rows to {args.out} ({total_runtime:.1f}s of replication work)",
          file=sys.stderr)
    return 0


def cmd_select(args) -> int:
    schema = CsvSchema(
        outcome=args.outcome_col,
        fingerprint=args.fingerprint_col,
        meta_columns=(args.group,) if args.group else (),
    )
    dataset = ingest_csv(args.data, schema)
    if args.quantile is not None:
        if not args.group:
            raise DataError("--quantile needs --group")
        dataset = quantile_thresholds(dataset, args.quantile, args.group)

    head = args.policy.split(":")[0]
    if args.alpha == 0.0:
        # nothing can ever be selected at level zero; emit the empty result
        result = SelectionResult(frozenset(), dataset.n + dataset.m, 0.0, args.seed, (), ())
    elif head in ("cs", "cs_screen"):
        from . import conformal
        from .learners import parse_learner

        spec = parse_learner(args.policy.split(":", 1)[1]).with_seed(args.seed)
        fn = conformal.cs_select if head == "cs" else conformal.cs_screen
        result = fn(dataset, args.train_frac, spec, args.alpha, args.seed)
    else:
        config = parse_policy(args.policy).with_seed(args.seed)
        k = args.k if args.k is not None else dataset.n // 2
        result = engine.run(dataset, k, args.alpha, args.seed, make_policy(config))
    result.write(args.out)
    print(f"selected {len(result.selected)} of {dataset.m} test rows; result in {args.out}",
          file=sys.stderr)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    defaults = {}
    if args.config:
        with open(args.config) as fh:
            defaults = json.load(fh)
    host = args.bind or os.environ.get("ACSEL_BIND") or defaults.get("bind", "127.0.0.1")
    port = args.port or defaults.get("port", 8008)
    uvicorn.run(create_app(), host=host, port=port, log_level="warning")
    return 0


def cmd_replay(args) -> int:
    from .service import replay_events

    with open(args.events) as fh:
        payload = json.load(fh)
    events = payload["events"] if isinstance(payload, dict) else payload
    result = replay_events(events)
    result.write(args.out)
    print(f"replayed {len(events)} events; result in {args.out}", file=sys.stderr)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "select": cmd_select,
        "serve": cmd_serve,
        "replay": cmd_replay,
    }
    try:
        return handlers[args.command](args)
    except (DataError, SpecError, PolicyError, bench.BenchError, engine.EngineError) as exc:
        parser.exit(2, f"error: {exc}\n")
    except FileNotFoundError as exc:
        parser.exit(2, f"error: {exc}\n")


if __name__ == "__main__":
    sys.exit(main())
