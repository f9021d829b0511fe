"""Command-line entry point: ``ctfsmc run|summarize|compare``."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench
from .errors import ConfigError, CtfError


def _cmd_run(args) -> int:
    cfg = bench.ExperimentConfig.load(args.config)
    cfg.output = args.out
    traces = bench.run_experiment(cfg)
    for tr in traces:
        print(f"seed={tr.seed} condition={tr.condition} barriers={len(tr.rows)} logZ={tr.final_log_z:.6f}")
    return 0


def _cmd_summarize(args) -> int:
    traces = [tr for path in args.inputs for tr in bench.read_traces(path)]
    summaries = bench.summarize(traces, args.grid, axis=args.axis)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            bench.write_summary(fh, summaries)
    else:
        bench.write_summary(sys.stdout, summaries)
    return 0


def _single_condition(path):
    traces = bench.read_traces(path)
    conds = {tr.condition for tr in traces}
    if len(conds) != 1:
        raise ConfigError(f"{path}: expected one condition, found {sorted(conds) or 'none'}")
    return traces


def _cmd_compare(args) -> int:
    ta, tb = _single_condition(args.a), _single_condition(args.b)
    grid = bench.make_grid(ta + tb, args.grid, args.axis)
    (sa,) = bench.summarize(ta, grid, axis=args.axis).values()
    (sb,) = bench.summarize(tb, grid, axis=args.axis).values()
    rep = bench.compare_conditions(sa, sb)
    print(json.dumps({"a": sa.condition, "b": sb.condition, **rep.to_dict()}, indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctfsmc", description="Coarse-to-fine SMC experiment harness")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config and write a trace CSV")
    r.add_argument("--config", required=True, help="JSON experiment config")
    r.add_argument("--out", required=True, help="output CSV path")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("summarize", help="mean/stderr logZ curves on a common grid")
    s.add_argument("--in", dest="inputs", nargs="+", required=True, help="trace CSV files")
    s.add_argument("--grid", type=int, required=True, help="number of grid points")
    s.add_argument("--axis", choices=("time", "barrier"), default="time")
    s.add_argument("--out", help="write the summary CSV here instead of stdout")
    s.set_defaults(func=_cmd_summarize)

    c = sub.add_parser("compare", help="final-logZ gap and win rate of b over a")
    c.add_argument("--a", required=True, help="trace CSV of condition a")
    c.add_argument("--b", required=True, help="trace CSV of condition b")
    c.add_argument("--grid", type=int, default=100)
    c.add_argument("--axis", choices=("time", "barrier"), default="time")
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CtfError, OSError, ValueError) as e:
        print(f"ctfsmc {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
