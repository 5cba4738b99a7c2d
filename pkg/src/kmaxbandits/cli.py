"""Command-line entry point: simulate, sweep and verify."""
from __future__ import annotations

import argparse
import copy
import json
import sys
import time
from pathlib import Path

from . import BACKEND
from .errors import KMaxError
from .harness import CONFIG_SCHEMA, OUTPUT_DIR_ENV, ExperimentConfig, emit, load_config, run_experiment, summarize
from .verify import SUITES


def _apply_overrides(config, args):
    if getattr(args, "dump_state", False):
        config.dump_state = True
    if getattr(args, "diagnostics", False):
        config.diagnostics = True
    if args.workers is not None:
        config.workers = args.workers
    return config


def _report(summary, out):
    exp = summary["exponent_mean"]
    exp_text = "undefined" if exp is None else f"{exp:.4f}"
    print(f"{summary['policy']} on {summary['problem']}: final regret "
          f"{summary['final_regret_mean']:.4f} +/- {summary['final_regret_std']:.4f} "
          f"over {len(summary['seeds'])} seeds, growth exponent {exp_text} -> {out}")


def cmd_simulate(args):
    config = _apply_overrides(load_config(args.config), args)
    out = Path(args.out) if args.out else config.output_dir()
    traces = run_experiment(config)
    emit(traces, config, out)
    _report(summarize(traces, config), out)
    return 0


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _set_path(raw, dotted, value):
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def cmd_sweep(args):
    base = load_config(args.config)
    key, _, values = args.vary.partition("=")
    if not key or not values:
        raise KMaxError(f"--vary expects key=v1,v2,..., got {args.vary!r}")
    out_root = Path(args.out) if args.out else base.output_dir()
    rows = []
    for text in values.split(","):
        raw = copy.deepcopy(base.to_dict())
        _set_path(raw, key, _parse_value(text))
        config = _apply_overrides(ExperimentConfig.from_dict(raw), args)
        out = out_root / f"{key}={text}"
        traces = run_experiment(config)
        emit(traces, config, out)
        summary = summarize(traces, config)
        _report(summary, out)
        rows.append({"value": _parse_value(text), "final_regret_mean": summary["final_regret_mean"],
                     "final_regret_std": summary["final_regret_std"],
                     "exponent_mean": summary["exponent_mean"], "dir": str(out)})
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / "sweep_summary.json").write_text(json.dumps({"vary": key, "runs": rows}, indent=2) + "\n")
    return 0


def cmd_verify(args):
    ok = True
    for name in args.suites:
        start = time.perf_counter()
        checks = SUITES[name](seed=args.seed, scale=args.scale)
        print(f"== {name} ({time.perf_counter() - start:.1f}s)")
        for check in checks:
            print(check.line())
            ok &= check.passed
    return 0 if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kmaxbandits",
        description="Simulate and verify K-Max / K-Min bandit algorithms.",
        epilog=f"Outputs default to ${OUTPUT_DIR_ENV} when set, else ./runs. Kernel backend: {BACKEND}.",
    )
    parser.add_argument("--print-schema", action="store_true", help="print the config JSON schema and exit")
    sub = parser.add_subparsers(dest="command")

    sim = sub.add_parser("simulate", help="run one experiment config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--dump-state", action="store_true", help="write final learner state per seed")
    sim.add_argument("--diagnostics", action="store_true", help="add diagnostic columns to the CSV")
    sim.add_argument("--workers", type=int)
    sim.add_argument("--out", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    sweep = sub.add_parser("sweep", help="rerun a config over several values of one key")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--vary", required=True, help="dotted.key=v1,v2,...")
    sweep.add_argument("--diagnostics", action="store_true")
    sweep.add_argument("--workers", type=int)
    sweep.add_argument("--out")
    sweep.set_defaults(func=cmd_sweep)

    ver = sub.add_parser("verify", help="run property checks; exit 0 iff all pass")
    ver.add_argument("suites", nargs="+", choices=sorted(SUITES))
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--scale", type=float, default=1.0, help="shrink (<1) or grow the instance counts")
    ver.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_schema:
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (KMaxError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
