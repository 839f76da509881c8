"""Command-line interface.

Subcommands: gen-workload, validate-trace, train, compare, sweep.
Exit codes: 0 success, 1 validation/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .agent import train
from .errors import ConfigError, TraceError
from .harness import (
    RunArtifacts,
    artifacts_from_compare,
    compare,
    emit_reports,
    load_config,
    load_workload,
    sweep_alpha,
)
from .workload import SynthParams, generate_synthetic, parse_trace, write_trace


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fmt(value) -> str:
    if value is None:
        return "NA"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def _print_table(headers, rows):
    widths = [max(len(h), *(len(_fmt(r[i])) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        print("  ".join(_fmt(v).ljust(w) for v, w in zip(row, widths)))


def cmd_gen_workload(args) -> int:
    params = SynthParams(
        task_count=args.tasks,
        arrival_rate=args.rate,
        duration_range=(args.duration_min, args.duration_max),
        cpu_range=(args.cpu_min, args.cpu_max),
        mem_range=(args.mem_min, args.mem_max),
        seed=args.seed,
    )
    workload = generate_synthetic(params)
    write_trace(workload, args.out)
    print(f"wrote {len(workload)} tasks to {args.out} (checksum {workload.checksum})")
    return 0


def cmd_validate_trace(args) -> int:
    workload = parse_trace(args.path)
    print(f"OK: {len(workload)} tasks, checksum {workload.checksum}")
    return 0


def cmd_train(args) -> int:
    config = load_config(args.config)
    workload = load_workload(config.workload)
    table, curve = train(workload, config.sim_config(), config.hyperparams)
    artifacts = RunArtifacts(
        config=config, workload_checksum=workload.checksum, curve=curve, q_table=table
    )
    paths = emit_reports(artifacts, args.out_dir)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def cmd_compare(args) -> int:
    config = load_config(args.config)
    result = compare(config)
    paths = emit_reports(artifacts_from_compare(result), args.out_dir)
    _print_table(
        ("policy", "mean_completion_s", "utilization_pct", "completed", "rank"),
        [
            (
                r.policy,
                r.mean_completion_time,
                r.resource_utilization,
                r.tasks_completed,
                result.ranking.index(r.policy) + 1,
            )
            for r in result.reports
        ],
    )
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def cmd_sweep(args) -> int:
    config = load_config(args.config)
    try:
        alphas = [float(a) for a in args.alphas.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse alpha list '{args.alphas}'") from None
    rows = sweep_alpha(config, alphas)
    workload = load_workload(config.workload)
    artifacts = RunArtifacts(config=config, workload_checksum=workload.checksum, sweep=rows)
    paths = emit_reports(artifacts, args.out_dir)
    _print_table(
        ("alpha", "mean_completion_s", "utilization_pct"),
        [(row.alpha, row.mean_completion_time, row.resource_utilization) for row in rows],
    )
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qsched", description="Cluster scheduling experiments with a tabular Q-learning agent")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-workload", help="generate a synthetic workload trace CSV")
    gen.add_argument("--out", required=True, help="output trace path")
    gen.add_argument("--tasks", type=int, required=True, help="number of tasks")
    gen.add_argument("--rate", type=float, default=1.0, help="mean arrivals per tick")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--duration-min", type=int, default=5)
    gen.add_argument("--duration-max", type=int, default=30)
    gen.add_argument("--cpu-min", type=float, default=0.5)
    gen.add_argument("--cpu-max", type=float, default=3.5)
    gen.add_argument("--mem-min", type=float, default=0.5)
    gen.add_argument("--mem-max", type=float, default=6.0)
    gen.set_defaults(func=cmd_gen_workload)

    val = sub.add_parser("validate-trace", help="parse and validate a trace CSV")
    val.add_argument("path")
    val.set_defaults(func=cmd_validate_trace)

    tr = sub.add_parser("train", help="train the Q agent and emit the table and reward curve")
    tr.add_argument("--config", required=True, help="experiment config JSON")
    tr.add_argument("--out-dir", required=True)
    tr.set_defaults(func=cmd_train)

    cmp_ = sub.add_parser("compare", help="run the policy comparison")
    cmp_.add_argument("--config", required=True, help="experiment config JSON")
    cmp_.add_argument("--out-dir", required=True)
    cmp_.set_defaults(func=cmd_compare)

    sw = sub.add_parser("sweep", help="learning-rate sweep")
    sw.add_argument("--config", required=True, help="experiment config JSON")
    sw.add_argument("--alphas", required=True, help="comma-separated learning rates")
    sw.add_argument("--out-dir", required=True)
    sw.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigError, TraceError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - runtime failures map to exit code 2
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
