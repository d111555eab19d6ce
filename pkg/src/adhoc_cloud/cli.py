"""Command-line entry point: ``simulate``, ``sweep`` and ``gen-trace``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config, parse_scalar, resolve_key
from .domain import ContractError
from .experiment import (format_table, parse_seed_range, run_once, sweep, write_table)
from .trace import TraceError, generate_trace, load_trace, save_trace

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("adhoc_cloud")


class UsageError(Exception):
    """Bad arguments detected after argparse (mapped to exit code 1)."""


def _on_off(text: str) -> bool:
    value = parse_scalar(text)
    if not isinstance(value, bool):
        raise argparse.ArgumentTypeError(f"expected on or off, got {text!r}")
    return value


def _parse_grid(specs: list[str]) -> dict:
    grid = {}
    for spec in specs:
        key, sep, values = spec.partition("=")
        if not sep or not key:
            raise UsageError(f"grid entry must look like KEY=V1,V2 (got {spec!r})")
        items = [v for v in values.split(",") if v.strip()]
        if not items:
            raise UsageError(f"grid entry {key!r} has no values")
        grid[resolve_key(key.strip())] = [parse_scalar(v) for v in items]
    if not grid:
        raise UsageError("parameter grid is empty; pass at least one --grid KEY=V1,V2")
    return grid


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.replication is not None:
        overrides["placement.replication"] = args.replication
    cfg = cfg.with_overrides(overrides)
    trace_path = cfg.trace_path()
    if trace_path is not None:
        load_trace(trace_path)  # fail early, naming the path
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.data["seed"]

    result = run_once(cfg, seed, check_invariants=args.check)
    report = result.report
    (out / "events.tsv").write_text(result.log.dumps())
    (out / "metrics.json").write_text(report.to_json())
    (out / "metrics.txt").write_text(report.to_table())
    save_trace(result.trace, out / "trace.txt")
    # the snapshot replays this exact run: same seed, the trace as used
    resolved = cfg.with_overrides({"churn.trace": "trace.txt", "churn.busiest_window": None})
    (out / "config.yaml").write_text(resolved.dump())
    if cfg.data["outputs"]["figures"]:
        from .plotting import plot_completions, plot_reliability
        plot_reliability(report.per_host_reliability_series, out / "reliability.png")
        plot_completions(result.log, out / "completions.png")
    sys.stdout.write(report.to_table())
    log.info("wrote run outputs to %s", out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    try:
        seeds = parse_seed_range(args.seeds)
    except ValueError as exc:
        raise UsageError(f"bad --seeds {args.seeds!r}: {exc}") from None
    grid = _parse_grid(args.grid or [])
    for point in ({k: v[0] for k, v in grid.items()}, {k: v[-1] for k, v in grid.items()}):
        cfg.with_overrides(point)  # validate the grid before spending time on runs
    out = Path(args.out)

    def progress(label, seed, summary):
        log.info("%s seed=%d completion_rate=%s", label, seed, summary["completion_rate"])

    rows = sweep(cfg, seeds, grid, out, workers=args.workers, progress=progress)
    write_table(rows, out / "sweep.tsv")
    if cfg.data["outputs"]["figures"]:
        from .plotting import plot_sweep
        plot_sweep(rows, out / "sweep.png")
    sys.stdout.write(format_table(rows))
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    trace = generate_trace(args.hosts, args.horizon, args.mtbf, args.mttr, args.seed)
    out = Path(args.out)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_trace(trace, out)
    print(f"{out}: {len(trace.hosts)} hosts, {len(trace.events)} events")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adhoc-cloud",
                                     description="Ad hoc cloud churn simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one simulation and write its report")
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--seed", type=int)
    p.add_argument("--replication", type=_on_off, metavar="on|off")
    p.add_argument("--out", default="run-out", help="output directory (default: run-out)")
    p.add_argument("--check", action="store_true",
                   help="check server invariants after every event (slow)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a seed range over a parameter grid")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", required=True, metavar="A..B")
    p.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                   help="may be repeated; points are the cross product")
    p.add_argument("--out", default="sweep-out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-trace", help="generate a synthetic churn trace")
    p.add_argument("--hosts", type=int, required=True)
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--mtbf", type=float, required=True)
    p.add_argument("--mttr", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad usage; usage problems are validation errors here
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TraceError, ContractError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
