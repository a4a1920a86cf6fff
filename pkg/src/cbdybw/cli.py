"""Command-line entry point: simulate, compare, check, gen-config.

Exit codes: 0 success, 1 validation error, 2 runtime or assertion failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .checks import format_table, run_checks
from .config import ConfigError, ExperimentConfig, StrategySpec, default_config_document, parse_config
from .consensus import MixingMatrix
from .engine import RunResult, run
from .scheduler import ParticipationPlan
from .straggler import DelayDraw

log = logging.getLogger("cbdybw")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

RECORD_COLUMNS = ["k", "loss", "test_error", "disagreement", "duration", "theta", "mean_backup", "max_backup"]


def _fmt(x: float | None) -> str:
    # repr is locale-independent and round-trips exactly
    return "" if x is None else repr(float(x))


def write_records_csv(result: RunResult, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_COLUMNS)
        for r in result.records:
            w.writerow(
                [
                    r.k,
                    _fmt(r.global_loss),
                    _fmt(r.test_error),
                    _fmt(r.consensus_disagreement),
                    _fmt(r.duration),
                    _fmt(r.theta),
                    _fmt(r.mean_backup),
                    r.max_backup,
                ]
            )


def summarize(result: RunResult) -> dict[str, Any]:
    durations = [r.duration for r in result.records]
    last = result.records[-1] if result.records else None
    return {
        "seed": result.seed,
        "strategy": result.strategy,
        "iterations": len(result.records),
        "final_loss": result.final_loss,
        "final_test_error": last.test_error if last else None,
        "final_disagreement": last.consensus_disagreement if last else None,
        "mean_duration": float(np.mean(durations)) if durations else None,
        "total_sim_time": result.total_sim_time,
        "k_eps": result.k_eps,
        "time_to_eps": result.time_to_eps,
        "consensus_phase_iters": result.consensus_phase_iters,
        "consensus_reached": result.consensus_reached,
        "coverage_path": [list(e) for e in result.path.links] if result.path else None,
    }


class _Logger:
    """Observer that streams delays, plans and matrices to per-run files."""

    def __init__(self, out: Path, tag: str, delays: bool, plans: bool, matrices: bool):
        self.delays = open(out / f"delays_{tag}.csv", "w", newline="") if delays else None
        self.plans = open(out / f"plans_{tag}.jsonl", "w") if plans else None
        self.matrix_dir = out / f"matrices_{tag}" if matrices else None
        if self.delays:
            self.delays.write("k,j,t\n")
        if self.matrix_dir:
            self.matrix_dir.mkdir(exist_ok=True)

    def __call__(self, d: DelayDraw, plan: ParticipationPlan, P: MixingMatrix) -> None:
        if self.delays:
            for j, t in enumerate(d.times):
                self.delays.write(f"{d.iteration},{j},{_fmt(t)}\n")
        if self.plans:
            self.plans.write(plan.to_json() + "\n")
        if self.matrix_dir:
            with open(self.matrix_dir / f"P_{P.iteration:06d}.csv", "w") as fh:
                for row in P.entries:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")

    def close(self) -> None:
        for fh in (self.delays, self.plans):
            if fh:
                fh.close()


def _run_logged(cfg: ExperimentConfig, seed: int, out: Path, tag: str, flags: dict) -> RunResult:
    observer = _Logger(out, tag, flags.get("log_delays", False), flags.get("log_plans", False), flags.get("dump_matrices", False))
    try:
        return run(cfg, seed, observer=observer)
    finally:
        observer.close()


def _simulate_one(cfg: ExperimentConfig, seed: int, out: Path, flags: dict) -> dict:
    result = _run_logged(cfg, seed, out, str(seed), flags)
    write_records_csv(result, out / f"records_{seed}.csv")
    summary = summarize(result)
    (out / f"summary_{seed}.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def _compare_one(cfg: ExperimentConfig, seed: int, out: Path, flags: dict) -> dict:
    per: dict[str, dict] = {}
    for kind in ("full", "static_p", "dtur"):
        c = dataclasses.replace(cfg, strategy=StrategySpec(kind, cfg.strategy.p if kind == "static_p" else None))
        result = _run_logged(c, seed, out, f"{kind}_{seed}", flags)
        write_records_csv(result, out / f"records_{kind}_{seed}.csv")
        per[kind] = summarize(result)
    full = per["full"]["mean_duration"]
    for s in per.values():
        s["duration_ratio_vs_full"] = s["mean_duration"] / full if full else None
    return per


def _map(fn: Callable, cfg: ExperimentConfig, out: Path, flags: dict, jobs: int) -> list:
    seeds = cfg.seeds()
    if jobs <= 1 or len(seeds) == 1:
        return [fn(cfg, s, out, flags) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, cfg, s, out, flags) for s in seeds]
        # results merged in seed order regardless of completion order
        return [f.result() for f in futures]


def _mean_or_none(values: list) -> float | None:
    if not values or any(v is None for v in values):
        return None
    return float(np.mean(values))


def aggregate_compare(per_seed: list[dict]) -> dict:
    out: dict[str, dict] = {}
    for kind in ("full", "static_p", "dtur"):
        rows = [p[kind] for p in per_seed]
        out[kind] = {
            "mean_duration": _mean_or_none([r["mean_duration"] for r in rows]),
            "duration_ratio_vs_full": _mean_or_none([r["duration_ratio_vs_full"] for r in rows]),
            "iters_to_target": _mean_or_none([r["k_eps"] for r in rows]),
            "time_to_target": _mean_or_none([r["time_to_eps"] for r in rows]),
            "final_disagreement": _mean_or_none([r["final_disagreement"] for r in rows]),
            "final_loss": _mean_or_none([r["final_loss"] for r in rows]),
        }
    return out


def _load(args: argparse.Namespace) -> tuple[ExperimentConfig, Path]:
    cfg = parse_config(args.config, args.override)
    out = Path(args.out or cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _flags(args: argparse.Namespace) -> dict:
    return {
        "log_delays": args.log_delays,
        "log_plans": getattr(args, "log_plans", False),
        "dump_matrices": getattr(args, "dump_matrices", False),
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg, out = _load(args)
    summaries = _map(_simulate_one, cfg, out, _flags(args), args.jobs)
    (out / "summary_all.json").write_text(json.dumps(summaries, indent=2) + "\n")
    for s in summaries:
        print(f"seed {s['seed']}: loss {s['final_loss']}  mean duration {s['mean_duration']}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    cfg, out = _load(args)
    per_seed = _map(_compare_one, cfg, out, _flags(args), args.jobs)
    report = {
        "seeds": cfg.seeds(),
        "eps_target": cfg.eps_target,
        "strategies": aggregate_compare(per_seed),
        "per_seed": per_seed,
    }
    (out / "compare.json").write_text(json.dumps(report, indent=2) + "\n")
    for kind, s in report["strategies"].items():
        print(f"{kind:9s} mean duration {s['mean_duration']}  ratio vs full {s['duration_ratio_vs_full']}")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, args.override)
    results = run_checks(cfg, K=args.K, inject_asymmetry=args.inject_asymmetry)
    print(format_table(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_gen_config(args: argparse.Namespace) -> int:
    text = json.dumps(default_config_document(), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cbdybw", description="Decentralized SGD with dynamic backup workers")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--override", action="append", default=[], metavar="K=V", help="dotted.key=value, repeatable")

    for name, fn in (("simulate", cmd_simulate), ("compare", cmd_compare)):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--out", help="output directory (default: config out_dir)")
        p.add_argument("--jobs", type=int, default=1, help="parallel replications")
        p.add_argument("--log-delays", action="store_true", help="write delays_<tag>.csv (k,j,t)")
        p.add_argument("--log-plans", action="store_true", help="write plans_<tag>.jsonl")
        p.add_argument("--dump-matrices", action="store_true", help="write one CSV per mixing matrix")
        p.set_defaults(func=fn)

    p = sub.add_parser("check")
    common(p)
    p.add_argument("--K", type=int, default=50, help="iterations of the verification run")
    p.add_argument("--inject-asymmetry", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen-config")
    p.add_argument("--out", help="write to file instead of stdout")
    p.set_defaults(func=cmd_gen_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # any module failure maps to the runtime exit code
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
