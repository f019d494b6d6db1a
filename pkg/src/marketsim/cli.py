"""Operator entry points: run episodes, recompute metrics, validate
configs, and verify logs by replay.

Exit codes: 0 success, 1 verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from marketsim.config import EpisodeConfig, default_config_path, load_config
from marketsim.engine import run_episode
from marketsim.errors import ConfigError
from marketsim.logio import LogCorruption, read_log, replay_check, write_log
from marketsim.metrics import compute_agent_metrics, compute_market_indices, mean_indices, mean_metrics
from marketsim.policies import SCRIPTED_POLICY_NAMES
from marketsim.report import funds_series, mean_funds_series, write_report

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2


def _parse_seeds(args: argparse.Namespace) -> list[int]:
    seeds: list[int] = []
    if args.seeds:
        text = args.seeds
        if ".." in text:
            lo, hi = text.split("..", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.extend(int(s) for s in text.split(",") if s)
    if args.seed is not None:
        seeds.append(args.seed)
    if not seeds:
        seeds = [0]
    return seeds


def _apply_policy_overrides(config: EpisodeConfig, overrides: Sequence[str]) -> None:
    for override in overrides:
        if "=" not in override:
            raise ConfigError(f"--policy expects TARGET=NAME, got {override!r}")
        target, name = override.split("=", 1)
        if name not in SCRIPTED_POLICY_NAMES:
            raise ConfigError(
                f"--policy names a scripted policy ({', '.join(SCRIPTED_POLICY_NAMES)}), got {name!r}"
            )
        if target == "all":
            config.default_policy = name
            config.agent_policies = {}
        else:
            config.agent_policies[target] = name


def _run_seed(config_json: dict[str, Any], seed: int, out_path: str) -> str:
    config = EpisodeConfig.from_json(config_json)
    config.seed = seed
    log = run_episode(config)
    write_log(log, out_path)
    return out_path


def cmd_run(args: argparse.Namespace) -> int:
    config_path = Path(args.config) if args.config else default_config_path()
    config = load_config(config_path)
    _apply_policy_overrides(config, args.policy or [])
    config.validate()
    seeds = _parse_seeds(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    log_paths = {seed: out_dir / f"episode_seed{seed}.jsonl" for seed in seeds}
    config_json = config.to_json()
    if args.jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {
                seed: pool.submit(_run_seed, config_json, seed, str(log_paths[seed]))
                for seed in seeds
            }
            for seed in seeds:
                futures[seed].result()
    else:
        for seed in seeds:
            _run_seed(config_json, seed, str(log_paths[seed]))
    for seed in seeds:
        print(f"wrote {log_paths[seed]}")

    logs = [read_log(log_paths[seed]) for seed in seeds]
    aggregate = mean_metrics([log.agent_metrics for log in logs])
    indices = mean_indices([log.market_indices for log in logs])
    funds = mean_funds_series([funds_series(log.records) for log in logs])
    report_dir = out_dir / "report"
    paths = write_report(
        report_dir, aggregate, indices, funds, figures=not args.no_figures, prefix="metrics_mean"
    )
    manifest = {
        "config_path": str(config_path),
        "config_hash": config.config_hash(),
        "seeds": seeds,
        "logs": [str(log_paths[seed]) for seed in seeds],
        "report_dir": str(report_dir),
        "aggregate_csv": str(paths["metrics_csv"]),
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {paths['metrics_csv']}")
    print(f"wrote {manifest_path}")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    logs = [read_log(path) for path in args.log]
    recomputed = []
    for path, log in zip(args.log, logs):
        from marketsim.engine import make_embedder

        embedder = make_embedder(log.config)
        metrics = compute_agent_metrics(
            log.records, log.config.tribes, embedder, mms_basis=log.config.mms_basis
        )
        indices = compute_market_indices(log.records)
        inline = {a: m.to_json() for a, m in log.agent_metrics.items()}
        if {a: m.to_json() for a, m in metrics.items()} != inline or [
            i.to_json() for i in indices
        ] != [i.to_json() for i in log.market_indices]:
            print(f"{path}: recomputed metrics differ from inline report", file=sys.stderr)
            return EXIT_VERIFY
        recomputed.append((metrics, indices, funds_series(log.records)))

    aggregate = mean_metrics([m for m, _, _ in recomputed])
    indices = mean_indices([i for _, i, _ in recomputed])
    funds = mean_funds_series([f for _, _, f in recomputed])
    if args.out:
        paths = write_report(
            Path(args.out), aggregate, indices, funds, figures=not args.no_figures
        )
        for path in paths.values():
            print(f"wrote {path}")
    else:
        from marketsim.report import metrics_csv

        sys.stdout.write(metrics_csv(aggregate))
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    print(
        f"OK: {config.agents} agents, {config.steps} steps, "
        f"{len(config.catalog)} items, {len(config.tribes)} tribes, "
        f"hash {config.config_hash()[:12]}"
    )
    return EXIT_OK


def cmd_replay(args: argparse.Namespace) -> int:
    try:
        log = read_log(args.log)
    except LogCorruption as exc:
        print(f"corrupt log: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    problems = replay_check(log)
    if problems:
        for problem in problems:
            print(problem, file=sys.stderr)
        return EXIT_VERIFY
    if args.check:
        print(f"{args.log}: {len(log.records)} steps verified")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketsim",
        description="Deterministic multi-agent supply-chain market simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one episode per seed and aggregate a report")
    run.add_argument("--config", help="TOML config path (default: shipped default)")
    run.add_argument("--seed", type=int, help="single seed")
    run.add_argument("--seeds", help="seed list: '1..10' or '1,2,5'")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel episodes")
    run.add_argument(
        "--policy",
        action="append",
        metavar="TARGET=NAME",
        help="override policy bindings, e.g. all=zero or A03=margin",
    )
    run.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    run.set_defaults(func=cmd_run)

    metrics = sub.add_parser("metrics", help="recompute metrics from JSONL logs")
    metrics.add_argument("--log", action="append", required=True, help="log path (repeatable)")
    metrics.add_argument("--out", help="report directory (default: print CSV to stdout)")
    metrics.add_argument("--no-figures", action="store_true", help="skip PNG figures")
    metrics.set_defaults(func=cmd_metrics)

    validate = sub.add_parser("validate", help="lint a config file")
    validate.add_argument("--config", required=True)
    validate.set_defaults(func=cmd_validate)

    replay = sub.add_parser("replay", help="verify a log by replaying its events")
    replay.add_argument("--log", required=True)
    replay.add_argument("--check", action="store_true", help="verify and report")
    replay.set_defaults(func=cmd_replay)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LogCorruption as exc:
        print(f"corrupt log: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
