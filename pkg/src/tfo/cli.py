"""Command line: ``run``, ``oracle``, ``validate`` and ``generate``.

Exit codes: 0 success, 1 configuration or validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .harness import PRACTICAL, ConfigError, ExperimentConfig, emit_csv, run_experiment
from .model import MarketplaceError, format_cents, validate_marketplace
from .oracle import OracleGuardError, competitive_ratio, offline_opt
from .policies import POLICIES
from .workload import (
    PRESETS,
    ParseError,
    StreamConfig,
    generate_marketplace,
    generate_stream,
    generate_task_pool,
    load_marketplace,
    load_stream,
    preset_config,
    save_marketplace,
    save_stream,
    save_task_pool,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _policies(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    for name in names:
        if name not in POLICIES:
            raise ConfigError(f"unknown policy {name!r}; choose from {', '.join(POLICIES)}")
    return names


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        if args.out:
            cfg.out = args.out
        if args.jobs:
            cfg.jobs = args.jobs
        return cfg
    if not args.market and not args.preset:
        raise ConfigError("give --config, --market or --preset")
    market = {"file": args.market} if args.market else {"preset": args.preset}
    tasks = {"file": args.tasks} if args.tasks else {}
    if args.market and not args.tasks:
        raise ConfigError("--market needs --tasks")
    swept = args.alpha is not None or args.beta is not None
    if args.market and not swept:
        alpha, beta = [None], [None]
    else:
        alpha = _floats(args.alpha) if args.alpha else [4.0]
        beta = _floats(args.beta) if args.beta else [0.1]
    params = dict(PRACTICAL)
    if args.hat_factor is not None:
        params["hat_factor"] = args.hat_factor
    if args.lazy is not None:
        params["lazy"] = args.lazy
    return ExperimentConfig(
        market=market,
        tasks=tasks,
        policies=_policies(args.policy),
        streams=args.streams,
        length=args.length,
        p=_floats(args.p),
        salary_ratio=beta,
        hiring_factor=alpha,
        seed=args.seed,
        policy_params=params,
        out=args.out,
        jobs=args.jobs or 1,
    )


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    report = run_experiment(cfg, write=False)
    if cfg.out:
        manifest = emit_csv(report, cfg.out)
        for name, path in manifest.items():
            print(f"wrote {name}: {path}")
    for pr in report.points:
        pt = pr.point
        print(f"p={pt.p:g} salary_ratio={pt.salary_ratio} hiring_factor={pt.hiring_factor}")
        for name in cfg.policies:
            print(f"  {name:18s} mean total {report.mean_total(name, pt.index):14.2f}")
    errors = report.errors()
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return EXIT_RUNTIME if errors else EXIT_OK


def cmd_oracle(args) -> int:
    market = load_marketplace(args.market, force=args.force)
    stream = load_stream(args.stream, market)
    sol = offline_opt(market, stream)
    names = market.worker_names or [str(r) for r in range(market.n)]
    print(f"offline optimum: {format_cents(sol.cost)}")
    for t, (team, out) in enumerate(sol.schedule, 1):
        hired = ",".join(names[r] for r in sorted(team)) or "-"
        outs = ",".join(names[r] for r in sorted(out)) or "-"
        print(f"  t={t}\thired={hired}\toutsourced={outs}")
    for name in _policies(args.policy) if args.policy else []:
        seeds = range(args.seeds)
        summary = competitive_ratio(name, market, stream, seeds, opt=sol.cost)
        print(f"{name}: mean ratio {summary.mean:.4f}, max ratio {summary.max:.4f} over {args.seeds} seeds")
    return EXIT_OK


def cmd_validate(args) -> int:
    market = load_marketplace(args.market, force=True)
    report = validate_marketplace(market, force=args.force)
    for msg in report.messages():
        print(msg)
    ok = report.accepted
    print(f"{market.n} workers, {market.m} skills: {'accepted' if ok else 'rejected'}")
    return EXIT_OK if ok else EXIT_CONFIG


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset = PRESETS[args.preset]
    rng = np.random.default_rng(args.seed)
    market = generate_marketplace(preset_config(args.preset, hiring_factor=args.alpha, salary_ratio=args.beta), rng)
    count = args.tasks or preset["tasks"]
    pool = generate_task_pool(market, count, preset["skills_per_task"], rng, exclude_fraction=preset["exclude"])
    save_marketplace(pool.market, out / "market.tsv")
    save_task_pool(pool, out / "tasks.tsv")
    print(f"wrote {out / 'market.tsv'} ({pool.market.n} workers) and {out / 'tasks.tsv'} ({len(pool)} tasks)")
    if args.length:
        stream = generate_stream(pool, StreamConfig(p=args.p, length=args.length), rng)
        save_stream(stream.tasks, pool.market, out / "stream.tsv")
        print(f"wrote {out / 'stream.tsv'} ({len(stream)} tasks)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfo", description="Online team formation with outsourcing.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run policies over generated streams and write CSVs")
    run.add_argument("--config", help="JSON experiment config")
    run.add_argument("--market", help="marketplace file")
    run.add_argument("--tasks", help="task pool file")
    run.add_argument("--preset", choices=sorted(PRESETS), help="synthetic marketplace instead of files")
    run.add_argument("--policy", default="always-outsource,tfo", help="comma-separated policy names")
    run.add_argument("--p", default="100", help="coherence parameter(s), comma-separated")
    run.add_argument("--streams", type=int, default=100)
    run.add_argument("--length", type=int, default=10_000)
    run.add_argument("--alpha", help="hiring factor(s) C/lambda; reprices the marketplace")
    run.add_argument("--beta", help="salary ratio(s) sigma/lambda; reprices the marketplace")
    run.add_argument("--hat-factor", type=float, help="TFO interval weight multiplier (default 15)")
    run.add_argument("--lazy", action=argparse.BooleanOptionalAction, default=None,
                     help="lazy hiring for the primal-dual policies (default on)")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--jobs", type=int, default=0, help="worker processes")
    run.add_argument("--out", help="output directory for CSVs")
    run.set_defaults(func=cmd_run)

    orc = sub.add_parser("oracle", help="exact offline optimum of a tiny instance")
    orc.add_argument("--market", required=True)
    orc.add_argument("--stream", required=True)
    orc.add_argument("--policy", help="also report competitive ratios of these policies")
    orc.add_argument("--seeds", type=int, default=10)
    orc.add_argument("--force", action="store_true", help="accept marketplaces that break cost assumptions")
    orc.set_defaults(func=cmd_oracle)

    val = sub.add_parser("validate", help="check a marketplace file")
    val.add_argument("--market", required=True)
    val.add_argument("--force", action="store_true", help="downgrade cost-assumption violations to warnings")
    val.set_defaults(func=cmd_validate)

    gen = sub.add_parser("generate", help="write a synthetic marketplace, task pool and stream")
    gen.add_argument("--preset", choices=sorted(PRESETS), default="freelancer")
    gen.add_argument("--alpha", type=float, default=4.0)
    gen.add_argument("--beta", type=float, default=0.1)
    gen.add_argument("--tasks", type=int, default=0)
    gen.add_argument("--p", type=float, default=100.0)
    gen.add_argument("--length", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MarketplaceError, ParseError, OracleGuardError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
