"""Command line entry point: ``run``, ``evaluate`` and ``curves``."""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baseline import DeltaStrategy
from .config import ConfigError, ExperimentConfig, parse_config
from .engine import StrategyStack, eval_paths, evaluate
from .market import MarketParams
from .payoff import CallClaim
from .report import CURVE_HEADER, LOSS_FIELDS, emit_strategy_curve, fmt, run_experiment, write_csv

log = logging.getLogger("deephedge")


def _load_config(path) -> ExperimentConfig:
    return parse_config(path) if path else ExperimentConfig()


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed_override is not None:
        cfg = cfg.replace(
            training=dataclasses.replace(cfg.training, seed=args.seed_override),
            eval=dataclasses.replace(cfg.eval, seed=args.seed_override),
        )
    bundle = run_experiment(cfg, threads=args.threads, output_dir=args.output_dir)
    print((bundle.output_dir / "table.txt").read_text(), end="")
    for c in bundle.cells:
        if c.status != "ok":
            print(f"cell p={c.p:g} cost={c.c_cost:g} failed: {c.failure}", file=sys.stderr)
    return 0 if bundle.ok else 3


def cmd_evaluate(args) -> int:
    cfg = _load_config(args.config)
    stack = StrategyStack.load(args.strategy)
    if stack.n_steps != cfg.market.n_steps:
        raise ConfigError(f"strategy has {stack.n_steps} steps but market.n_steps={cfg.market.n_steps}")
    hedge = cfg.hedge_config(args.p, args.c_cost)
    paths = eval_paths(cfg.market, cfg.eval)
    deep = evaluate(stack, cfg.market, cfg.claim, hedge, cfg.eval, paths=paths)
    delta = evaluate(DeltaStrategy.for_market(cfg.market, cfg.claim), cfg.market, cfg.claim, hedge, cfg.eval,
                     paths=paths)
    report = {
        "p": args.p, "c_cost": args.c_cost, "eval_seed": cfg.eval.seed, "n_paths": cfg.eval.n_paths,
        "deep": deep.loss.as_dict(), "delta": delta.loss.as_dict(),
        "deep_summary": deep.summary, "delta_summary": delta.summary,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_curves(args) -> int:
    stack = StrategyStack.load(args.strategy)
    manifest = json.loads((Path(args.strategy) / "manifest.json").read_text())
    if args.config:
        cfg = parse_config(args.config)
        market, claim = cfg.market, cfg.claim
    else:
        market = MarketParams(**manifest["market"]) if "market" in manifest else MarketParams(n_steps=stack.n_steps)
        claim = CallClaim(**manifest["claim"]) if "claim" in manifest else CallClaim()
    grid = np.linspace(args.spot_min, args.spot_max, args.n_spots)
    rows = emit_strategy_curve(stack, args.times, grid, DeltaStrategy.for_market(market, claim), market.dt)
    if args.out:
        write_csv(Path(args.out), CURVE_HEADER, rows)
    else:
        print(",".join(CURVE_HEADER))
        for r in rows:
            print(",".join(fmt(v) for v in r))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="deephedge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="train and evaluate every (p, cost) cell of a config")
    run.add_argument("config", nargs="?", help="JSON config (or a report manifest); defaults if omitted")
    run.add_argument("--threads", type=int, default=1, help="worker processes for independent cells")
    run.add_argument("--seed-override", type=int, default=None, help="replace training and eval seeds")
    run.add_argument("--output-dir", default=None, help="overrides config output_dir")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("evaluate", help="evaluate a saved strategy against the delta hedge")
    ev.add_argument("strategy", help="directory written by a run (cells/<cell>/strategy)")
    ev.add_argument("--config", default=None)
    ev.add_argument("--p", type=float, required=True)
    ev.add_argument("--c-cost", type=float, default=0.0)
    ev.add_argument("--out", default=None, help="also write the JSON report here")
    ev.set_defaults(func=cmd_evaluate)

    cu = sub.add_parser("curves", help="positions of a saved strategy on a spot grid")
    cu.add_argument("strategy")
    cu.add_argument("--times", type=int, nargs="+", required=True, help="time indices 0..N-1")
    cu.add_argument("--spot-min", type=float, default=50.0)
    cu.add_argument("--spot-max", type=float, default=250.0)
    cu.add_argument("--n-spots", type=int, default=81)
    cu.add_argument("--config", default=None)
    cu.add_argument("--out", default=None)
    cu.set_defaults(func=cmd_curves)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
