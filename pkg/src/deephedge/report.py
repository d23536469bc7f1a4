"""Experiment runner: trains one deep strategy per (p, cost) cell, evaluates it
against the delta hedge on a shared held-out batch and writes CSV/text outputs."""
from __future__ import annotations

import csv
import io
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from ._accel import backend_name
from .baseline import DeltaStrategy, delta_position
from .config import MANIFEST_FORMAT, ExperimentConfig, config_from_dict
from .engine import (
    HISTORY_COLUMNS,
    StrategyStack,
    TrainingDivergence,
    eval_paths,
    evaluate,
    train,
)

log = logging.getLogger(__name__)

LOSS_FIELDS = ("l_p", "l_cost", "l_ad", "total")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def cell_name(p: float, c_cost: float) -> str:
    return f"p={p:g}_cost={c_cost:g}"


def emit_strategy_curve(strategy: StrategyStack, times: Sequence[int], spot_grid, delta: DeltaStrategy,
                        dt: float) -> list[tuple]:
    """Rows ``(time_index, time, spot, deep_position, delta_position)``."""
    spot_grid = np.asarray(spot_grid, dtype=float)
    rows = []
    for k in times:
        if not 0 <= k < strategy.n_steps:
            raise ValueError(f"time index {k} outside 0..{strategy.n_steps - 1}")
        deep = strategy.position_at(k, spot_grid)
        dl = delta_position(spot_grid, k * dt, delta)
        rows += [(int(k), k * dt, s, a, b) for s, a, b in zip(spot_grid, deep, dl)]
    return rows


CURVE_HEADER = ("time_index", "time", "spot", "deep_position", "delta_position")


@dataclass
class CellResult:
    p: float
    c_cost: float
    status: str
    deep: Optional[dict] = None
    delta: Optional[dict] = None
    deep_summary: Optional[dict] = None
    delta_summary: Optional[dict] = None
    strategy_sha256: Optional[str] = None
    failure: Optional[str] = None


@dataclass
class ReportBundle:
    output_dir: Path
    cells: list
    manifest: dict
    files: list = field(default_factory=list)

    def table_rows(self):
        return [c for c in self.cells if c.status == "ok"]

    @property
    def ok(self) -> bool:
        return all(c.status == "ok" for c in self.cells)


def _run_cell(cfg_dict: dict, p: float, c_cost: float, out_dir: str) -> CellResult:
    cfg = config_from_dict(cfg_dict)
    cell_dir = Path(out_dir) / "cells" / cell_name(p, c_cost)
    cell_dir.mkdir(parents=True, exist_ok=True)
    hedge = cfg.hedge_config(p, c_cost)
    market, claim = cfg.market, cfg.claim
    log.info("training cell %s", cell_name(p, c_cost))
    try:
        result = train(market, claim, hedge, cfg.training)
    except TrainingDivergence as exc:
        write_csv(cell_dir / "history.csv", HISTORY_COLUMNS, exc.history)
        (cell_dir / "failure.json").write_text(json.dumps(
            {"iteration": exc.iteration, "component": exc.component, "message": str(exc)}, indent=2, sort_keys=True))
        return CellResult(p, c_cost, "diverged", failure=str(exc))
    write_csv(cell_dir / "history.csv", HISTORY_COLUMNS, result.history)
    stack = result.stack
    stack.save(cell_dir / "strategy", extra={"market": cfg.to_dict()["market"], "claim": cfg.to_dict()["claim"],
                                              "p": p, "c_cost": c_cost})

    paths = eval_paths(market, cfg.eval)
    delta = DeltaStrategy.for_market(market, claim)
    deep_rep = evaluate(stack, market, claim, hedge, cfg.eval, paths=paths)
    delta_rep = evaluate(delta, market, claim, hedge, cfg.eval, paths=paths)

    n = min(cfg.wealth_samples, paths.n_paths)
    rows = [("deep", v) for v in deep_rep.sim.terminal[:n]] + [("delta", v) for v in delta_rep.sim.terminal[:n]]
    write_csv(cell_dir / "terminal_wealth.csv", ("strategy", "terminal_wealth"), rows)
    grid = np.linspace(cfg.spot_grid.lo, cfg.spot_grid.hi, cfg.spot_grid.n)
    write_csv(cell_dir / "curves.csv", CURVE_HEADER,
              emit_strategy_curve(stack, cfg.curve_indices(), grid, delta, market.dt))
    return CellResult(p, c_cost, "ok", deep_rep.loss.as_dict(), delta_rep.loss.as_dict(),
                      deep_rep.summary, delta_rep.summary, stack.content_hash())


TABLE_HEADER = (
    "p", "c_cost", "eval_seed", "n_paths",
    *(f"deep_{f}" for f in LOSS_FIELDS), *(f"delta_{f}" for f in LOSS_FIELDS),
    "deep_violation", "delta_violation",
)


def table_text(cfg: ExperimentConfig, cells: Sequence[CellResult]) -> str:
    """Plain-text mirror: one table per cost level, rows deep/delta, columns p."""
    by_key = {(c.p, c.c_cost): c for c in cells}
    buf = io.StringIO()
    for cost in cfg.cost_grid:
        buf.write(f"Efficient hedging loss, proportional cost {cost:g} "
                  f"(eval seed {cfg.eval.seed}, {cfg.eval.n_paths} paths)\n")
        head = ["", *(f"p = {p:g}" for p in cfg.p_grid)]
        body = []
        for label, key in (("deep hedge", "deep"), ("delta hedge", "delta")):
            row = [label]
            for p in cfg.p_grid:
                c = by_key.get((p, cost))
                row.append("failed" if c is None or c.status != "ok" else f"{getattr(c, key)['total']:.2f}")
            body.append(row)
        widths = [max(len(r[i]) for r in [head, *body]) for i in range(len(head))]
        for r in [head, *body]:
            buf.write(" | ".join(s.ljust(w) if i == 0 else s.rjust(w) for i, (s, w) in enumerate(zip(r, widths))))
            buf.write("\n")
        buf.write("\n")
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, threads: int = 1, output_dir=None) -> ReportBundle:
    """Train and evaluate every (p, cost) cell; ``threads > 1`` runs cells in worker processes.

    Each cell is seeded independently of scheduling, so outputs do not depend
    on ``threads``.
    """
    out = Path(output_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg_dict = cfg.to_dict()
    jobs = [(p, c) for c in cfg.cost_grid for p in cfg.p_grid]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_cell, cfg_dict, p, c, str(out)) for p, c in jobs]
            cells = [f.result() for f in futures]
    else:
        cells = [_run_cell(cfg_dict, p, c, str(out)) for p, c in jobs]

    rows = []
    for c in cells:
        if c.status != "ok":
            continue
        rows.append((c.p, c.c_cost, cfg.eval.seed, cfg.eval.n_paths,
                     *(c.deep[f] for f in LOSS_FIELDS), *(c.delta[f] for f in LOSS_FIELDS),
                     c.deep_summary["admissibility_violation_mean"], c.delta_summary["admissibility_violation_mean"]))
    write_csv(out / "table.csv", TABLE_HEADER, rows)
    (out / "table.txt").write_text(table_text(cfg, cells), encoding="utf-8")
    (out / "config.resolved.json").write_text(json.dumps(cfg_dict, indent=2, sort_keys=True), encoding="utf-8")

    manifest = {
        "format": MANIFEST_FORMAT,
        "config": cfg_dict,
        "v0": cfg.v0,
        "seeds": {"training": cfg.training.seed, "eval": cfg.eval.seed,
                  "training_stream": "(training.seed, 0, iteration)", "eval_stream": "(eval.seed, 1)"},
        "versions": {"deephedge": __version__, "numpy": np.__version__, "python": platform.python_version(),
                     "backend": backend_name()},
        "cells": [
            {"p": c.p, "c_cost": c.c_cost, "status": c.status, "eval_seed": cfg.eval.seed,
             "n_paths": cfg.eval.n_paths, "dir": f"cells/{cell_name(c.p, c.c_cost)}",
             "strategy_sha256": c.strategy_sha256, "failure": c.failure,
             "deep": c.deep, "delta": c.delta, "deep_summary": c.deep_summary, "delta_summary": c.delta_summary}
            for c in cells
        ],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    files = sorted(str(p.relative_to(out)) for p in out.rglob("*") if p.is_file())
    return ReportBundle(out, cells, manifest, files)
