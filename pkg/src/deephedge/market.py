"""Seeded geometric Brownian motion path batches on a uniform grid."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

# Paths are drawn in fixed-size blocks, each from its own Philox stream keyed on
# (seed, block id), so the first rows of a batch do not depend on its size.
BLOCK_SIZE = 4096

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class MarketParams:
    mu: float = 0.08
    sigma: float = 0.3
    s0: float = 100.0
    r: float = 0.0
    maturity: float = 10.0
    n_steps: int = 100

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if not self.s0 > 0:
            raise ValueError(f"s0 must be > 0, got {self.s0}")
        if not self.maturity > 0:
            raise ValueError(f"maturity must be > 0, got {self.maturity}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.maturity / self.n_steps

    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt


@dataclass(frozen=True, eq=False)
class PathBatch:
    prices: np.ndarray
    increments: np.ndarray
    dt: float
    seed: object = None
    market: Optional[MarketParams] = None

    @property
    def n_paths(self) -> int:
        return self.prices.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    @property
    def terminal(self) -> np.ndarray:
        return self.prices[:, -1]


def _seed_key(seed: Seed) -> list[int]:
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def generate_increments(n_paths: int, n_steps: int, dt: float, seed: Seed) -> np.ndarray:
    """Brownian increments N(0, dt), shape ``(n_paths, n_steps)``.

    ``seed`` may be an int or a tuple of ints (used to derive disjoint streams,
    e.g. ``(seed, stream, iteration)``).
    """
    if n_paths < 1 or n_steps < 1:
        raise ValueError(f"n_paths and n_steps must be >= 1, got {n_paths}, {n_steps}")
    if dt < 0:
        raise ValueError(f"dt must be >= 0, got {dt}")
    key = _seed_key(seed)
    out = np.empty((n_paths, n_steps))
    scale = np.sqrt(dt)
    for block, start in enumerate(range(0, n_paths, BLOCK_SIZE)):
        stop = min(start + BLOCK_SIZE, n_paths)
        ss = np.random.SeedSequence(key + [block])
        rng = np.random.Generator(np.random.Philox(ss))
        out[start:stop] = rng.standard_normal((stop - start, n_steps))
    out *= scale
    return out


def simulate_paths(params: MarketParams, increments: np.ndarray, seed=None) -> PathBatch:
    """Exact lognormal stepping driven by the given increments."""
    increments = np.asarray(increments, dtype=float)
    if increments.ndim != 2 or increments.shape[1] != params.n_steps:
        raise ValueError(
            f"increments must have shape (n_paths, {params.n_steps}), got {increments.shape}"
        )
    dt = params.dt
    log_steps = (params.mu - 0.5 * params.sigma**2) * dt + params.sigma * increments
    log_paths = np.concatenate([np.zeros((increments.shape[0], 1)), np.cumsum(log_steps, axis=1)], axis=1)
    prices = params.s0 * np.exp(log_paths)
    prices[:, 0] = params.s0
    return PathBatch(prices=prices, increments=increments, dt=dt, seed=seed, market=params)


def sample_paths(params: MarketParams, n_paths: int, seed: Seed) -> PathBatch:
    inc = generate_increments(n_paths, params.n_steps, params.dt, seed)
    return simulate_paths(params, inc, seed=seed)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments (same Brownian path, coarser grid)."""
    n, m = increments.shape
    if m % factor:
        raise ValueError(f"{m} steps not divisible by {factor}")
    return increments.reshape(n, m // factor, factor).sum(axis=2)


def write_paths_csv(batch: PathBatch, path: Union[str, Path]) -> None:
    """Debug dump in long format: path id, step, price."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "step", "price"])
        for i in range(batch.n_paths):
            for k in range(batch.prices.shape[1]):
                w.writerow([i, k, format(batch.prices[i, k], ".17g")])


def read_paths_csv(path: Union[str, Path]) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    rows = np.atleast_2d(rows)
    n = int(rows[:, 0].max()) + 1
    m = int(rows[:, 1].max()) + 1
    prices = np.empty((n, m))
    prices[rows[:, 0].astype(int), rows[:, 1].astype(int)] = rows[:, 2]
    return prices
