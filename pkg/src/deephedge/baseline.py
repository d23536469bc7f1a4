"""Discretized Black-Scholes delta hedge run through the same engine."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import EvalReport, EvalSettings, HedgeConfig, evaluate
from .market import MarketParams, PathBatch
from .payoff import CallClaim, bs_delta


@dataclass(frozen=True)
class DeltaStrategy:
    claim: CallClaim
    r: float
    sigma: float
    maturity: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")

    @classmethod
    def for_market(cls, market: MarketParams, claim: CallClaim) -> "DeltaStrategy":
        return cls(claim, market.r, market.sigma, market.maturity)

    def __call__(self, k: int, t_k: float, spots: np.ndarray) -> np.ndarray:
        return delta_position(spots, t_k, self)


def delta_position(spot, t_k: float, strategy: DeltaStrategy):
    """Black-Scholes delta with the remaining time ``maturity - t_k``."""
    tau = strategy.maturity - t_k
    if not tau > 0:
        raise ValueError(f"t_k={t_k} must be before maturity {strategy.maturity}")
    return bs_delta(spot, strategy.claim, strategy.r, strategy.sigma, tau)


def evaluate_baseline(market: MarketParams, claim: CallClaim, config: HedgeConfig, settings: EvalSettings,
                      paths: PathBatch | None = None) -> EvalReport:
    return evaluate(DeltaStrategy.for_market(market, claim), market, claim, config, settings, paths=paths)
