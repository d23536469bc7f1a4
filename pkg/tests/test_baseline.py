import numpy as np
import pytest

from deephedge.baseline import DeltaStrategy, delta_position, evaluate_baseline
from deephedge.engine import EvalSettings, HedgeConfig, eval_paths
from deephedge.market import MarketParams
from deephedge.payoff import CallClaim

CLAIM = CallClaim(110.0)


def test_delta_limits():
    s = DeltaStrategy(CLAIM, 0.0, 0.3, 10.0)
    assert delta_position(1e4, 9.999, s) == pytest.approx(1.0)
    assert delta_position(1.0, 9.999, s) == pytest.approx(0.0, abs=1e-15)


def test_delta_atm_value():
    s = DeltaStrategy(CLAIM, 0.0, 0.3, 10.0)
    assert delta_position(110.0, 0.0, s) == pytest.approx(0.6823718520013758, rel=1e-12)


def test_delta_after_maturity_is_error():
    with pytest.raises(ValueError):
        delta_position(100.0, 10.0, DeltaStrategy(CLAIM, 0.0, 0.3, 10.0))
    with pytest.raises(ValueError):
        DeltaStrategy(CLAIM, 0.0, 0.0, 10.0)


def test_baseline_is_deterministic_and_paired(market):
    cfg = HedgeConfig(v0=16.7)
    es = EvalSettings(n_paths=3000, seed=4)
    a = evaluate_baseline(market, CLAIM, cfg, es)
    b = evaluate_baseline(market, CLAIM, cfg, es)
    assert a.loss == b.loss
    assert np.array_equal(a.paths.prices, eval_paths(market, es).prices)


def test_costs_increase_baseline_loss(market):
    es = EvalSettings(n_paths=3000, seed=4)
    free = evaluate_baseline(market, CLAIM, HedgeConfig(v0=16.7), es)
    costly = evaluate_baseline(market, CLAIM, HedgeConfig(v0=16.7, c_cost=0.01), es)
    assert costly.loss.total > free.loss.total
    assert costly.loss.l_p == free.loss.l_p


def test_positions_within_unit_interval(market):
    rep = evaluate_baseline(market, CLAIM, HedgeConfig(v0=16.7), EvalSettings(n_paths=2000, seed=1))
    live = rep.sim.codes != 4
    assert np.all((rep.sim.positions[live] >= 0) & (rep.sim.positions[live] <= 1))


def test_full_capital_hedge_error_small():
    market = MarketParams(n_steps=400)
    from deephedge.payoff import bs_price
    v0 = float(bs_price(100.0, CLAIM, 0.0, 0.3, 10.0))
    rep = evaluate_baseline(market, CLAIM, HedgeConfig(v0=v0, c_ad=0.0), EvalSettings(n_paths=5000, seed=2))
    assert rep.loss.l_p < 0.05 * v0
