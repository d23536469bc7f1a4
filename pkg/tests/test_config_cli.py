import csv
import json

import numpy as np
import pytest

from deephedge.baseline import DeltaStrategy
from deephedge.cli import main
from deephedge.config import (
    ConfigFileError,
    ConfigSyntaxError,
    ConfigValidationError,
    ExperimentConfig,
    config_from_dict,
    parse_config,
)
from deephedge.engine import StrategyStack
from deephedge.payoff import CallClaim
from deephedge.report import emit_strategy_curve, run_experiment

TINY = {
    "market": {"n_steps": 5, "maturity": 1.0},
    "training": {"batch_size": 16, "n_iterations": 5, "seed": 3},
    "eval": {"n_paths": 500, "seed": 11},
    "p_grid": [2.0],
    "cost_grid": [0.0],
    "spot_grid": {"lo": 80.0, "hi": 120.0, "n": 5},
    "curve_fractions": [0.5],
    "wealth_samples": 10,
}


def write(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return path


def test_empty_file_gives_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, ""))
    assert cfg == ExperimentConfig()
    assert cfg.to_dict()["p_grid"] == [1.0, 1.1, 2.0]
    assert cfg.v0 == pytest.approx(0.5 * 33.476981678735, rel=1e-10)


def test_negative_sigma_names_field(tmp_path):
    with pytest.raises(ConfigValidationError) as info:
        parse_config(write(tmp_path, {"market": {"sigma": -0.3}}))
    assert info.value.field == "market.sigma"


@pytest.mark.parametrize("raw, field", [
    ({"market": {"vol": 0.3}}, "market.vol"),
    ({"extra": 1}, "extra"),
    ({"hedge": {"bankruptcy_bound": 5.0}}, "hedge.bankruptcy_bound"),
    ({"hedge": {"c_ad_scaling": "bogus"}}, "hedge.c_ad_scaling"),
    ({"training": {"n_iterations": 0}}, "training.n_iterations"),
    ({"training": {"batch_size": 2.5}}, "training.batch_size"),
    ({"p_grid": []}, "p_grid"),
    ({"cost_grid": [-0.1]}, "cost_grid[0]"),
])
def test_validation_errors(raw, field):
    with pytest.raises(ConfigValidationError) as info:
        config_from_dict(raw)
    assert info.value.field == field


def test_missing_and_malformed(tmp_path):
    with pytest.raises(ConfigFileError):
        parse_config(tmp_path / "nope.json")
    with pytest.raises(ConfigSyntaxError):
        parse_config(write(tmp_path, "{not json"))


def test_default_market_round_trip(tmp_path):
    raw = {"market": {"mu": 0.08, "sigma": 0.3, "s0": 100, "maturity": 10, "n_steps": 100},
           "claim": {"strike": 110}, "hedge": {"bankruptcy_bound": -100}}
    cfg = parse_config(write(tmp_path, raw))
    echoed = write(tmp_path, cfg.to_dict(), "echo.json")
    assert parse_config(echoed) == cfg
    manifest = write(tmp_path, {"format": "deephedge.report_manifest/1", "config": cfg.to_dict()}, "m.json")
    assert parse_config(manifest) == cfg


def test_c_ad_scaling():
    cfg = ExperimentConfig()
    assert cfg.hedge_config(1.1, 0.0).c_ad == cfg.hedge.c_ad == 8.0
    scaled = config_from_dict({"hedge": {"c_ad_scaling": "capital", "c_ad": 2.0}})
    assert scaled.hedge_config(1.0, 0.0).c_ad == 2.0
    assert scaled.hedge_config(2.0, 0.0).c_ad == pytest.approx(2.0 * scaled.v0)


def test_curve_zero_network_is_flat():
    stack = StrategyStack.init(4, 100.0, seed=0)
    for w in stack.weights:
        w[...] = 0.0
    stack.biases[-1][...] = 0.42
    rows = emit_strategy_curve(stack, [0, 3], np.linspace(50, 250, 9), DeltaStrategy(CallClaim(), 0.0, 0.3, 4.0), 1.0)
    assert len(rows) == 18
    assert all(r[3] == 0.42 for r in rows)
    assert rows[-1][4] > 0.99  # tau = 1 remaining, spot 250 >> 110
    with pytest.raises(ValueError):
        emit_strategy_curve(stack, [4], [100.0], DeltaStrategy(CallClaim(), 0.0, 0.3, 4.0), 1.0)


def test_run_experiment_single_cell(tmp_path):
    cfg = config_from_dict(TINY)
    bundle = run_experiment(cfg, output_dir=tmp_path / "out")
    assert bundle.ok
    with open(tmp_path / "out" / "table.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    row = rows[0]
    assert row["eval_seed"] == "11" and row["n_paths"] == "500"
    for who in ("deep", "delta"):
        parts = sum(float(row[f"{who}_{k}"]) for k in ("l_p", "l_cost", "l_ad"))
        assert float(row[f"{who}_total"]) == pytest.approx(parts, abs=1e-12)
    text = (tmp_path / "out" / "table.txt").read_text()
    assert "deep hedge" in text and "delta hedge" in text and "p = 2" in text
    cell = tmp_path / "out" / "cells" / "p=2_cost=0"
    assert (cell / "history.csv").read_text().splitlines()[0] == "iteration,l_p,l_cost,l_ad,total"
    assert len((cell / "terminal_wealth.csv").read_text().splitlines()) == 1 + 20
    assert len((cell / "curves.csv").read_text().splitlines()) == 1 + 5
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["cells"][0]["eval_seed"] == 11
    assert parse_config(tmp_path / "out" / "manifest.json") == cfg


def test_rerun_is_byte_identical(tmp_path):
    cfg = config_from_dict(TINY)
    run_experiment(cfg, output_dir=tmp_path / "a")
    run_experiment(cfg, output_dir=tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f


def test_cli_run_evaluate_curves(tmp_path, capsys):
    cfg_path = write(tmp_path, {**TINY, "output_dir": str(tmp_path / "out")})
    assert main(["run", str(cfg_path), "--seed-override", "5"]) == 0
    assert "deep hedge" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["config"]["training"]["seed"] == 5 and manifest["config"]["eval"]["seed"] == 5

    strat = tmp_path / "out" / "cells" / "p=2_cost=0" / "strategy"
    assert main(["evaluate", str(strat), "--config", str(cfg_path), "--p", "2", "--out",
                 str(tmp_path / "ev.json")]) == 0
    report = json.loads((tmp_path / "ev.json").read_text())
    assert report["deep"]["total"] > 0 and report["eval_seed"] == 11
    capsys.readouterr()

    assert main(["curves", str(strat), "--times", "0", "4", "--n-spots", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "time_index,time,spot,deep_position,delta_position"
    assert len(lines) == 1 + 6
    assert main(["curves", str(strat), "--times", "5"]) == 1


def test_cli_config_errors(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.json")]) == 2
    assert main(["run", str(write(tmp_path, {"market": {"sigma": -0.3}}))]) == 2
    assert "market.sigma" in capsys.readouterr().err
