"""Strict JSON experiment configuration.

Every section is optional; absent keys take defaults, unknown keys are
rejected.  Schema (defaults shown)::

    {
      "market":   {"mu": 0.08, "sigma": 0.3, "s0": 100.0, "r": 0.0,
                   "maturity": 10.0, "n_steps": 100},
      "claim":    {"strike": 110.0},
      "hedge":    {"v0": null, "v0_fraction": 0.5, "bankruptcy_bound": -100.0,
                   "c_ad": 8.0, "c_ad_scaling": "none", "bankruptcy_eps": 1e-9,
                   "exponent_clamp": 50.0, "charge_initial_position": false},
      "training": {"batch_size": 256, "n_iterations": 5000, "seed": 0,
                   "lr": 0.01, "clip_norm": 10.0},
      "eval":     {"n_paths": 100000, "seed": 2024},
      "p_grid": [1.0, 1.1, 2.0],
      "cost_grid": [0.0, 0.01],
      "curve_fractions": [0.25, 0.5, 0.75],
      "spot_grid": {"lo": 50.0, "hi": 250.0, "n": 81},
      "wealth_samples": 20000,
      "output_dir": "results"
    }

``hedge.v0 = null`` means ``v0_fraction`` times the zero-rate Black-Scholes
price at inception.  ``c_ad_scaling = "none"`` uses ``c_ad`` for every
exponent; ``"capital"`` uses ``c_ad * v0**(p - 1)`` for exponent ``p``, which
puts the penalty (wealth units) on the scale of the shortfall loss
(wealth**p units).

A report manifest (which embeds the resolved config under
``"config"``) is accepted wherever a config file is.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .engine import EvalSettings, HedgeConfig, TrainSettings, default_v0
from .market import MarketParams
from .payoff import CallClaim, LossSpec

MANIFEST_FORMAT = "deephedge.report_manifest/1"
DEFAULT_C_AD = 8.0
C_AD_SCALINGS = ("capital", "none")


class ConfigError(ValueError):
    """Base class for configuration problems."""


class ConfigFileError(ConfigError):
    pass


class ConfigSyntaxError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class HedgeSection:
    v0: Optional[float] = None
    v0_fraction: float = 0.5
    bankruptcy_bound: float = -100.0
    c_ad: float = DEFAULT_C_AD
    c_ad_scaling: str = "none"
    bankruptcy_eps: float = 1e-9
    exponent_clamp: float = 50.0
    charge_initial_position: bool = False


@dataclass(frozen=True)
class SpotGrid:
    lo: float = 50.0
    hi: float = 250.0
    n: int = 81


@dataclass(frozen=True)
class ExperimentConfig:
    market: MarketParams = field(default_factory=MarketParams)
    claim: CallClaim = field(default_factory=CallClaim)
    hedge: HedgeSection = field(default_factory=HedgeSection)
    training: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=lambda: EvalSettings(seed=2024))
    p_grid: tuple = (1.0, 1.1, 2.0)
    cost_grid: tuple = (0.0, 0.01)
    curve_fractions: tuple = (0.25, 0.5, 0.75)
    spot_grid: SpotGrid = field(default_factory=SpotGrid)
    wealth_samples: int = 20000
    output_dir: str = "results"

    @property
    def v0(self) -> float:
        if self.hedge.v0 is not None:
            return float(self.hedge.v0)
        return default_v0(self.market, self.claim, self.hedge.v0_fraction)

    def c_ad_for(self, p: float) -> float:
        if self.hedge.c_ad_scaling == "capital":
            return self.hedge.c_ad * self.v0 ** (p - 1.0)
        return self.hedge.c_ad

    def hedge_config(self, p: float, c_cost: float) -> HedgeConfig:
        h = self.hedge
        return HedgeConfig(
            v0=self.v0, bankruptcy_bound=h.bankruptcy_bound, c_cost=c_cost, c_ad=self.c_ad_for(p),
            loss=LossSpec(p), bankruptcy_eps=h.bankruptcy_eps, exponent_clamp=h.exponent_clamp,
            charge_initial_position=h.charge_initial_position,
        )

    def curve_indices(self) -> list[int]:
        return [min(int(round(f * self.market.n_steps)), self.market.n_steps - 1) for f in self.curve_fractions]

    def to_dict(self) -> dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "market": MarketParams,
    "claim": CallClaim,
    "hedge": HedgeSection,
    "training": TrainSettings,
    "eval": EvalSettings,
    "spot_grid": SpotGrid,
}


def _check_type(name: str, value: Any, default: Any, annotation: str):
    if value is None:
        if "Optional" in annotation:
            return None
        raise ConfigValidationError(name, "must not be null")
    if isinstance(default, str) or annotation == "str":
        if not isinstance(value, str):
            raise ConfigValidationError(name, f"expected a string, got {value!r}")
        return value
    if isinstance(default, bool) or annotation == "bool":
        if not isinstance(value, bool):
            raise ConfigValidationError(name, f"expected a boolean, got {value!r}")
        return value
    if annotation == "int" or isinstance(default, int) and "float" not in annotation:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigValidationError(name, f"expected an integer, got {value!r}")
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigValidationError(name, f"expected a number, got {value!r}")
    return float(value)


def _build_section(name: str, cls, raw: Any, defaults=None):
    if not isinstance(raw, dict):
        raise ConfigValidationError(name, f"expected an object, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(fields))
    if unknown:
        raise ConfigValidationError(f"{name}.{unknown[0]}", "unknown key")
    base = defaults if defaults is not None else cls()
    kwargs = {}
    for key, f in fields.items():
        default = getattr(base, key)
        if key in raw:
            kwargs[key] = _check_type(f"{name}.{key}", raw[key], default, str(f.type))
        else:
            kwargs[key] = default
    try:
        return cls(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        bad = msg.split(" ")[0]
        raise ConfigValidationError(f"{name}.{bad}" if bad in fields else name, msg) from None


def _number_list(name: str, raw: Any, positive: bool = False, nonneg: bool = False) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ConfigValidationError(name, "expected a nonempty list of numbers")
    out = []
    for i, v in enumerate(raw):
        v = _check_type(f"{name}[{i}]", v, 0.0, "float")
        if positive and not v > 0:
            raise ConfigValidationError(f"{name}[{i}]", f"must be > 0, got {v}")
        if nonneg and not v >= 0:
            raise ConfigValidationError(f"{name}[{i}]", f"must be >= 0, got {v}")
        out.append(v)
    return tuple(out)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigValidationError("<root>", "top level must be a JSON object")
    if raw.get("format") == MANIFEST_FORMAT:
        raw = raw["config"]
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigValidationError(unknown[0], "unknown key")
    base = ExperimentConfig()
    kwargs = {}
    for key, cls in _SECTIONS.items():
        if key in raw:
            kwargs[key] = _build_section(key, cls, raw[key], getattr(base, key))
    if "p_grid" in raw:
        kwargs["p_grid"] = _number_list("p_grid", raw["p_grid"], positive=True)
    if "cost_grid" in raw:
        kwargs["cost_grid"] = _number_list("cost_grid", raw["cost_grid"], nonneg=True)
    if "curve_fractions" in raw:
        fr = _number_list("curve_fractions", raw["curve_fractions"], nonneg=True)
        if any(f >= 1 for f in fr):
            raise ConfigValidationError("curve_fractions", "fractions must lie in [0, 1)")
        kwargs["curve_fractions"] = fr
    if "wealth_samples" in raw:
        ws = _check_type("wealth_samples", raw["wealth_samples"], 0, "int")
        if ws < 0:
            raise ConfigValidationError("wealth_samples", "must be >= 0")
        kwargs["wealth_samples"] = ws
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigValidationError("output_dir", "expected a string")
        kwargs["output_dir"] = raw["output_dir"]
    cfg = ExperimentConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    h = cfg.hedge
    if cfg.eval.n_paths < 1:
        raise ConfigValidationError("eval.n_paths", "must be >= 1")
    if h.c_ad_scaling not in C_AD_SCALINGS:
        raise ConfigValidationError("hedge.c_ad_scaling", f"must be one of {C_AD_SCALINGS}, got {h.c_ad_scaling!r}")
    if h.v0 is None and not h.v0_fraction > 0:
        raise ConfigValidationError("hedge.v0_fraction", "must be > 0")
    if cfg.spot_grid.n < 2 or not 0 < cfg.spot_grid.lo < cfg.spot_grid.hi:
        raise ConfigValidationError("spot_grid", "need 0 < lo < hi and n >= 2")
    try:
        for p in cfg.p_grid:
            for c in cfg.cost_grid:
                cfg.hedge_config(p, c)
    except ValueError as exc:
        msg = str(exc)
        key = msg.split(" ")[0].split("=")[0]
        raise ConfigValidationError(f"hedge.{key}", msg) from None


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigFileError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        return config_from_dict({})
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(raw)
