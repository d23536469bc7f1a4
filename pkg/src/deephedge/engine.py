"""Differentiable discrete-time hedging: roll-forward, loss, training, evaluation."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from . import kernels
from .kernels import FROZEN
from .market import MarketParams, PathBatch, sample_paths
from .nn import LAYER_SIZES, MlpParams, glorot_uniform, mlp_forward
from .optim import AdamState, adam_step
from .payoff import CallClaim, LossSpec, bs_price, call_payoff

log = logging.getLogger(__name__)

TRAIN_STREAM = 0
EVAL_STREAM = 1
PREPROCESSING = "log(spot / s0)"

# f(step index, time, spots of shape (n_paths,)) -> positions of shape (n_paths,)
StrategyFn = Callable[[int, float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class HedgeConfig:
    v0: float
    bankruptcy_bound: float = -100.0
    c_cost: float = 0.0
    c_ad: float = 1.0
    loss: LossSpec = field(default_factory=LossSpec)
    bankruptcy_eps: float = 1e-9
    exponent_clamp: float = 50.0
    charge_initial_position: bool = False

    def __post_init__(self):
        if not self.bankruptcy_bound < 0:
            raise ValueError(f"bankruptcy_bound must be < 0, got {self.bankruptcy_bound}")
        if not self.bankruptcy_eps > 0:
            raise ValueError(f"bankruptcy_eps must be > 0, got {self.bankruptcy_eps}")
        if not self.c_cost >= 0:
            raise ValueError(f"c_cost must be >= 0, got {self.c_cost}")
        if not self.c_ad >= 0:
            raise ValueError(f"c_ad must be >= 0, got {self.c_ad}")
        if not self.exponent_clamp > 0:
            raise ValueError(f"exponent_clamp must be > 0, got {self.exponent_clamp}")
        if not self.v0 - self.bankruptcy_bound > self.bankruptcy_eps:
            raise ValueError(f"v0={self.v0} must lie above the bankruptcy bound {self.bankruptcy_bound}")


def default_v0(market: MarketParams, claim: CallClaim, fraction: float = 0.5) -> float:
    """``fraction`` of the zero-rate Black-Scholes price at inception."""
    return float(fraction * bs_price(market.s0, claim, 0.0, market.sigma, market.maturity))


class StrategyStack:
    """One MLP per rebalancing time, stored as stacked arrays.

    Layer ``l`` weights have shape ``(n_steps, fan_out, fan_in)``.  The network
    for step ``k`` reads ``log(S_k / s0)`` and returns the position held over
    ``(t_k, t_{k+1}]``.
    """

    def __init__(self, weights: Sequence[np.ndarray], biases: Sequence[np.ndarray], s0: float):
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.s0 = float(s0)
        n = self.weights[0].shape[0]
        for w, b in zip(self.weights, self.biases):
            if w.shape[0] != n or b.shape != w.shape[:2]:
                raise ValueError(f"inconsistent stack shapes {w.shape} / {b.shape}")

    @classmethod
    def init(cls, n_steps: int, s0: float, seed: int = 0, layer_sizes=LAYER_SIZES) -> "StrategyStack":
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 7])))
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(glorot_uniform(fan_in, fan_out, rng, shape=(n_steps, fan_out, fan_in)))
            biases.append(np.zeros((n_steps, fan_out)))
        return cls(weights, biases, s0)

    @classmethod
    def from_networks(cls, networks: Sequence[MlpParams], s0: float) -> "StrategyStack":
        weights = [np.stack([net.weights[l] for net in networks]) for l in range(len(networks[0].weights))]
        biases = [np.stack([net.biases[l] for net in networks]) for l in range(len(networks[0].biases))]
        return cls(weights, biases, s0)

    @property
    def n_steps(self) -> int:
        return self.weights[0].shape[0]

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[2], *(w.shape[1] for w in self.weights))

    def network(self, k: int) -> MlpParams:
        return MlpParams([w[k] for w in self.weights], [b[k] for b in self.biases])

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_params(self, params: Sequence[np.ndarray]) -> "StrategyStack":
        return StrategyStack(params[0::2], params[1::2], self.s0)

    def features(self, spots) -> np.ndarray:
        return np.log(np.asarray(spots, dtype=float) / self.s0)

    def positions(self, prices: np.ndarray, chunk: int = 4096) -> np.ndarray:
        """Raw network positions for every path and step, shape ``(n_paths, n_steps)``."""
        x = self.features(prices[:, : self.n_steps])
        out = np.empty_like(x)
        for start in range(0, x.shape[0], chunk):
            out[start : start + chunk] = kernels.stack_forward(self.weights, self.biases, x[start : start + chunk])[0]
        return out

    def position_at(self, k: int, spots) -> np.ndarray:
        spots = np.atleast_1d(np.asarray(spots, dtype=float))
        x = np.zeros((spots.size, self.n_steps))
        x[:, k] = self.features(spots)
        w = [a[k : k + 1] for a in self.weights]
        b = [a[k : k + 1] for a in self.biases]
        return kernels.stack_forward(w, b, x[:, k : k + 1])[0][:, 0]

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for k in range(self.n_steps):
            h.update(self.network(k).to_bytes())
        return h.hexdigest()

    def save(self, directory: Union[str, Path], extra: Optional[dict] = None) -> Path:
        """One ``step_XXX.bin`` blob per network (flat little-endian float64) plus ``manifest.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        files = []
        for k in range(self.n_steps):
            name = f"step_{k:03d}.bin"
            (directory / name).write_bytes(self.network(k).to_bytes())
            files.append(name)
        manifest = {
            "format": "deephedge.strategy_stack/1",
            "layer_sizes": list(self.layer_sizes),
            "n_steps": self.n_steps,
            "s0": self.s0,
            "preprocessing": PREPROCESSING,
            "activation": "relu hidden, identity output",
            "dtype": "<f8",
            "layout": "per layer: weights (fan_out x fan_in, row-major) then bias",
            "files": files,
            "sha256": self.content_hash(),
        }
        if extra:
            manifest.update(extra)
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "StrategyStack":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        sizes = manifest["layer_sizes"]
        nets = [MlpParams.from_bytes((directory / f).read_bytes(), sizes) for f in manifest["files"]]
        stack = cls.from_networks(nets, manifest["s0"])
        if stack.content_hash() != manifest["sha256"]:
            raise ValueError(f"content hash mismatch in {directory}")
        return stack


@dataclass(eq=False)
class SimResult:
    wealth: np.ndarray
    positions: np.ndarray
    bankrupt_at: np.ndarray  # first wealth index at the bound, -1 if never
    running_min: np.ndarray
    codes: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.wealth[:, -1]


@dataclass(frozen=True)
class LossBreakdown:
    l_p: float
    l_cost: float
    l_ad: float

    @property
    def total(self) -> float:
        return self.l_p + self.l_cost + self.l_ad

    def as_dict(self) -> dict:
        return {"l_p": self.l_p, "l_cost": self.l_cost, "l_ad": self.l_ad, "total": self.total}


def raw_positions(strategy, paths: PathBatch) -> np.ndarray:
    if isinstance(strategy, StrategyStack):
        if strategy.n_steps != paths.n_steps:
            raise ValueError(f"strategy has {strategy.n_steps} steps, paths have {paths.n_steps}")
        return strategy.positions(paths.prices)
    out = np.empty((paths.n_paths, paths.n_steps))
    for k in range(paths.n_steps):
        out[:, k] = strategy(k, k * paths.dt, paths.prices[:, k])
    return out


def _market_of(paths: PathBatch, market: Optional[MarketParams]) -> MarketParams:
    market = market or paths.market
    if market is None:
        raise ValueError("market parameters are needed for the geometric bankruptcy branch")
    return market


def roll_forward(paths: PathBatch, strategy, config: HedgeConfig, market: Optional[MarketParams] = None,
                 positions: Optional[np.ndarray] = None) -> SimResult:
    """Simulate the value process under ``strategy`` (a StrategyStack or a StrategyFn).

    ``positions`` may be passed to skip strategy evaluation.
    """
    market = _market_of(paths, market)
    if positions is None:
        positions = raw_positions(strategy, paths)
    positions = np.ascontiguousarray(positions, dtype=float)
    if positions.shape != paths.increments.shape:
        raise ValueError(f"positions shape {positions.shape} != {paths.increments.shape}")
    wealth, pos, codes, bankrupt_at = kernels.wealth_forward(
        paths.prices, paths.increments, positions, float(config.v0), float(config.bankruptcy_bound),
        float(market.mu), float(market.sigma), float(paths.dt), float(config.bankruptcy_eps),
        float(config.exponent_clamp),
    )
    return SimResult(wealth, pos, bankrupt_at, wealth.min(axis=1), codes)


def _per_path_cost(positions, prices, config):
    traded = np.abs(np.diff(positions, axis=1)) * prices[:, 1:-1]
    cost = traded.sum(axis=1)
    if config.charge_initial_position:
        cost = cost + np.abs(positions[:, 0]) * prices[:, 0]
    return cost


def compute_loss(sim: SimResult, paths: PathBatch, claim: CallClaim, config: HedgeConfig) -> LossBreakdown:
    h = claim.payoff(paths.terminal)
    l_p = float(np.mean(config.loss(np.maximum(h - sim.terminal, 0.0))))
    l_cost = config.c_cost * float(np.mean(_per_path_cost(sim.positions, paths.prices, config)))
    l_ad = config.c_ad * float(np.mean(np.maximum(-sim.running_min, 0.0)))
    return LossBreakdown(l_p, l_cost, l_ad)


def position_adjoints(sim: SimResult, paths: PathBatch, claim: CallClaim, config: HedgeConfig,
                      market: MarketParams) -> np.ndarray:
    """d(total loss)/d(raw position) for every path and step."""
    n = paths.n_paths
    wealth_adj = np.zeros_like(sim.wealth)
    h = claim.payoff(paths.terminal)
    wealth_adj[:, -1] = -config.loss.derivative(h - sim.terminal) / n
    if config.c_ad > 0:
        idx = np.argmin(sim.wealth, axis=1)
        hit = sim.running_min < 0
        wealth_adj[np.nonzero(hit)[0], idx[hit]] -= config.c_ad / n
    pos_adj = kernels.wealth_backward(
        paths.prices, paths.increments, sim.wealth, sim.positions, sim.codes, wealth_adj,
        float(config.bankruptcy_bound), float(market.mu), float(market.sigma), float(paths.dt),
        float(config.exponent_clamp),
    )
    if config.c_cost > 0:
        slope = np.sign(np.diff(sim.positions, axis=1)) * paths.prices[:, 1:-1] * (config.c_cost / n)
        pos_adj[:, 1:] += slope
        pos_adj[:, :-1] -= slope
        if config.charge_initial_position:
            pos_adj[:, 0] += np.sign(sim.positions[:, 0]) * paths.prices[:, 0] * (config.c_cost / n)
    pos_adj[sim.codes == FROZEN] = 0.0
    return pos_adj


def loss_and_grad(stack: StrategyStack, paths: PathBatch, claim: CallClaim, config: HedgeConfig,
                  market: Optional[MarketParams] = None):
    """Total loss breakdown and its gradient w.r.t. ``stack.params()``."""
    market = _market_of(paths, market)
    x = stack.features(paths.prices[:, : stack.n_steps])
    raw, cache = kernels.stack_forward(stack.weights, stack.biases, x)
    sim = roll_forward(paths, stack, config, market, positions=raw)
    loss = compute_loss(sim, paths, claim, config)
    pos_adj = position_adjoints(sim, paths, claim, config, market)
    gw, gb = kernels.stack_backward(stack.weights, cache, pos_adj)
    grads = []
    for w, b in zip(gw, gb):
        grads += [w, b]
    return loss, grads, sim


def loss_on_tape(stack: StrategyStack, paths: PathBatch, claim: CallClaim, config: HedgeConfig,
                 market: Optional[MarketParams] = None):
    """Reference route: the whole pipeline recorded on a scalar tape.

    Slow (one node per scalar operation); intended for small batches.
    Returns ``(tape, total_node, grads_fn)`` where ``grads_fn(adjoints)``
    maps backward output to arrays shaped like ``stack.params()``.
    """
    market = _market_of(paths, market)
    tape = ad.Tape()
    nets = [stack.network(k) for k in range(stack.n_steps)]
    B = config.bankruptcy_bound
    half_var = 0.5 * market.sigma**2 * paths.dt
    n, m = paths.increments.shape
    lp_terms, cost_terms, ad_terms = [], [], []
    for i in range(n):
        S = paths.prices[i]
        v = tape.leaf(config.v0)
        running_min = v
        dead = False
        prev_k = None
        for k in range(m):
            if dead:
                K = tape.leaf(0.0)
            else:
                K = mlp_forward(nets[k], math.log(S[k] / stack.s0), tape)
            if prev_k is not None:
                cost_terms.append(ad.absolute(K - prev_k) * S[k])
            elif config.charge_initial_position:
                cost_terms.append(ad.absolute(K) * S[0])
            prev_k = K
            if dead:
                nv = tape.leaf(B)
            else:
                cand = v + K * (S[k + 1] - S[k])
                if cand.value >= B:
                    nv = cand
                elif abs(v.value) < kernels.TINY_WEALTH:
                    nv = tape.leaf(B)
                else:
                    pi = K * S[k] / v
                    z = pi * (market.mu * paths.dt + market.sigma * paths.increments[i, k]) - pi * pi * half_var
                    z = ad.clip(z, -config.exponent_clamp, config.exponent_clamp)
                    nv = (v - B) * ad.exp(z) + B
                if nv.value - B <= config.bankruptcy_eps:
                    nv = tape.leaf(B)
                    dead = True
            v = nv
            running_min = ad.minimum(running_min, v)
        h = float(claim.payoff(S[-1]))
        shortfall = ad.maximum(h - v, 0.0)
        lp_terms.append(ad.power(shortfall, config.loss.p) * (1.0 / config.loss.p))
        ad_terms.append(ad.maximum(-running_min, 0.0))
    total = ad.total(lp_terms) * (1.0 / n)
    if cost_terms and config.c_cost > 0:
        total = total + ad.total(cost_terms) * (config.c_cost / n)
    if config.c_ad > 0:
        total = total + ad.total(ad_terms) * (config.c_ad / n)

    def grads_fn(adjoints):
        out = []
        for l in range(len(stack.weights)):
            for arrays, stacked in ((lambda net: net.weights[l], stack.weights[l]),
                                    (lambda net: net.biases[l], stack.biases[l])):
                g = np.zeros_like(stacked)
                for k, net in enumerate(nets):
                    a = arrays(net)
                    if id(a) in tape._param_leaves:
                        g[k] = tape.grad_of(a, adjoints)
                out.append(g)
        return out

    return tape, total, grads_fn


@dataclass(frozen=True)
class TrainSettings:
    batch_size: int = 256
    n_iterations: int = 5000
    seed: int = 0
    lr: float = 0.01
    clip_norm: Optional[float] = 10.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.n_iterations < 1:
            raise ValueError(f"n_iterations must be >= 1, got {self.n_iterations}")


@dataclass(frozen=True)
class EvalSettings:
    n_paths: int = 100_000
    seed: int = 0


class TrainingDivergence(RuntimeError):
    def __init__(self, iteration: int, component: str, value: float, history: np.ndarray):
        super().__init__(f"non-finite {component}={value} at iteration {iteration}")
        self.iteration = iteration
        self.component = component
        self.history = history


@dataclass
class TrainResult:
    stack: StrategyStack
    history: np.ndarray  # columns: iteration, l_p, l_cost, l_ad, total
    optimizer: AdamState


HISTORY_COLUMNS = ("iteration", "l_p", "l_cost", "l_ad", "total")


def train(market: MarketParams, claim: CallClaim, config: HedgeConfig, training: TrainSettings,
          stack: Optional[StrategyStack] = None, progress: Optional[Callable[[int, LossBreakdown], None]] = None
          ) -> TrainResult:
    """Adam on fresh mini-batches; batch ``it`` uses seed ``(seed, TRAIN_STREAM, it)``."""
    if stack is None:
        stack = StrategyStack.init(market.n_steps, market.s0, seed=training.seed)
    params = stack.params()
    state = AdamState.zeros_like(params, lr=training.lr, clip_norm=training.clip_norm)
    history = np.empty((training.n_iterations, len(HISTORY_COLUMNS)))
    for it in range(training.n_iterations):
        paths = sample_paths(market, training.batch_size, (training.seed, TRAIN_STREAM, it))
        loss, grads, _ = loss_and_grad(stack, paths, claim, config, market)
        history[it] = (it, loss.l_p, loss.l_cost, loss.l_ad, loss.total)
        for name, value in loss.as_dict().items():
            if not math.isfinite(value):
                raise TrainingDivergence(it, name, value, history[: it + 1])
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergence(it, "gradient", float("nan"), history[: it + 1])
        params, state = adam_step(params, grads, state)
        stack = stack.with_params(params)
        if progress is not None:
            progress(it, loss)
    return TrainResult(stack, history, state)


@dataclass
class EvalReport:
    loss: LossBreakdown
    summary: dict
    sim: SimResult
    paths: PathBatch


def eval_paths(market: MarketParams, settings: EvalSettings) -> PathBatch:
    return sample_paths(market, settings.n_paths, (settings.seed, EVAL_STREAM))


def summarize(sim: SimResult) -> dict:
    qs = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
    vt = sim.terminal
    mins = sim.running_min
    out = {
        "n_paths": int(vt.size),
        "terminal_mean": float(vt.mean()),
        "terminal_std": float(vt.std(ddof=1)) if vt.size > 1 else 0.0,
        "min_wealth_mean": float(mins.mean()),
        "admissibility_violation_mean": float(np.maximum(-mins, 0.0).mean()),
        "bankruptcy_frequency": float(np.mean(sim.bankrupt_at >= 0)),
    }
    for q, a, b in zip(qs, np.quantile(vt, qs), np.quantile(mins, qs)):
        out[f"terminal_q{int(q * 100):02d}"] = float(a)
        out[f"min_wealth_q{int(q * 100):02d}"] = float(b)
    return out


def evaluate(strategy, market: MarketParams, claim: CallClaim, config: HedgeConfig, settings: EvalSettings,
             paths: Optional[PathBatch] = None) -> EvalReport:
    """Loss and distribution summaries on a held-out batch (seed stream ``EVAL_STREAM``)."""
    if paths is None:
        paths = eval_paths(market, settings)
    sim = roll_forward(paths, strategy, config, market)
    return EvalReport(compute_loss(sim, paths, claim, config), summarize(sim), sim, paths)


def config_dict(obj) -> dict:
    return asdict(obj)
