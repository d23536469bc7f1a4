"""Small ReLU multilayer perceptrons and their flat binary layout."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad

HIDDEN = (21, 21)
LAYER_SIZES = (1, *HIDDEN, 1)


@dataclass
class MlpParams:
    """Weights ``W[l]`` have shape ``(fan_out, fan_in)``; layer ``l`` maps ``h -> W[l] @ h + b[l]``."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {l}: weight {w.shape} / bias {b.shape} mismatch")
            if l and w.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: fan_in {w.shape[1]} != previous fan_out")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[1], *(w.shape[0] for w in self.weights))

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flatten(self) -> np.ndarray:
        """Layer-major: each layer's row-major weights, then its bias."""
        return np.concatenate([a.ravel() for a in self.arrays()])

    @classmethod
    def unflatten(cls, flat: np.ndarray, layer_sizes: Sequence[int]) -> "MlpParams":
        flat = np.asarray(flat, dtype=float)
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
            weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in).copy())
            pos += fan_in * fan_out
            biases.append(flat[pos : pos + fan_out].copy())
            pos += fan_out
        if pos != flat.size:
            raise ValueError(f"expected {pos} parameters, got {flat.size}")
        return cls(weights, biases)

    def to_bytes(self) -> bytes:
        return self.flatten().astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes, layer_sizes: Sequence[int]) -> "MlpParams":
        return cls.unflatten(np.frombuffer(blob, dtype="<f8"), layer_sizes)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


def mlp_init(layer_sizes: Sequence[int] = LAYER_SIZES, seed: int = 0) -> MlpParams:
    if not layer_sizes or len(layer_sizes) < 2:
        raise ValueError("layer_sizes needs an input and at least one output size")
    if any(int(s) < 1 for s in layer_sizes):
        raise ValueError(f"layer sizes must be >= 1, got {list(layer_sizes)}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(glorot_uniform(fan_in, fan_out, rng))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def mlp_forward(params: MlpParams, x, tape: ad.Tape) -> ad.Var:
    """Record affine -> ReLU -> ... -> affine on ``tape``; scalar input and output.

    Parameters become tape leaves (one set per parameter array per tape); read
    their gradients back with ``tape.grad_of(array, adjoints)``.
    """
    if params.layer_sizes[0] != 1 or params.layer_sizes[-1] != 1:
        raise ValueError(f"expected scalar in/out network, got sizes {params.layer_sizes}")
    xv = x.value if isinstance(x, ad.Var) else x
    if not np.isfinite(xv):
        raise ValueError(f"non-finite network input {xv}")
    h = [x if isinstance(x, ad.Var) else tape.leaf(x)]
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        W = tape.param_leaves(w)
        bb = tape.param_leaves(b)
        out = []
        for j in range(w.shape[0]):
            acc = ad.total([W[j, i] * h[i] for i in range(w.shape[1])] + [bb[j]])
            out.append(acc if l == last else ad.relu(acc))
        h = out
    return h[0]
