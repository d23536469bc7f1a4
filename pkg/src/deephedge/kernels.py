"""Hot kernels: wealth recursion (forward and reverse) and batched MLP stacks.

The wealth recursion is sequential in time, so it is the part that benefits
from compilation.  With numba available (and ``DEEPHEDGE_PURE_NUMPY`` unset)
the per-path loops below are jitted; otherwise a numpy version vectorized
across paths is used.  Both produce the same numbers up to libm rounding.

Step codes stored per (path, step):

* ``PLAIN``     accepted self-financing update ``V + K dS``
* ``GEOM``      candidate fell below the bound; geometric update applied
* ``GEOM_CLAMPED``  as ``GEOM`` with the exponent clamped (no gradient through it)
* ``BANKRUPT``  wealth reached the bound during this step
* ``FROZEN``    already bankrupt; position 0, wealth at the bound
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import HAS_NUMBA, njit

PLAIN, GEOM, GEOM_CLAMPED, BANKRUPT, FROZEN = 0, 1, 2, 3, 4
TINY_WEALTH = 1e-12


@njit(cache=True)
def _wealth_forward_jit(prices, increments, raw_positions, v0, bound, mu, sigma, dt, eps, clamp):
    n, m = raw_positions.shape
    wealth = np.empty((n, m + 1))
    positions = np.zeros((n, m))
    codes = np.empty((n, m), dtype=np.int8)
    bankrupt_at = np.full(n, -1, dtype=np.int64)
    half_var = 0.5 * sigma * sigma * dt
    for i in range(n):
        v = v0
        wealth[i, 0] = v
        dead = False
        for k in range(m):
            if dead:
                codes[i, k] = FROZEN
                wealth[i, k + 1] = bound
                continue
            K = raw_positions[i, k]
            positions[i, k] = K
            s = prices[i, k]
            cand = v + K * (prices[i, k + 1] - s)
            code = PLAIN
            if cand >= bound:
                nv = cand
            elif abs(v) < TINY_WEALTH:
                nv = bound
                code = BANKRUPT
            else:
                pi = K * s / v
                z = pi * (mu * dt + sigma * increments[i, k]) - pi * pi * half_var
                code = GEOM
                if z > clamp:
                    z = clamp
                    code = GEOM_CLAMPED
                elif z < -clamp:
                    z = -clamp
                    code = GEOM_CLAMPED
                nv = (v - bound) * math.exp(z) + bound
            if nv - bound <= eps:
                nv = bound
                code = BANKRUPT
            codes[i, k] = code
            if code == BANKRUPT:
                dead = True
                bankrupt_at[i] = k + 1
            wealth[i, k + 1] = nv
            v = nv
    return wealth, positions, codes, bankrupt_at


@njit(cache=True)
def _wealth_backward_jit(prices, increments, wealth, positions, codes, wealth_adj, bound, mu, sigma, dt, clamp):
    n, m = positions.shape
    pos_adj = np.zeros((n, m))
    half_var = 0.5 * sigma * sigma * dt
    for i in range(n):
        g = wealth_adj[i, m]
        for k in range(m - 1, -1, -1):
            code = codes[i, k]
            gprev = 0.0
            if code == PLAIN:
                gprev = g
                pos_adj[i, k] = g * (prices[i, k + 1] - prices[i, k])
            elif code == GEOM or code == GEOM_CLAMPED:
                v = wealth[i, k]
                K = positions[i, k]
                s = prices[i, k]
                a = mu * dt + sigma * increments[i, k]
                pi = K * s / v
                z = pi * a - pi * pi * half_var
                if code == GEOM_CLAMPED:
                    z = clamp if z > 0 else -clamp
                e = math.exp(z)
                gprev = g * e
                if code == GEOM:
                    common = g * (v - bound) * e * (a - 2.0 * pi * half_var)
                    gprev += common * (-pi / v)
                    pos_adj[i, k] = common * s / v
            g = gprev + wealth_adj[i, k]
    return pos_adj


def _wealth_forward_np(prices, increments, raw_positions, v0, bound, mu, sigma, dt, eps, clamp):
    n, m = raw_positions.shape
    wealth = np.empty((n, m + 1))
    positions = np.zeros((n, m))
    codes = np.empty((n, m), dtype=np.int8)
    bankrupt_at = np.full(n, -1, dtype=np.int64)
    half_var = 0.5 * sigma * sigma * dt
    v = np.full(n, float(v0))
    wealth[:, 0] = v
    alive = np.ones(n, dtype=bool)
    for k in range(m):
        K = np.where(alive, raw_positions[:, k], 0.0)
        positions[:, k] = K
        s = prices[:, k]
        cand = v + K * (prices[:, k + 1] - s)
        plain = cand >= bound
        tiny = np.abs(v) < TINY_WEALTH
        geo = ~plain & ~tiny
        v_safe = np.where(geo, v, 1.0)
        pi = np.where(geo, K * s / v_safe, 0.0)
        z = pi * (mu * dt + sigma * increments[:, k]) - pi * pi * half_var
        clamped = geo & (np.abs(z) > clamp)
        z = np.clip(z, -clamp, clamp)
        nv = np.where(plain, cand, np.where(geo, (v - bound) * np.exp(z) + bound, bound))
        code = np.where(plain, PLAIN, np.where(clamped, GEOM_CLAMPED, np.where(geo, GEOM, BANKRUPT)))
        broke = alive & ((nv - bound <= eps) | (~plain & tiny))
        code = np.where(broke, BANKRUPT, code)
        code = np.where(alive, code, FROZEN)
        nv = np.where(broke | ~alive, bound, nv)
        codes[:, k] = code
        bankrupt_at[broke] = k + 1
        alive &= ~broke
        wealth[:, k + 1] = nv
        v = nv
    return wealth, positions, codes, bankrupt_at


def _wealth_backward_np(prices, increments, wealth, positions, codes, wealth_adj, bound, mu, sigma, dt, clamp):
    n, m = positions.shape
    pos_adj = np.zeros((n, m))
    half_var = 0.5 * sigma * sigma * dt
    g = wealth_adj[:, m].copy()
    for k in range(m - 1, -1, -1):
        code = codes[:, k]
        plain = code == PLAIN
        geo = code == GEOM
        geo_any = geo | (code == GEOM_CLAMPED)
        v = np.where(geo_any, wealth[:, k], 1.0)
        K = positions[:, k]
        s = prices[:, k]
        a = mu * dt + sigma * increments[:, k]
        pi = np.where(geo_any, K * s / v, 0.0)
        z = pi * a - pi * pi * half_var
        z = np.where(code == GEOM_CLAMPED, np.where(z > 0, clamp, -clamp), z)
        e = np.exp(np.clip(z, -clamp, clamp))
        common = np.where(geo, g * (v - bound) * e * (a - 2.0 * pi * half_var), 0.0)
        gprev = np.where(plain, g, np.where(geo_any, g * e + common * (-pi / v), 0.0))
        pos_adj[:, k] = np.where(plain, g * (prices[:, k + 1] - s), common * s / v)
        g = gprev + wealth_adj[:, k]
    return pos_adj


if HAS_NUMBA:
    wealth_forward = _wealth_forward_jit
    wealth_backward = _wealth_backward_jit
else:
    wealth_forward = _wealth_forward_np
    wealth_backward = _wealth_backward_np


# Batched MLP stacks: one network per time step, all evaluated in one pass.
# Stacked weight l has shape (n_steps, fan_out, fan_in); bias (n_steps, fan_out).
# Inputs x have shape (n_paths, n_steps).


def stack_forward(weights, biases, x):
    """Returns outputs ``(n_paths, n_steps)`` and the cached activations."""
    h = x.T[:, :, None]  # (steps, paths, 1)
    cache = [h]
    last = len(weights) - 1
    for l, (w, b) in enumerate(zip(weights, biases)):
        a = np.matmul(h, np.swapaxes(w, 1, 2)) + b[:, None, :]
        h = a if l == last else np.maximum(a, 0.0)
        cache.append(h)
    return h[:, :, 0].T, cache


def stack_backward(weights, cache, out_adj):
    """Parameter adjoints for ``sum(out_adj * outputs)``; ReLU slope 0 at 0."""
    g = out_adj.T[:, :, None]  # (steps, paths, 1)
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        h_in = cache[l]
        gw[l] = np.matmul(np.swapaxes(g, 1, 2), h_in)
        gb[l] = g.sum(axis=1)
        if l:
            g = np.matmul(g, weights[l]) * (cache[l] > 0)
    return gw, gb
