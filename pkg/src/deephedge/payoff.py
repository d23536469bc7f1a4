"""Call payoff, shortfall loss family and Black-Scholes closed forms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class CallClaim:
    strike: float = 110.0

    def __post_init__(self):
        if not self.strike > 0:
            raise ValueError(f"strike must be > 0, got {self.strike}")

    def payoff(self, s_terminal):
        return call_payoff(s_terminal, self)


@dataclass(frozen=True)
class LossSpec:
    """Lower-partial-moment loss ``x**p / p`` applied to the shortfall."""

    p: float = 1.0

    def __post_init__(self):
        if not self.p > 0:
            raise ValueError(f"p must be > 0, got {self.p}")

    def __call__(self, shortfall):
        return np.asarray(shortfall, dtype=float) ** self.p / self.p

    def derivative(self, shortfall):
        """d/dx of x**p/p for x > 0; 0 at x <= 0 (no shortfall, no gradient)."""
        x = np.asarray(shortfall, dtype=float)
        safe = np.where(x > 0, x, 1.0)
        return np.where(x > 0, safe ** (self.p - 1.0), 0.0)


def call_payoff(s_terminal, claim: CallClaim):
    return np.maximum(np.asarray(s_terminal, dtype=float) - claim.strike, 0.0)


def shortfall_loss(h, v_terminal, spec: LossSpec):
    shortfall = np.maximum(np.asarray(h, dtype=float) - v_terminal, 0.0)
    return spec(shortfall)


def norm_cdf(x):
    """Standard normal CDF as ``erfc(-x/sqrt 2)/2``.

    The erfc form keeps full relative accuracy in the lower tail, where
    ``(1 + erf(x/sqrt 2))/2`` cancels.
    """
    return 0.5 * erfc(-np.asarray(x, dtype=float) / SQRT2)


def _d1_d2(spot, strike, r, sigma, tau):
    vol = sigma * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (r + 0.5 * sigma**2) * tau) / vol
    return d1, d1 - vol


def bs_price(spot, claim: CallClaim, r: float, sigma: float, tau):
    spot = np.asarray(spot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    spot, tau = np.broadcast_arrays(spot, tau)
    out = np.array(np.maximum(spot - claim.strike, 0.0), dtype=float)
    live = tau > 0
    if np.any(live):
        s, t = spot[live], tau[live]
        d1, d2 = _d1_d2(s, claim.strike, r, sigma, t)
        out[live] = s * norm_cdf(d1) - claim.strike * np.exp(-r * t) * norm_cdf(d2)
    return out[()] if out.ndim == 0 else out


def bs_delta(spot, claim: CallClaim, r: float, sigma: float, tau):
    """Call delta; at expiry 1 ITM, 0 OTM, 0.5 exactly at the strike."""
    spot = np.asarray(spot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    spot, tau = np.broadcast_arrays(spot, tau)
    out = np.array(np.where(spot > claim.strike, 1.0, np.where(spot < claim.strike, 0.0, 0.5)), dtype=float)
    live = tau > 0
    if np.any(live):
        d1, _ = _d1_d2(spot[live], claim.strike, r, sigma, tau[live])
        out[live] = norm_cdf(d1)
    return out[()] if out.ndim == 0 else out
