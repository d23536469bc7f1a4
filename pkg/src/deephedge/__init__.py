"""Deep partial hedging: per-step neural strategies minimizing shortfall loss."""
__version__ = "0.1.0"
