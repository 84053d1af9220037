"""Stateful-contract channels: a simulated ledger plus the off-chain protocols that run on it."""

__version__ = "0.1.0"
