"""Consensus-based decentralized SGD with dynamic backup workers."""

__version__ = "0.1.0"
