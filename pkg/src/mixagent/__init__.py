"""Desk-scale data-mixing agent: trajectory sampling, feedback, offline RL and guided training."""

__version__ = "0.1.0"
