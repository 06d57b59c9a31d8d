"""Contextual causal Bayesian optimisation over mixed policy scopes."""

__version__ = "0.1.0"
