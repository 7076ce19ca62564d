"""Quasi-Bayesian spike-and-slab inference: sampling, variational fits and diagnostics."""

__version__ = "0.1.0"
