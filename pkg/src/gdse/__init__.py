"""Gradient descent on multi-layer networks with Gaussian features: training
with test-error estimates, and the Monte Carlo state evolution that
characterizes the iterates."""

__version__ = "0.1.0"
