"""Exact solutions of quadratic ODE systems that become linear under a
generalized inversion ``y = x / (x^T B x)``."""

__version__ = "0.1.0"
