"""Bellman operators, exact DP solvers, property checks and a tabular
Q-learning harness for classic-control systems."""

__version__ = "0.1.0"
