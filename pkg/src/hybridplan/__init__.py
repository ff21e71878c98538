"""Solver-first hybrid planner: classical STRIPS search with an advisor for plan
review and domain repair, backed by persistent plan/fix caches."""

__version__ = "0.1.0"
