"""Terrain-aware navigation: traversability maps, sampling planner, adaptive MPC."""

__version__ = "0.1.0"
