"""Terrain generation, kinematic simulation and episode metrics."""

from .metrics import EpisodeResult, compute_metrics
from .simulator import SimConfig, SimRobot, detect_stuck, run_episode, sim_step, straight_path
from .terrain import Terrain, TerrainSpec, difficulty_level, generate_terrain, sill_scenario

__all__ = ["EpisodeResult", "compute_metrics", "SimConfig", "SimRobot", "detect_stuck", "run_episode",
           "sim_step", "straight_path", "Terrain", "TerrainSpec", "difficulty_level", "generate_terrain",
           "sill_scenario"]
