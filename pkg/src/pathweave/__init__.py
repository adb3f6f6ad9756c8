"""Example-based NPC patrol path generation for grid game levels.

Fills a fixed, obstacle-laden level with paths qualitatively similar to a
small sketch: a constraint solver over overlapping sketch patterns produces
a raster, which is traced into waypoint polylines and optionally filtered,
simplified and smoothed, all obstacle-aware.
"""

from .ingest import LevelMap, SketchImage, load_moving_ai_map, load_sketch, parse_moving_ai_map
from .model import Grid, Palette, Pattern, PatternCell, PatternSet, SolverConfig, TileClass
from .postprocess import Path, PathSet, Waypoint
from .solver import RunResult, RunStatus, run

__all__ = [
    "Grid",
    "LevelMap",
    "Palette",
    "Path",
    "PathSet",
    "Pattern",
    "PatternCell",
    "PatternSet",
    "RunResult",
    "RunStatus",
    "SketchImage",
    "SolverConfig",
    "TileClass",
    "Waypoint",
    "load_moving_ai_map",
    "load_sketch",
    "parse_moving_ai_map",
    "run",
]
