"""Artifact emission: raster PNGs, waypoint JSON, SVG overlays."""

from __future__ import annotations

import json
import os

import numpy as np
from PIL import Image

from .ingest import LevelMap
from .model import Grid, Palette, TileClass
from .postprocess import PathSet


def raster_to_image(grid: Grid, palette: Palette | None = None) -> Image.Image:
    palette = palette or Palette()
    colors = np.array([palette.color_of(tc) for tc in TileClass], dtype=np.uint8)
    return Image.fromarray(colors[grid.a], mode="RGB")


def write_raster_png(grid: Grid, path: str | os.PathLike, palette: Palette | None = None) -> None:
    raster_to_image(grid, palette).save(path, format="PNG")


def write_snapshot_png(rgb: np.ndarray, path: str | os.PathLike) -> None:
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def waypoints_to_json(ps: PathSet) -> str:
    """Serialize paths as JSON with fixed 6-decimal coordinates.

    The fixed-point formatting keeps output byte-stable across runs, which
    the determinism checks rely on.
    """
    stage = ps.stage
    entries = []
    for p in ps.paths:
        pts = ",".join(f"[{pt.x:.6f},{pt.y:.6f}]" for pt in p.points)
        closed = "true" if p.closed else "false"
        entries.append(f'{{"closed":{closed},"points":[{pts}],"stage":"{stage}"}}')
    return "[" + ",".join(entries) + "]\n"


def write_waypoints_json(ps: PathSet, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(waypoints_to_json(ps))


def overlay_svg(level: LevelMap, ps: PathSet, cell: int = 10) -> str:
    """Obstacles as filled squares, paths as polylines/polygons."""
    w, h = level.width * cell, level.height * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
        f'viewBox="0 0 {w} {h}">',
        f'<rect width="{w}" height="{h}" fill="#ffffff"/>',
    ]
    obst = np.argwhere(level.grid.a == TileClass.OBSTACLE)
    for j, i in obst:
        parts.append(
            f'<rect x="{i * cell}" y="{j * cell}" width="{cell}" height="{cell}" fill="#cc3333"/>'
        )
    for p in ps.paths:
        pts = " ".join(f"{pt.x * cell:.2f},{pt.y * cell:.2f}" for pt in p.points)
        tag = "polygon" if p.closed else "polyline"
        parts.append(
            f'<{tag} points="{pts}" fill="none" stroke="#111111" stroke-width="{cell / 4:.2f}" '
            f'stroke-linejoin="round" stroke-linecap="round"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_overlay_svg(level: LevelMap, ps: PathSet, path: str | os.PathLike, cell: int = 10) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(overlay_svg(level, ps, cell=cell))


def write_json(payload: dict, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
