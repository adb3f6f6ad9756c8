"""Raster-to-waypoint conversion and the obstacle-aware path pipeline.

Stages run in a fixed order: trace, filter, simplify (RDP), smooth
(Chaikin). Every geometric obstacle test goes through the same exact
supercover predicate, so the simplifier and smoother cannot disagree about
what counts as touching an obstacle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple

import numpy as np

from .model import Grid, TileClass


class Waypoint(NamedTuple):
    """Continuous position in cell units; cell centers sit at integer + 0.5."""

    x: float
    y: float


@dataclass(frozen=True)
class Path:
    points: tuple[Waypoint, ...]
    closed: bool

    def __post_init__(self) -> None:
        minimum = 3 if self.closed else 2
        if len(self.points) < minimum:
            kind = "closed" if self.closed else "open"
            raise ValueError(f"{kind} path needs at least {minimum} points")
        for a, b in zip(self.points, self.points[1:]):
            if a == b:
                raise ValueError("consecutive path points must be distinct")
        if self.closed and self.points[0] == self.points[-1]:
            raise ValueError("closed paths must not repeat the first point")

    def segments(self) -> Iterator[tuple[Waypoint, Waypoint]]:
        yield from zip(self.points, self.points[1:])
        if self.closed:
            yield self.points[-1], self.points[0]


@dataclass(frozen=True)
class PathSet:
    paths: tuple[Path, ...]
    stages: tuple[tuple[str, dict], ...] = ()
    dropped_isolated: int = 0

    @property
    def stage(self) -> str:
        return self.stages[-1][0] if self.stages else "empty"

    def with_stage(self, paths: list[Path], name: str, params: dict) -> "PathSet":
        return PathSet(
            paths=tuple(paths),
            stages=self.stages + ((name, dict(params)),),
            dropped_isolated=self.dropped_isolated,
        )


# -- exact segment/grid intersection -----------------------------------------

def _cell_range(v: Fraction, limit: int) -> range:
    """Indices i with i <= v <= i+1, clipped to [0, limit)."""
    f = math.floor(v)
    lo = f - 1 if v == f else f
    return range(max(lo, 0), min(f, limit - 1) + 1)


def supercover_cells(ax: float, ay: float, bx: float, by: float,
                     width: int, height: int) -> set[tuple[int, int]]:
    """Every grid cell whose closed unit square meets the closed segment.

    Exact rational arithmetic: float inputs are dyadic, so Fraction
    conversion is lossless and corner-grazing contacts are decided without
    any epsilon. Cells outside the grid are omitted.
    """
    fax, fay = Fraction(ax), Fraction(ay)
    fbx, fby = Fraction(bx), Fraction(by)
    dx, dy = fbx - fax, fby - fay

    ts = {Fraction(0), Fraction(1)}
    if dx:
        lo, hi = min(fax, fbx), max(fax, fbx)
        for k in range(math.ceil(lo), math.floor(hi) + 1):
            ts.add((k - fax) / dx)
    if dy:
        lo, hi = min(fay, fby), max(fay, fby)
        for k in range(math.ceil(lo), math.floor(hi) + 1):
            ts.add((k - fay) / dy)
    events = sorted(t for t in ts if 0 <= t <= 1)

    cells: set[tuple[int, int]] = set()

    def collect(t: Fraction) -> None:
        px, py = fax + t * dx, fay + t * dy
        for j in _cell_range(py, height):
            for i in _cell_range(px, width):
                cells.add((i, j))

    for t in events:
        collect(t)
    for t0, t1 in zip(events, events[1:]):
        collect((t0 + t1) / 2)
    return cells


def segment_hits_obstacle(a: Waypoint, b: Waypoint, obstacles: Grid) -> bool:
    """True when the closed segment [a, b] touches any obstacle cell's square."""
    for i, j in supercover_cells(a[0], a[1], b[0], b[1], obstacles.width, obstacles.height):
        if obstacles.a[j, i] == TileClass.OBSTACLE:
            return True
    return False


def _polyline_hits_obstacle(points: list[Waypoint], closed: bool, obstacles: Grid) -> bool:
    pairs = list(zip(points, points[1:]))
    if closed:
        pairs.append((points[-1], points[0]))
    return any(segment_hits_obstacle(a, b, obstacles) for a, b in pairs)


# -- tracing ------------------------------------------------------------------

# Neighbor scan order for trace starts: east, south, west, north.
_TRACE_ORDER = ((1, 0), (0, 1), (-1, 0), (0, -1))


def _turn_preference(heading: tuple[int, int]) -> tuple[tuple[int, int], ...]:
    dx, dy = heading
    return (dx, dy), (dy, -dx), (-dy, dx)  # straight, left, right


def trace_paths(output: Grid) -> PathSet:
    """Partition path cells into waypoint polylines.

    Walks 4-adjacent path cells; chain ends start traces first so corridors
    are not split mid-run. At junctions the walk prefers straight, then left,
    then right relative to the incoming direction; leftover branches seed
    their own traces. A loop closing back onto its start cell becomes a
    closed path. Isolated single cells are dropped and counted.
    """
    mask = output.a == TileClass.PATH
    h, w = mask.shape
    unvisited = {(int(x), int(y)) for y, x in np.argwhere(mask)}

    def open_neighbors(c: tuple[int, int]) -> list[tuple[int, int]]:
        x, y = c
        out = []
        for dx, dy in _TRACE_ORDER:
            nb = (x + dx, y + dy)
            if nb in unvisited:
                out.append(nb)
        return out

    def pick_start() -> tuple[int, int] | None:
        best_any = None
        for cell in sorted(unvisited, key=lambda c: (c[1], c[0])):
            degree = len(open_neighbors(cell))
            if degree == 1:
                return cell
            if degree > 1 and best_any is None:
                best_any = cell
        return best_any

    paths: list[Path] = []
    while True:
        start = pick_start()
        if start is None:
            break
        chain = [start]
        unvisited.discard(start)
        heading: tuple[int, int] | None = None
        while True:
            current = chain[-1]
            nbrs = open_neighbors(current)
            nxt = None
            if nbrs:
                if heading is None:
                    nxt = nbrs[0]
                else:
                    by_delta = {
                        (n[0] - current[0], n[1] - current[1]): n for n in nbrs
                    }
                    for d in _turn_preference(heading):
                        if d in by_delta:
                            nxt = by_delta[d]
                            break
                    if nxt is None:  # only a backward U-turn branch exists
                        nxt = nbrs[0]
            if nxt is None:
                closed = (
                    len(chain) >= 4
                    and abs(current[0] - start[0]) + abs(current[1] - start[1]) == 1
                    and chain[-2] != start
                )
                paths.append(
                    Path(
                        points=tuple(Waypoint(x + 0.5, y + 0.5) for x, y in chain),
                        closed=closed,
                    )
                )
                break
            heading = (nxt[0] - current[0], nxt[1] - current[1])
            chain.append(nxt)
            unvisited.discard(nxt)
    dropped = len(unvisited)
    return PathSet(paths=tuple(paths), stages=(("traced", {}),), dropped_isolated=dropped)


# -- filtering ----------------------------------------------------------------

def _point_in_polygon(px: float, py: float, pts: tuple[Waypoint, ...]) -> bool:
    """Even-odd rule with a horizontal ray towards +x."""
    inside = False
    k = len(pts)
    for i in range(k):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % k]
        if (y1 > py) != (y2 > py):
            xint = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            if px < xint:
                inside = not inside
    return inside


def path_encloses_obstacle(path: Path, obstacles: Grid) -> bool:
    if not path.closed:
        return False
    xs = [p.x for p in path.points]
    ys = [p.y for p in path.points]
    x0, x1 = math.floor(min(xs)), math.ceil(max(xs))
    y0, y1 = math.floor(min(ys)), math.ceil(max(ys))
    obst = np.argwhere(obstacles.a == TileClass.OBSTACLE)
    for j, i in obst:
        cx, cy = i + 0.5, j + 0.5
        if not (x0 <= cx <= x1 and y0 <= cy <= y1):
            continue
        if _point_in_polygon(cx, cy, path.points):
            return True
    return False


def filter_paths(ps: PathSet, min_len: int, require_obstacle_enclosure: bool,
                 obstacles: Grid) -> PathSet:
    """Drop short paths and, optionally, closed loops that enclose no obstacle.

    Length is measured in waypoints. The enclosure test is even-odd
    point-in-polygon over obstacle cell centers; open paths are never
    subject to it.
    """
    kept = []
    for p in ps.paths:
        if len(p.points) < min_len:
            continue
        if require_obstacle_enclosure and p.closed and not path_encloses_obstacle(p, obstacles):
            continue
        kept.append(p)
    return ps.with_stage(
        kept,
        "filtered",
        {"min_len": min_len, "require_obstacle_enclosure": require_obstacle_enclosure},
    )


# -- simplification (obstacle-aware RDP) ---------------------------------------

def _seg_dist_sq(p: Waypoint, a: Waypoint, b: Waypoint) -> float:
    """Squared distance from p to the closed segment [a, b]."""
    ax, ay = a
    bx, by = b
    dx, dy = bx - ax, by - ay
    if dx == 0 and dy == 0:
        return (p.x - ax) ** 2 + (p.y - ay) ** 2
    t = ((p.x - ax) * dx + (p.y - ay) * dy) / (dx * dx + dy * dy)
    t = min(1.0, max(0.0, t))
    qx, qy = ax + t * dx, ay + t * dy
    return (p.x - qx) ** 2 + (p.y - qy) ** 2


def _rdp_open(points: tuple[Waypoint, ...], epsilon: float, obstacles: Grid) -> list[Waypoint]:
    k = len(points)
    keep = [False] * k
    keep[0] = keep[-1] = True
    eps_sq = epsilon * epsilon
    stack = [(0, k - 1)]
    while stack:
        first, last = stack.pop()
        if last - first < 2:
            continue
        best, best_d = first + 1, -1.0
        for i in range(first + 1, last):
            d = _seg_dist_sq(points[i], points[first], points[last])
            if d > best_d:
                best, best_d = i, d
        # a chord crossing an obstacle is rejected even when all points fit
        if best_d > eps_sq or segment_hits_obstacle(points[first], points[last], obstacles):
            keep[best] = True
            stack.append((first, best))
            stack.append((best, last))
    return [pt for pt, k_ in zip(points, keep) if k_]


def _farthest_pair(points: tuple[Waypoint, ...]) -> tuple[int, int]:
    """First (by index order) pair of mutually farthest points, i < j."""
    a = np.array(points, dtype=np.float64)
    k = len(a)
    best = (-1.0, 0, min(1, k - 1))
    block = 512  # bound the pairwise distance matrix for long loops
    for s in range(0, k, block):
        chunk = a[s : s + block]
        d = ((chunk[:, None, :] - a[None, :, :]) ** 2).sum(axis=2)
        for bi in range(d.shape[0]):
            i = s + bi
            if i + 1 >= k:
                break
            j = int(np.argmax(d[bi, i + 1 :])) + i + 1
            dist = float(d[bi, j])
            if dist > best[0]:
                best = (dist, i, j)
    return best[1], best[2]


def simplify_path(p: Path, epsilon: float, obstacles: Grid) -> Path:
    """Obstacle-aware Ramer-Douglas-Peucker.

    Points within epsilon of the candidate chord are removed unless the
    chord touches an obstacle, in which case the farthest point is kept and
    both halves are revisited. Closed paths split at the two mutually
    farthest points and simplify each half.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if not p.closed:
        return Path(points=tuple(_rdp_open(p.points, epsilon, obstacles)), closed=False)

    i, j = _farthest_pair(p.points)
    ring = p.points[i:] + p.points[:i]
    split = j - i if j > i else j - i + len(p.points)
    half_a = ring[: split + 1]
    half_b = ring[split:] + (ring[0],)
    simp_a = _rdp_open(half_a, epsilon, obstacles)
    simp_b = _rdp_open(half_b, epsilon, obstacles)
    merged = simp_a[:-1] + simp_b[:-1]
    if len(merged) < 3:
        merged = _restore_extreme_point(half_a, half_b, merged)
    return Path(points=tuple(merged), closed=True)


def _restore_extreme_point(half_a: tuple[Waypoint, ...], half_b: tuple[Waypoint, ...],
                           merged: list[Waypoint]) -> list[Waypoint]:
    """Keep a closed path non-degenerate when both halves collapse to chords."""
    best: tuple[float, int, int] | None = None
    for hi, half in enumerate((half_a, half_b)):
        for idx in range(1, len(half) - 1):
            d = _seg_dist_sq(half[idx], half[0], half[-1])
            if best is None or d > best[0]:
                best = (d, hi, idx)
    if best is None:
        return merged
    _, hi, idx = best
    point = (half_a, half_b)[hi][idx]
    if hi == 0:
        return [merged[0], point, merged[1]]
    return [merged[0], merged[1], point]


# -- smoothing (obstacle-aware Chaikin) ----------------------------------------

def _lerp(a: Waypoint, b: Waypoint, t: float) -> Waypoint:
    return Waypoint(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t)


def _chaikin_once(points: tuple[Waypoint, ...], closed: bool, obstacles: Grid) -> list[Waypoint]:
    k = len(points)
    out: list[Waypoint] = []

    def corner(u: Waypoint, v: Waypoint, w: Waypoint) -> list[Waypoint]:
        p_in = _lerp(u, v, 0.75)
        p_out = _lerp(v, w, 0.25)
        # cutting replaces v by the chord (p_in, p_out); keep v when the
        # chord would clip an obstacle corner
        if segment_hits_obstacle(p_in, p_out, obstacles):
            return [v]
        return [p_in, p_out]

    if closed:
        for idx in range(k):
            out.extend(corner(points[idx - 1], points[idx], points[(idx + 1) % k]))
    else:
        out.append(points[0])
        out.append(_lerp(points[0], points[1], 0.25))
        for idx in range(1, k - 1):
            out.extend(corner(points[idx - 1], points[idx], points[idx + 1]))
        out.append(_lerp(points[-2], points[-1], 0.75))
        out.append(points[-1])

    deduped: list[Waypoint] = []
    for pt in out:
        if not deduped or deduped[-1] != pt:
            deduped.append(pt)
    if closed and len(deduped) > 1 and deduped[0] == deduped[-1]:
        deduped.pop()
    return deduped


def smooth_path(p: Path, iterations: int, obstacles: Grid) -> Path:
    """Obstacle-aware Chaikin corner cutting.

    Each segment contributes its 1/4 and 3/4 points; open endpoints are
    preserved. A corner whose cutting chord touches an obstacle is retained
    verbatim for that iteration.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    points = p.points
    for _ in range(iterations):
        points = tuple(_chaikin_once(points, p.closed, obstacles))
    return Path(points=points, closed=p.closed)


# -- set-level pipeline helpers -------------------------------------------------

def simplify_paths(ps: PathSet, epsilon: float, obstacles: Grid) -> PathSet:
    out = [simplify_path(p, epsilon, obstacles) for p in ps.paths]
    return ps.with_stage(out, "simplified", {"epsilon": epsilon})


def smooth_paths(ps: PathSet, iterations: int, obstacles: Grid) -> PathSet:
    out = [smooth_path(p, iterations, obstacles) for p in ps.paths]
    return ps.with_stage(out, "smoothed", {"iterations": iterations})
