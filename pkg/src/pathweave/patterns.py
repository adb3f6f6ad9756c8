"""Pattern inventory: extraction, symmetry expansion, masks, compat tables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ingest import SketchImage
from .model import (
    CELL_COMPAT,
    PATTERN_ORIGIN_INPUT,
    PATTERN_ORIGIN_MASK,
    PATTERN_ORIGIN_OBSTACLE_INTERIOR,
    SYMMETRY_FULL,
    SYMMETRY_NONE,
    Grid,
    Pattern,
    PatternCell,
    PatternSet,
    TileClass,
    transform_pattern,
)


@dataclass(frozen=True)
class ExtractionOptions:
    n: int = 3
    symmetry: str = SYMMETRY_NONE
    periodic_input: bool = False

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.symmetry not in (SYMMETRY_NONE, SYMMETRY_FULL):
            raise ValueError(f"unknown symmetry mode {self.symmetry!r}")


def cells_compatible(a: PatternCell | int, b: PatternCell | int) -> bool:
    """Two overlapping pattern cells can describe the same output cell."""
    return bool(CELL_COMPAT[int(a), int(b)])


def extract_patterns(sketch: SketchImage, opts: ExtractionOptions) -> PatternSet:
    """Enumerate all n x n sketch windows into a weighted pattern set.

    Window scan is row-major; with symmetry enabled each window contributes
    its 8 dihedral variants. Duplicate patterns merge with weights summed, so
    each unique pattern's weight is its total occurrence count.
    """
    n = opts.n
    if sketch.width < n or sketch.height < n:
        raise ValueError(
            f"sketch is {sketch.width}x{sketch.height}, smaller than n={n}"
        )
    a = sketch.grid.a
    if opts.periodic_input:
        a = np.pad(a, ((0, n - 1), (0, n - 1)), mode="wrap")
        xs, ys = sketch.width, sketch.height
    else:
        xs, ys = sketch.width - n + 1, sketch.height - n + 1

    pset = PatternSet(n)
    for y in range(ys):
        for x in range(xs):
            window = Pattern(n=n, cells=np.ascontiguousarray(a[y : y + n, x : x + n]))
            if opts.symmetry == SYMMETRY_FULL:
                for t in range(8):
                    pset.add(transform_pattern(window, t).cells, 1.0, PATTERN_ORIGIN_INPUT)
            else:
                pset.add(window.cells, 1.0, PATTERN_ORIGIN_INPUT)
    return pset


def make_obstacle_interior_pattern(n: int) -> Pattern:
    """The all-obstacle pattern that pins down obstacle interiors."""
    return Pattern(n=n, cells=np.full((n, n), int(PatternCell.OBSTACLE), dtype=np.uint8))


def synthesize_masks(canvas: Grid, n: int) -> list[Pattern]:
    """Derive wildcard patterns from the output level's obstacle windows.

    Every fully-inside n x n window containing at least one obstacle yields a
    pattern: obstacle cells stay concrete, free cells 4-adjacent (within the
    window) to an obstacle become ANY_BUT_PATH, remaining free cells become
    ANY. Duplicates are dropped.
    """
    if not np.isin(canvas.a, (TileClass.FREE, TileClass.OBSTACLE)).all():
        raise ValueError("mask synthesis expects a Free/Obstacle canvas")
    obst = canvas.a == TileClass.OBSTACLE
    h, w = obst.shape
    out: list[Pattern] = []
    seen: set[bytes] = set()
    for y in range(h - n + 1):
        for x in range(w - n + 1):
            win = obst[y : y + n, x : x + n]
            if not win.any():
                continue
            near = np.zeros_like(win)
            near[:-1, :] |= win[1:, :]
            near[1:, :] |= win[:-1, :]
            near[:, :-1] |= win[:, 1:]
            near[:, 1:] |= win[:, :-1]
            cells = np.where(
                win,
                np.uint8(PatternCell.OBSTACLE),
                np.where(near, np.uint8(PatternCell.ANY_BUT_PATH), np.uint8(PatternCell.ANY)),
            ).astype(np.uint8)
            key = cells.tobytes()
            if key in seen:
                continue
            seen.add(key)
            out.append(Pattern(n=n, cells=cells))
    return out


def build_compat(pset: PatternSet) -> PatternSet:
    """Fill the cardinal-offset compatibility tables in place.

    q is compatible with p at unit offset d when every cell of the n x (n-1)
    or (n-1) x n overlap region passes cells_compatible. The -x and -y tables
    are transposes of +x and +y, so offset symmetry holds by construction.
    """
    if len(pset) == 0:
        raise ValueError("cannot build compat tables for an empty pattern set")
    stack = pset.cell_stack()  # (P, n, n), indexed [p, y, x]
    # +x offset: p columns 1..n-1 overlap q columns 0..n-2.
    px = CELL_COMPAT[stack[:, None, :, 1:], stack[None, :, :, :-1]].all(axis=(2, 3))
    # +y offset: p rows 1..n-1 overlap q rows 0..n-2.
    py = CELL_COMPAT[stack[:, None, 1:, :], stack[None, :, :-1, :]].all(axis=(2, 3))
    pset.set_compat([px, px.T, py, py.T])
    return pset


def validate_stretch_coverage(pset: PatternSet) -> list[str]:
    """Warn when stretch space is used but cannot overlap with itself.

    Stretch regions grow by an all-stretch pattern tiling over itself; a
    sketch whose stretch areas are too thin to contain one cannot stretch.
    """
    stack = pset.cell_stack()
    if len(stack) == 0:
        return []
    uses_stretch = bool((stack == PatternCell.STRETCH).any())
    if not uses_stretch:
        return []
    all_stretch = bool((stack == PatternCell.STRETCH).all(axis=(1, 2)).any())
    if all_stretch:
        return []
    return [
        "sketch uses stretch space but no all-stretch pattern exists; "
        f"stretch regions thinner than {2 * pset.n - 1} cells cannot grow "
        "(widen the stretch area in the sketch)"
    ]
