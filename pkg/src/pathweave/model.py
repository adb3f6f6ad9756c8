"""Shared domain vocabulary: grids, tile classes, palettes, patterns, config."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

RGB = tuple[int, int, int]


class TileClass(IntEnum):
    """Semantic class of a concrete map cell."""

    FREE = 0
    OBSTACLE = 1
    PATH = 2
    STRETCH = 3


class PatternCell(IntEnum):
    """A pattern cell: a concrete tile class or a mask wildcard.

    The first four values mirror TileClass so concrete cells convert by
    integer value. Wildcards appear only inside synthesized mask patterns,
    never in map or output grids.
    """

    FREE = 0
    OBSTACLE = 1
    PATH = 2
    STRETCH = 3
    ANY_BUT_PATH = 4
    ANY = 5

    @classmethod
    def concrete(cls, tc: TileClass) -> "PatternCell":
        return cls(int(tc))

    @property
    def is_concrete(self) -> bool:
        return self.value < 4

    @property
    def tile_class(self) -> TileClass:
        if not self.is_concrete:
            raise ValueError(f"{self.name} is a mask wildcard, not a concrete cell")
        return TileClass(self.value)


def match_classes(cell: PatternCell | int) -> frozenset[TileClass]:
    """Set of tile classes a pattern cell accepts."""
    return _MATCH_SETS[int(cell)]


_MATCH_SETS: tuple[frozenset[TileClass], ...] = (
    frozenset({TileClass.FREE}),
    frozenset({TileClass.OBSTACLE}),
    frozenset({TileClass.PATH}),
    frozenset({TileClass.STRETCH}),
    frozenset({TileClass.FREE, TileClass.OBSTACLE, TileClass.STRETCH}),
    frozenset({TileClass.FREE, TileClass.OBSTACLE, TileClass.PATH, TileClass.STRETCH}),
)

# CELL_COMPAT[a][b]: two overlapping pattern cells accept at least one common class.
CELL_COMPAT: np.ndarray = np.array(
    [[bool(_MATCH_SETS[a] & _MATCH_SETS[b]) for b in range(6)] for a in range(6)],
    dtype=bool,
)

# CELL_MATCHES[cell][class]: a concrete class satisfies a pattern cell.
CELL_MATCHES: np.ndarray = np.array(
    [[TileClass(c) in _MATCH_SETS[a] for c in range(4)] for a in range(6)],
    dtype=bool,
)


def parse_hex_color(text: str) -> RGB:
    s = text.strip().lstrip("#")
    if len(s) != 6:
        raise ValueError(f"expected 6-digit hex color, got {text!r}")
    return (int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16))


def format_hex_color(color: RGB) -> str:
    return "#{:02X}{:02X}{:02X}".format(*color)


@dataclass(frozen=True)
class Palette:
    """Bidirectional mapping between 24-bit colors and tile classes.

    One canonical color per class; sketch pixels must match exactly.
    """

    colors: dict[TileClass, RGB] = field(
        default_factory=lambda: dict(DEFAULT_COLORS)
    )

    def __post_init__(self) -> None:
        if set(self.colors) != set(TileClass):
            missing = set(TileClass) - set(self.colors)
            raise ValueError(f"palette must map every tile class, missing {missing}")
        if len(set(self.colors.values())) != len(self.colors):
            raise ValueError("palette colors must be distinct per class")

    def color_of(self, tc: TileClass) -> RGB:
        return self.colors[TileClass(tc)]

    def class_of(self, color: RGB) -> TileClass | None:
        return self._inverse().get(color)

    def _inverse(self) -> dict[RGB, TileClass]:
        return {c: t for t, c in self.colors.items()}

    def with_overrides(self, overrides: dict[TileClass, RGB]) -> "Palette":
        merged = dict(self.colors)
        merged.update(overrides)
        return Palette(colors=merged)


DEFAULT_COLORS: dict[TileClass, RGB] = {
    TileClass.FREE: (0xFF, 0xFF, 0xFF),
    TileClass.OBSTACLE: (0xFF, 0x00, 0x00),
    TileClass.PATH: (0x00, 0x00, 0x00),
    TileClass.STRETCH: (0xAD, 0xD8, 0xE6),
}


class Grid:
    """2D grid addressed as (x, y), top-left origin, y increasing downward.

    Backed by a row-major numpy array of shape (height, width). Cell values
    are small ints (TileClass or PatternCell codes).
    """

    __slots__ = ("a",)

    def __init__(self, array: np.ndarray):
        if array.ndim != 2:
            raise ValueError("grid array must be 2-dimensional")
        self.a = array

    @classmethod
    def filled(cls, width: int, height: int, value: int) -> "Grid":
        return cls(np.full((height, width), int(value), dtype=np.uint8))

    @property
    def width(self) -> int:
        return self.a.shape[1]

    @property
    def height(self) -> int:
        return self.a.shape[0]

    @property
    def cells(self) -> np.ndarray:
        """Row-major flat view."""
        return self.a.reshape(-1)

    def get(self, x: int, y: int) -> int:
        self._check(x, y)
        return int(self.a[y, x])

    def set(self, x: int, y: int, value: int) -> None:
        self._check(x, y)
        self.a[y, x] = int(value)

    def in_bounds(self, x: int, y: int) -> bool:
        return 0 <= x < self.width and 0 <= y < self.height

    def copy(self) -> "Grid":
        return Grid(self.a.copy())

    def _check(self, x: int, y: int) -> None:
        if not self.in_bounds(x, y):
            raise IndexError(f"({x}, {y}) outside {self.width}x{self.height} grid")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Grid):
            return NotImplemented
        return self.a.shape == other.a.shape and bool(np.array_equal(self.a, other.a))

    def __hash__(self) -> int:  # pragma: no cover - grids are not dict keys
        raise TypeError("Grid is mutable and unhashable")

    def __repr__(self) -> str:
        return f"Grid({self.width}x{self.height})"


@dataclass(frozen=True)
class Pattern:
    """An n x n window of pattern cells.

    `pattern_id` is the dense index within the owning PatternSet, or -1 for
    a pattern not yet added to a set.
    """

    n: int
    cells: np.ndarray  # (n, n) uint8 of PatternCell codes, cells[y, x]
    pattern_id: int = -1

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("pattern side length must be >= 2")
        if self.cells.shape != (self.n, self.n):
            raise ValueError("pattern cell array shape mismatch")
        self.cells.setflags(write=False)

    @classmethod
    def from_rows(cls, rows: list[list[int]], pattern_id: int = -1) -> "Pattern":
        a = np.asarray(rows, dtype=np.uint8)
        return cls(n=a.shape[0], cells=a, pattern_id=pattern_id)

    def key(self) -> bytes:
        return self.cells.tobytes()

    def cell(self, x: int, y: int) -> PatternCell:
        return PatternCell(int(self.cells[y, x]))

    @property
    def has_masks(self) -> bool:
        return bool((self.cells >= PatternCell.ANY_BUT_PATH).any())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pattern):
            return NotImplemented
        return self.n == other.n and bool(np.array_equal(self.cells, other.cells))

    def __hash__(self) -> int:
        return hash((self.n, self.key()))


def transform_pattern(p: Pattern, t: int) -> Pattern:
    """Apply dihedral transform t in 0..7.

    t mod 4 clockwise quarter turns; t >= 4 reflects horizontally first.
    Mask patterns are rejected: masks are synthesized from the output map
    after symmetry expansion and carry no symmetry of their own.
    """
    if not 0 <= t <= 7:
        raise ValueError("transform index must be in 0..7")
    if p.has_masks:
        raise ValueError("mask patterns cannot be symmetry-expanded")
    a = p.cells
    if t >= 4:
        a = np.fliplr(a)
    # np.rot90(k=-1) maps source (x, y) to (n-1-y, x): a clockwise quarter
    # turn under the y-down convention.
    a = np.rot90(a, k=-(t % 4))
    return Pattern(n=p.n, cells=np.ascontiguousarray(a))


PATTERN_ORIGIN_INPUT = "input"
PATTERN_ORIGIN_MASK = "mask"
PATTERN_ORIGIN_OBSTACLE_INTERIOR = "obstacle_interior"

_ORIGINS = (
    PATTERN_ORIGIN_INPUT,
    PATTERN_ORIGIN_MASK,
    PATTERN_ORIGIN_OBSTACLE_INTERIOR,
)

# Cardinal unit offsets, canvas coordinates: +x, -x, +y, -y.
DIRECTIONS: tuple[tuple[int, int], ...] = ((1, 0), (-1, 0), (0, 1), (0, -1))
OPPOSITE: tuple[int, ...] = (1, 0, 3, 2)


class PatternSet:
    """Deduplicated pattern inventory with weights, origins and, once built,
    the per-direction compatibility (propagator) tables.

    Pattern ids are dense and assigned in insertion order, which makes every
    downstream structure reproducible for a fixed input.
    """

    def __init__(self, n: int):
        if n < 2:
            raise ValueError("pattern side length must be >= 2")
        self.n = n
        self.patterns: list[Pattern] = []
        self.weights: list[float] = []
        self.origins: list[str] = []
        self._index: dict[bytes, int] = {}
        # compat[d] as boolean (P, P) matrices plus flattened adjacency lists.
        self._compat_bool: list[np.ndarray] | None = None
        self._compat_flat: list[np.ndarray] | None = None
        self._compat_off: list[np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.patterns)

    def add(self, cells: np.ndarray, weight: float, origin: str) -> int:
        """Add a pattern, merging weight into an existing duplicate.

        Duplicate input-origin patterns accumulate occurrence counts; a
        duplicate of any other origin leaves the existing entry untouched.
        Returns the pattern id.
        """
        if origin not in _ORIGINS:
            raise ValueError(f"unknown pattern origin {origin!r}")
        if self._compat_bool is not None:
            raise RuntimeError("pattern set is frozen once compat tables are built")
        a = np.ascontiguousarray(cells, dtype=np.uint8)
        if a.shape != (self.n, self.n):
            raise ValueError(f"expected {self.n}x{self.n} pattern cells")
        key = a.tobytes()
        existing = self._index.get(key)
        if existing is not None:
            if origin == PATTERN_ORIGIN_INPUT and self.origins[existing] == PATTERN_ORIGIN_INPUT:
                self.weights[existing] += weight
            return existing
        pid = len(self.patterns)
        self.patterns.append(Pattern(n=self.n, cells=a, pattern_id=pid))
        self.weights.append(float(weight))
        self.origins.append(origin)
        self._index[key] = pid
        return pid

    def find(self, cells: np.ndarray) -> int | None:
        return self._index.get(np.ascontiguousarray(cells, dtype=np.uint8).tobytes())

    @property
    def has_compat(self) -> bool:
        return self._compat_bool is not None

    def weight_array(self, weight_mode: str = "frequency") -> np.ndarray:
        if weight_mode == "frequency":
            return np.asarray(self.weights, dtype=np.float64)
        if weight_mode == "uniform":
            return np.ones(len(self.patterns), dtype=np.float64)
        raise ValueError(f"unknown weight mode {weight_mode!r}")

    def cell_stack(self) -> np.ndarray:
        """All pattern cells as one (P, n, n) array."""
        if not self.patterns:
            return np.zeros((0, self.n, self.n), dtype=np.uint8)
        return np.stack([p.cells for p in self.patterns])

    # -- compat table access -------------------------------------------------

    def set_compat(self, matrices: list[np.ndarray]) -> None:
        """Install per-direction (P, P) boolean compatibility matrices.

        matrices[d][p, q] is True when q placed at DIRECTIONS[d] from p agrees
        with p on the full overlap region. Offset symmetry is enforced.
        """
        P = len(self.patterns)
        if len(matrices) != 4 or any(m.shape != (P, P) for m in matrices):
            raise ValueError("expected four (P, P) boolean matrices")
        for d in (0, 2):
            if not np.array_equal(matrices[d], matrices[OPPOSITE[d]].T):
                raise ValueError("compat matrices violate offset symmetry")
        self._compat_bool = [np.ascontiguousarray(m, dtype=bool) for m in matrices]
        self._compat_flat = []
        self._compat_off = []
        for m in self._compat_bool:
            off = np.zeros(P + 1, dtype=np.int64)
            rows = []
            for p in range(P):
                ids = np.flatnonzero(m[p]).astype(np.int32)
                rows.append(ids)
                off[p + 1] = off[p] + len(ids)
            self._compat_flat.append(
                np.concatenate(rows) if rows else np.zeros(0, dtype=np.int32)
            )
            self._compat_off.append(off)

    def compat(self, p: int, d: int) -> np.ndarray:
        """Ids of patterns compatible with p at cardinal offset DIRECTIONS[d]."""
        if self._compat_flat is None or self._compat_off is None:
            raise RuntimeError("compat tables not built")
        off = self._compat_off[d]
        return self._compat_flat[d][off[p] : off[p + 1]]

    def compat_matrix(self, d: int) -> np.ndarray:
        if self._compat_bool is None:
            raise RuntimeError("compat tables not built")
        return self._compat_bool[d]

    def compat_sizes(self, d: int) -> np.ndarray:
        if self._compat_off is None:
            raise RuntimeError("compat tables not built")
        return np.diff(self._compat_off[d])

    def compat_flat(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        if self._compat_flat is None or self._compat_off is None:
            raise RuntimeError("compat tables not built")
        return self._compat_flat[d], self._compat_off[d]


SYMMETRY_NONE = "none"
SYMMETRY_FULL = "rotations_and_reflections"

WEIGHTS_FREQUENCY = "frequency"
WEIGHTS_UNIFORM = "uniform"


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for one generation run."""

    n: int = 3
    symmetry: str = SYMMETRY_NONE
    weight_mode: str = WEIGHTS_FREQUENCY
    masks_enabled: bool = True
    max_attempts: int = 10
    seed: int = 0
    entropy_noise: float = 1e-6
    snapshot_every: int | None = None
    mask_weight: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.symmetry not in (SYMMETRY_NONE, SYMMETRY_FULL):
            raise ValueError(f"unknown symmetry mode {self.symmetry!r}")
        if self.weight_mode not in (WEIGHTS_FREQUENCY, WEIGHTS_UNIFORM):
            raise ValueError(f"unknown weight mode {self.weight_mode!r}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if not 0.0 < self.entropy_noise < 1e-3:
            raise ValueError("entropy_noise must be in (0, 1e-3)")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1 when set")
        if self.mask_weight < 0:
            raise ValueError("mask_weight must be nonnegative")
