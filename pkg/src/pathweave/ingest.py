"""Level and sketch ingestion: Moving AI ASCII maps and raster sketches."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .model import Grid, Palette, TileClass, format_hex_color

# Moving AI terrain characters. Trees, swamp and water all become obstacles:
# patrol paths are walked, so only plain ground is pathable.
_FREE_CHARS = frozenset(".G")
_OBSTACLE_CHARS = frozenset("@OTSW")


class ParseError(ValueError):
    """Malformed input file; carries 1-based line and column when known."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


@dataclass(frozen=True)
class LevelMap:
    """A fixed output level: free/obstacle occupancy plus a display name."""

    name: str
    grid: Grid

    def __post_init__(self) -> None:
        if not np.isin(self.grid.a, (TileClass.FREE, TileClass.OBSTACLE)).all():
            raise ValueError("level map may contain only Free and Obstacle cells")

    @property
    def width(self) -> int:
        return self.grid.width

    @property
    def height(self) -> int:
        return self.grid.height


@dataclass(frozen=True)
class SketchImage:
    """A classified path sketch together with the palette that decoded it."""

    grid: Grid
    source_palette: Palette

    @property
    def width(self) -> int:
        return self.grid.width

    @property
    def height(self) -> int:
        return self.grid.height


def parse_moving_ai_map(text: str | bytes, name: str = "map") -> LevelMap:
    """Parse a Moving AI benchmark `.map` file.

    Expected layout: `type octile`, `height H`, `width W`, `map`, then H rows
    of W terrain characters. CRLF and a trailing newline are tolerated.
    """
    if isinstance(text, bytes):
        text = text.decode("ascii", errors="replace")
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    def header(idx: int, key: str) -> str:
        if idx >= len(lines):
            raise ParseError(f"missing header line {key!r}", line=idx + 1)
        return lines[idx]

    type_line = header(0, "type")
    if not type_line.startswith("type"):
        raise ParseError(f"expected 'type <name>' header, got {type_line!r}", line=1)

    height = _header_int(header(1, "height"), "height", 2)
    width = _header_int(header(2, "width"), "width", 3)
    if header(3, "map").strip() != "map":
        raise ParseError(f"expected 'map' header, got {lines[3]!r}", line=4)

    body = lines[4:]
    if len(body) != height:
        raise ParseError(
            f"header declares height {height} but body has {len(body)} rows",
            line=5 + min(len(body), height),
        )

    a = np.zeros((height, width), dtype=np.uint8)
    for y, row in enumerate(body):
        if len(row) != width:
            raise ParseError(
                f"header declares width {width} but row has {len(row)} characters",
                line=5 + y,
                column=min(len(row), width) + 1,
            )
        for x, ch in enumerate(row):
            if ch in _FREE_CHARS:
                a[y, x] = TileClass.FREE
            elif ch in _OBSTACLE_CHARS:
                a[y, x] = TileClass.OBSTACLE
            else:
                raise ParseError(f"unknown terrain character {ch!r}", line=5 + y, column=x + 1)
    return LevelMap(name=name, grid=Grid(a))


def _header_int(line: str, key: str, lineno: int) -> int:
    parts = line.split()
    if len(parts) != 2 or parts[0] != key:
        raise ParseError(f"expected '{key} <int>' header, got {line!r}", line=lineno)
    try:
        value = int(parts[1])
    except ValueError:
        raise ParseError(f"non-integer {key} {parts[1]!r}", line=lineno) from None
    if value < 1:
        raise ParseError(f"{key} must be positive, got {value}", line=lineno)
    return value


def load_moving_ai_map(path: str | os.PathLike) -> LevelMap:
    with open(path, "rb") as fh:
        data = fh.read()
    name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    return parse_moving_ai_map(data, name=name)


def format_moving_ai_map(level: LevelMap) -> str:
    """Re-emit a level in Moving AI format ('.' free, '@' obstacle)."""
    rows = []
    for y in range(level.height):
        rows.append(
            "".join(
                "." if level.grid.a[y, x] == TileClass.FREE else "@"
                for x in range(level.width)
            )
        )
    return (
        f"type octile\nheight {level.height}\nwidth {level.width}\nmap\n"
        + "\n".join(rows)
        + "\n"
    )


def classify_pixels(pixels: np.ndarray, palette: Palette) -> Grid:
    """Classify an (H, W, 3) RGB array through the palette, exact match only."""
    h, w = pixels.shape[:2]
    out = np.full((h, w), 255, dtype=np.uint8)
    for tc in TileClass:
        r, g, b = palette.color_of(tc)
        hit = (pixels[:, :, 0] == r) & (pixels[:, :, 1] == g) & (pixels[:, :, 2] == b)
        out[hit] = tc
    unmatched = np.argwhere(out == 255)
    if len(unmatched):
        y, x = (int(v) for v in unmatched[0])
        color = tuple(int(v) for v in pixels[y, x, :3])
        raise ParseError(
            f"unmapped pixel color {format_hex_color(color)} at ({x}, {y})"
        )
    return Grid(out)


def load_sketch(path: str | os.PathLike, palette: Palette, min_size: int = 2) -> SketchImage:
    """Load a raster sketch and classify every pixel through the palette.

    Alpha is ignored if present. Colors must match the palette exactly; a
    mis-saved (anti-aliased, color-shifted) sketch fails loudly.
    """
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        pixels = np.asarray(rgb, dtype=np.uint8)
    if pixels.shape[0] < min_size or pixels.shape[1] < min_size:
        raise ParseError(
            f"sketch is {pixels.shape[1]}x{pixels.shape[0]}, "
            f"smaller than the {min_size}x{min_size} pattern size"
        )
    return SketchImage(grid=classify_pixels(pixels, palette), source_palette=palette)


def sketch_from_grid(grid: Grid, palette: Palette | None = None) -> SketchImage:
    """Wrap an in-memory class grid as a sketch (used by tests and tools)."""
    if not np.isin(grid.a, [int(t) for t in TileClass]).all():
        raise ValueError("sketch grid contains non-class values")
    return SketchImage(grid=grid, source_palette=palette or Palette())


def level_to_output_canvas(level: LevelMap) -> Grid:
    """The initial output canvas is an identity copy of the level grid."""
    return level.grid.copy()
