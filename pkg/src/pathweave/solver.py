"""The constraint solver: wave state, pre-constraining, observe/propagate, restarts.

The wave covers every n x n window position of the output canvas. Pattern
viability is tracked with per-direction support counters (arc consistency
with counting), so a ban costs one counter decrement per affected neighbor
pattern instead of a rescan. All hot paths are vectorized; batches of bans
propagate breadth-first, which reaches the same fixpoint as one-at-a-time
processing because counter decrements commute.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ingest import LevelMap, SketchImage, level_to_output_canvas
from .model import (
    OPPOSITE,
    PATTERN_ORIGIN_INPUT,
    PATTERN_ORIGIN_MASK,
    PATTERN_ORIGIN_OBSTACLE_INTERIOR,
    Grid,
    Palette,
    PatternCell,
    PatternSet,
    SolverConfig,
    TileClass,
)
from .patterns import (
    ExtractionOptions,
    build_compat,
    extract_patterns,
    make_obstacle_interior_pattern,
    synthesize_masks,
)

_NO_CLASS = 255  # sentinel for "no concrete class assigned yet"


class RunStatus(enum.Enum):
    SOLVED = "solved"
    CONTRADICTION = "contradiction"
    MAX_ATTEMPTS_EXCEEDED = "max_attempts_exceeded"


@dataclass(frozen=True)
class RunResult:
    status: RunStatus
    output: Grid | None
    attempts_used: int
    steps: int
    contradiction_site: tuple[int, int] | None
    pattern_count: int = 0


class Wave:
    """Per-cell candidate sets with support counters and entropy caches.

    Wave cell (x, y) covers canvas cells [x, x+n) x [y, y+n); flat indices
    are row-major. `support[d, c, q]` counts still-possible patterns at the
    neighbor of c in direction d that are compatible with q at c; a counter
    reaching zero for an in-bounds direction kills q at c.
    """

    def __init__(self, pset: PatternSet, canvas_width: int, canvas_height: int,
                 weight_mode: str = "frequency"):
        n = pset.n
        if canvas_width < n or canvas_height < n:
            raise ValueError("canvas smaller than the pattern size")
        if not pset.has_compat:
            raise ValueError("pattern set needs compat tables before solving")
        self.n = n
        self.width_w = canvas_width - n + 1
        self.height_w = canvas_height - n + 1
        self.num_cells = self.width_w * self.height_w
        self.num_patterns = len(pset)
        self.weight_mode = weight_mode

        C, P = self.num_cells, self.num_patterns
        self.possible = np.ones((C, P), dtype=bool)
        self.counts = np.full(C, P, dtype=np.int32)

        self.w_eff = pset.weight_array(weight_mode)
        with np.errstate(divide="ignore", invalid="ignore"):
            wlw = self.w_eff * np.log(self.w_eff)
        self.wlogw_eff = np.where(self.w_eff > 0, wlw, 0.0)
        self.sum_w = np.full(C, self.w_eff.sum(), dtype=np.float64)
        self.sum_wlogw = np.full(C, self.wlogw_eff.sum(), dtype=np.float64)
        self._entropy = np.full(C, self._entropy_of(self.sum_w[0], self.sum_wlogw[0]))
        self.noise = np.zeros(C, dtype=np.float64)

        # support[d] flattened to (C * P,); initial value is |compat[q][d]|
        # because every neighbor pattern is still possible.
        self.support = np.empty((4, C * P), dtype=np.int16)
        for d in range(4):
            self.support[d] = np.tile(pset.compat_sizes(d).astype(np.int16), C)

        xs = np.arange(C, dtype=np.int64) % self.width_w
        ys = np.arange(C, dtype=np.int64) // self.width_w
        self.has_neighbor = np.stack([
            xs < self.width_w - 1,
            xs > 0,
            ys < self.height_w - 1,
            ys > 0,
        ])
        self.deltas = (1, -1, self.width_w, -self.width_w)

        self._pending: list[tuple[np.ndarray, np.ndarray]] = []
        self.contradiction: int | None = None

    # -- geometry ------------------------------------------------------------

    def flat(self, x: int, y: int) -> int:
        return y * self.width_w + x

    def coords(self, c: int) -> tuple[int, int]:
        return c % self.width_w, c // self.width_w

    @property
    def contradiction_site(self) -> tuple[int, int] | None:
        return None if self.contradiction is None else self.coords(self.contradiction)

    # -- candidate bookkeeping -------------------------------------------------

    @staticmethod
    def _entropy_of(sw: float, swl: float) -> float:
        if sw <= 0:
            return np.inf
        return float(np.log(sw) - swl / sw)

    def possible_at(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.possible[c])

    def entropy(self, c: int) -> float:
        """Exact entropy of cell c, recomputed from the live candidate set."""
        ids = self.possible_at(c)
        w = self.w_eff[ids]
        return self._entropy_of(float(w.sum()), float(self.wlogw_eff[ids].sum()))

    def ban(self, cells: np.ndarray, pats: np.ndarray) -> None:
        """Remove (cell, pattern) pairs and queue them for propagation.

        Pairs already impossible are skipped; duplicate pairs within one call
        are not allowed (callers always pass unique pairs).
        """
        cells = np.asarray(cells, dtype=np.int64)
        pats = np.asarray(pats, dtype=np.int64)
        alive = self.possible[cells, pats]
        if not alive.all():
            cells, pats = cells[alive], pats[alive]
        if len(cells) == 0:
            return
        self.possible[cells, pats] = False
        np.subtract.at(self.sum_w, cells, self.w_eff[pats])
        np.subtract.at(self.sum_wlogw, cells, self.wlogw_eff[pats])
        touched, dec = np.unique(cells, return_counts=True)
        self.counts[touched] -= dec.astype(np.int32)
        sw = self.sum_w[touched]
        with np.errstate(divide="ignore", invalid="ignore"):
            ent = np.log(np.maximum(sw, 1e-300)) - self.sum_wlogw[touched] / np.maximum(sw, 1e-300)
        self._entropy[touched] = ent
        empty = touched[self.counts[touched] <= 0]
        if len(empty) and self.contradiction is None:
            self.contradiction = int(empty.min())
        self._pending.append((cells, pats))

    def propagate(self, pset: PatternSet) -> tuple[int, int] | None:
        """Drain queued bans to the arc-consistency fixpoint.

        Returns the contradiction site (wave coordinates) or None. On
        contradiction the remaining queue is dropped; the wave is dead and
        only fit for inspection.
        """
        P = self.num_patterns
        while self._pending:
            if self.contradiction is not None:
                self._pending.clear()
                break
            cells, pats = self._pending.pop(0)
            for d in range(4):
                ok = self.has_neighbor[d][cells]
                if not ok.any():
                    continue
                nb = cells[ok] + self.deltas[d]
                ps = pats[ok]
                flat_compat, off = pset.compat_flat(d)
                lens = (off[ps + 1] - off[ps])
                total = int(lens.sum())
                if total == 0:
                    continue
                # gather the ragged compat rows for every banned pattern
                csum = np.cumsum(lens) - lens
                within = np.arange(total, dtype=np.int64) - np.repeat(csum, lens)
                qs = flat_compat[np.repeat(off[ps], lens) + within]
                idx = np.repeat(nb, lens) * P + qs
                # merged decrement: q at the neighbor loses one supporter from
                # the direction pointing back at the banned cell
                u, cnt = np.unique(idx, return_counts=True)
                sup = self.support[OPPOSITE[d]]
                left = sup[u] - cnt
                sup[u] = left
                dead = u[(left <= 0) & self.possible.reshape(-1)[u]]
                if len(dead):
                    self.ban(dead // P, dead % P)
        return self.contradiction_site

    def clone(self) -> "Wave":
        """Deep copy for restart attempts (pending queue must be empty)."""
        if self._pending:
            raise RuntimeError("cannot clone a wave with unpropagated bans")
        w = object.__new__(Wave)
        w.n = self.n
        w.width_w = self.width_w
        w.height_w = self.height_w
        w.num_cells = self.num_cells
        w.num_patterns = self.num_patterns
        w.weight_mode = self.weight_mode
        w.possible = self.possible.copy()
        w.counts = self.counts.copy()
        w.w_eff = self.w_eff
        w.wlogw_eff = self.wlogw_eff
        w.sum_w = self.sum_w.copy()
        w.sum_wlogw = self.sum_wlogw.copy()
        w._entropy = self._entropy.copy()
        w.noise = self.noise
        w.support = self.support.copy()
        w.has_neighbor = self.has_neighbor
        w.deltas = self.deltas
        w._pending = []
        w.contradiction = self.contradiction
        return w

    def all_decided(self) -> bool:
        return bool((self.counts == 1).all())

    def decided_patterns(self) -> np.ndarray:
        """(height_w, width_w) pattern ids; requires a fully decided wave."""
        if not self.all_decided():
            raise RuntimeError("wave is not fully decided")
        return np.argmax(self.possible, axis=1).reshape(self.height_w, self.width_w)

    def check_coherence(self, pset: PatternSet) -> None:
        """Debug invariant: incremental caches match from-scratch recomputes."""
        poss = self.possible
        assert (self.counts == poss.sum(axis=1)).all(), "count cache incoherent"
        assert np.allclose(self.sum_w, poss @ self.w_eff, atol=1e-9), "weight sums incoherent"
        assert np.allclose(self.sum_wlogw, poss @ self.wlogw_eff, atol=1e-9), "w*log w sums incoherent"
        C = self.num_cells
        P = self.num_patterns
        for d in range(4):
            expected = np.zeros((C, P), dtype=np.int16)
            nb_exists = self.has_neighbor[d]
            src = np.flatnonzero(nb_exists)
            expected[src] = poss[src + self.deltas[d]].astype(np.int16) @ pset.compat_matrix(d).T.astype(np.int16)
            got = self.support[d].reshape(C, P)
            live = poss & nb_exists[:, None]
            assert (got[live] == expected[live]).all(), f"support counters incoherent in direction {d}"


def preconstrain(wave: Wave, canvas: Grid, pset: PatternSet) -> Wave:
    """Ban every pattern whose footprint disagrees with the fixed level.

    Canvas obstacle cells demand a concrete obstacle or a mask wildcard;
    canvas free cells demand anything that is not a concrete obstacle. The
    resulting bans are propagated to a fixpoint, which is where impossible
    levels surface before any observation is spent.
    """
    n = wave.n
    stack = pset.cell_stack()
    obst_ok = (stack == PatternCell.OBSTACLE) | (stack >= PatternCell.ANY_BUT_PATH)
    free_ok = stack != PatternCell.OBSTACLE

    is_obst = canvas.a == TileClass.OBSTACLE
    windows = np.lib.stride_tricks.sliding_window_view(is_obst, (n, n))
    allowed = np.ones((wave.height_w, wave.width_w, wave.num_patterns), dtype=bool)
    for j in range(n):
        for i in range(n):
            c = windows[:, :, j, i]
            allowed &= np.where(c[:, :, None], obst_ok[None, None, :, j, i], free_ok[None, None, :, j, i])

    flat = np.flatnonzero(~allowed.reshape(-1) & wave.possible.reshape(-1))
    if len(flat):
        wave.ban(flat // wave.num_patterns, flat % wave.num_patterns)

    # Patterns with an empty compat row can never have that neighbor; their
    # counters start at zero and would otherwise escape the decrement logic.
    for d in range(4):
        isolated = np.flatnonzero(pset.compat_sizes(d) == 0)
        if len(isolated):
            cells = np.flatnonzero(wave.has_neighbor[d])
            cc = np.repeat(cells, len(isolated))
            pp = np.tile(isolated, len(cells))
            wave.ban(cc, pp)

    wave.propagate(pset)
    return wave


def observe(wave: Wave, rng: np.random.Generator) -> tuple[tuple[int, int], int] | None:
    """Collapse the lowest-entropy undecided cell to one sampled pattern.

    Returns ((x, y), pattern_id), or None when every cell is decided. The
    chosen cell minimizes Shannon entropy over remaining weights plus the
    per-cell tie-breaking noise; the pattern is sampled proportionally to
    the effective weights. Bans are queued but not yet propagated.
    """
    undecided = wave.counts > 1
    if not undecided.any():
        return None
    scores = np.where(undecided, wave._entropy + wave.noise, np.inf)
    c = int(np.argmin(scores))
    ids = np.flatnonzero(wave.possible[c])
    w = wave.w_eff[ids]
    total = float(w.sum())
    if total > 0:
        probs = w / total
        probs /= probs.sum()
    else:
        probs = np.full(len(ids), 1.0 / len(ids))
    chosen = int(rng.choice(ids, p=probs))
    others = ids[ids != chosen]
    wave.ban(np.full(len(others), c, dtype=np.int64), others)
    return wave.coords(c), chosen


def render_decided(wave: Wave, pset: PatternSet, canvas: Grid) -> Grid:
    """Assemble the output raster from a fully decided wave.

    Concrete pattern cells win; cells covered only by mask wildcards keep
    the canvas class (masks never overwrite the level). Disagreement between
    covering patterns is a solver bug and raises.
    """
    dec = wave.decided_patterns()
    stack = pset.cell_stack()
    h, w = canvas.a.shape
    concrete = np.full((h, w), _NO_CLASS, dtype=np.uint8)
    any_but_path = np.zeros((h, w), dtype=bool)
    for j in range(wave.n):
        for i in range(wave.n):
            codes = stack[dec, j, i]  # value each decided pattern puts at (x+i, y+j)
            region = (slice(j, j + wave.height_w), slice(i, i + wave.width_w))
            sub = concrete[region]
            new = np.where(codes < PatternCell.ANY_BUT_PATH, codes, _NO_CLASS).astype(np.uint8)
            clash = (sub != _NO_CLASS) & (new != _NO_CLASS) & (sub != new)
            if clash.any():
                y, x = np.argwhere(clash)[0]
                raise AssertionError(
                    f"covering patterns disagree at canvas cell ({x + i}, {y + j})"
                )
            concrete[region] = np.where(new != _NO_CLASS, new, sub)
            any_but_path[region] |= codes == PatternCell.ANY_BUT_PATH
    bad = any_but_path & (concrete == TileClass.PATH)
    if bad.any():
        y, x = np.argwhere(bad)[0]
        raise AssertionError(f"path placed under a no-path mask at ({x}, {y})")
    out = np.where(concrete != _NO_CLASS, concrete, canvas.a).astype(np.uint8)
    return Grid(out)


def render_snapshot(wave: Wave, pset: PatternSet, canvas: Grid,
                    palette: Palette | None = None) -> np.ndarray:
    """Mid-run progress raster: per-cell mean color over all candidates.

    Every (covering wave cell, possible pattern) pair contributes the palette
    color of its cell; mask wildcards contribute the canvas color. Returns an
    (H, W, 3) uint8 array.
    """
    palette = palette or Palette()
    stack = pset.cell_stack()
    class_colors = np.array([palette.color_of(tc) for tc in TileClass], dtype=np.float64)
    canvas_rgb = class_colors[canvas.a]
    h, w = canvas.a.shape
    acc = np.zeros((h, w, 3), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.float64)
    poss = wave.possible.astype(np.float64)
    counts_grid = wave.counts.reshape(wave.height_w, wave.width_w).astype(np.float64)
    for j in range(wave.n):
        for i in range(wave.n):
            codes = stack[:, j, i]
            is_mask = codes >= PatternCell.ANY_BUT_PATH
            colors = np.where(is_mask[:, None], 0.0, class_colors[np.minimum(codes, 3)])
            region = (slice(j, j + wave.height_w), slice(i, i + wave.width_w))
            acc[region] += (poss @ colors).reshape(wave.height_w, wave.width_w, 3)
            mask_hits = (poss @ is_mask.astype(np.float64)).reshape(wave.height_w, wave.width_w)
            acc[region] += mask_hits[:, :, None] * canvas_rgb[region]
            count[region] += counts_grid
    return np.clip(np.round(acc / count[:, :, None]), 0, 255).astype(np.uint8)


def build_pattern_set(sketch: SketchImage, canvas: Grid, cfg: SolverConfig) -> PatternSet:
    """Extraction pipeline: sketch windows, obstacle interior, masks, compat."""
    pset = extract_patterns(sketch, ExtractionOptions(n=cfg.n, symmetry=cfg.symmetry))
    pset.add(
        make_obstacle_interior_pattern(cfg.n).cells, 1.0, PATTERN_ORIGIN_OBSTACLE_INTERIOR
    )
    if cfg.masks_enabled:
        for mask in synthesize_masks(canvas, cfg.n):
            pset.add(mask.cells, cfg.mask_weight, PATTERN_ORIGIN_MASK)
    return build_compat(pset)


def attempt_rng(seed: int, attempt: int) -> np.random.Generator:
    """Deterministic per-attempt stream: PCG64 seeded by mixing (seed, attempt)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, attempt])))


SnapshotCallback = Callable[[int, int, np.ndarray], None]


def run(level: LevelMap, sketch: SketchImage, cfg: SolverConfig,
        snapshot_cb: SnapshotCallback | None = None) -> RunResult:
    """Full solve: patterns, pre-constrain, observe/propagate with restarts.

    Deterministic: identical (level, sketch, cfg) produce identical results.
    Pre-constraining is seed-independent, so its contradiction short-circuits
    without burning attempts; observe-phase contradictions restart with the
    per-attempt mixed seed until max_attempts is exhausted.
    """
    canvas = level_to_output_canvas(level)
    pset = build_pattern_set(sketch, canvas, cfg)
    base = Wave(pset, canvas.width, canvas.height, weight_mode=cfg.weight_mode)
    preconstrain(base, canvas, pset)
    if base.contradiction is not None:
        return RunResult(
            status=RunStatus.CONTRADICTION,
            output=None,
            attempts_used=0,
            steps=0,
            contradiction_site=base.contradiction_site,
            pattern_count=len(pset),
        )

    last_site: tuple[int, int] | None = None
    steps = 0
    for attempt in range(cfg.max_attempts):
        wave = base.clone()
        rng = attempt_rng(cfg.seed, attempt)
        wave.noise = rng.random(wave.num_cells) * cfg.entropy_noise
        steps = 0
        while True:
            picked = observe(wave, rng)
            if picked is None:
                output = render_decided(wave, pset, canvas)
                return RunResult(
                    status=RunStatus.SOLVED,
                    output=output,
                    attempts_used=attempt + 1,
                    steps=steps,
                    contradiction_site=None,
                    pattern_count=len(pset),
                )
            steps += 1
            wave.propagate(pset)
            if wave.contradiction is not None:
                last_site = wave.contradiction_site
                break
            if (
                snapshot_cb is not None
                and cfg.snapshot_every is not None
                and steps % cfg.snapshot_every == 0
            ):
                snapshot_cb(attempt, steps, render_snapshot(wave, pset, canvas))
    return RunResult(
        status=RunStatus.MAX_ATTEMPTS_EXCEEDED,
        output=None,
        attempts_used=cfg.max_attempts,
        steps=steps,
        contradiction_site=last_site,
        pattern_count=len(pset),
    )
