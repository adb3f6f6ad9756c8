"""Command-line front end: generate, bench, and inspect subcommands.

Every option can also come from a TOML config file; explicit command-line
flags win on conflict. Exit codes: 0 solved, 2 parse/config error, 3
pre-constrain contradiction, 4 attempts exhausted.
"""

from __future__ import annotations

import math
import statistics
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path as FsPath

import click
import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import artifacts, postprocess, solver
from .ingest import (
    LevelMap,
    ParseError,
    SketchImage,
    load_moving_ai_map,
    load_sketch,
)
from .model import Palette, SolverConfig, TileClass, parse_hex_color
from .patterns import (
    ExtractionOptions,
    extract_patterns,
    synthesize_masks,
    validate_stretch_coverage,
)

EXIT_OK = 0
EXIT_PARSE_ERROR = 2
EXIT_CONTRADICTION = 3
EXIT_MAX_ATTEMPTS = 4


@dataclass(frozen=True)
class JobConfig:
    """One generate run: inputs, solver knobs, post-processing parameters."""

    level: str
    sketch: str
    out: str | None = None
    name: str | None = None
    n: int = 3
    symmetry: str = "none"
    weights: str = "frequency"
    masks: bool = True
    seed: int = 0
    max_attempts: int = 10
    entropy_noise: float = 1e-6
    mask_weight: float = 1.0
    snapshot_every: int | None = None
    min_path_len: int = 0
    require_enclosure: bool = False
    rdp_epsilon: float | None = None
    smooth_iters: int = 0
    palette: dict[str, str] = field(default_factory=dict)

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            n=self.n,
            symmetry=self.symmetry,
            weight_mode=self.weights,
            masks_enabled=self.masks,
            max_attempts=self.max_attempts,
            seed=self.seed,
            entropy_noise=self.entropy_noise,
            snapshot_every=self.snapshot_every,
            mask_weight=self.mask_weight,
        )

    def build_palette(self) -> Palette:
        overrides = {}
        for key, value in self.palette.items():
            try:
                tc = TileClass[key.upper()]
            except KeyError:
                raise ParseError(f"unknown palette class {key!r}") from None
            overrides[tc] = parse_hex_color(value)
        return Palette().with_overrides(overrides)


_JOB_KEYS = {f.name for f in JobConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]


def job_config_from_dict(data: dict, where: str = "config") -> JobConfig:
    unknown = set(data) - _JOB_KEYS
    if unknown:
        raise ParseError(f"unknown {where} keys: {', '.join(sorted(unknown))}")
    if "level" not in data or "sketch" not in data:
        raise ParseError(f"{where} must name both 'level' and 'sketch'")
    try:
        return JobConfig(**data)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"invalid {where}: {exc}") from None


def load_job_config(config_path: str | None, overrides: dict) -> JobConfig:
    data: dict = {}
    if config_path:
        with open(config_path, "rb") as fh:
            data.update(tomllib.load(fh))
    data.update({k: v for k, v in overrides.items() if v is not None})
    return job_config_from_dict(data)


def _load_inputs(cfg: JobConfig) -> tuple[LevelMap, SketchImage]:
    level = load_moving_ai_map(cfg.level)
    sketch = load_sketch(cfg.sketch, cfg.build_palette(), min_size=cfg.n)
    return level, sketch


def run_generate(cfg: JobConfig) -> tuple[int, dict]:
    """Execute one generate job; returns (exit code, manifest)."""
    level, sketch = _load_inputs(cfg)
    out_dir = FsPath(cfg.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    palette = cfg.build_palette()

    def snapshot_cb(attempt: int, step: int, rgb: np.ndarray) -> None:
        artifacts.write_snapshot_png(
            rgb, out_dir / f"snapshot_{attempt:02d}_{step:06d}.png"
        )

    t0 = time.perf_counter()
    result = solver.run(
        level,
        sketch,
        cfg.solver_config(),
        snapshot_cb=snapshot_cb if cfg.snapshot_every else None,
    )
    solve_seconds = time.perf_counter() - t0

    manifest: dict = {
        "status": result.status.value,
        "level": {"name": level.name, "width": level.width, "height": level.height},
        "sketch": {"width": sketch.width, "height": sketch.height},
        "config": {
            "n": cfg.n,
            "symmetry": cfg.symmetry,
            "weights": cfg.weights,
            "masks": cfg.masks,
            "seed": cfg.seed,
            "max_attempts": cfg.max_attempts,
            "min_path_len": cfg.min_path_len,
            "require_enclosure": cfg.require_enclosure,
            "rdp_epsilon": cfg.rdp_epsilon,
            "smooth_iters": cfg.smooth_iters,
        },
        "pattern_count": result.pattern_count,
        "attempts_used": result.attempts_used,
        "steps": result.steps,
        "contradiction_site": (
            list(result.contradiction_site) if result.contradiction_site else None
        ),
        "timings": {"solve_seconds": solve_seconds},
    }

    if result.status is not solver.RunStatus.SOLVED:
        manifest["failure_reason"] = (
            "pre-constrain contradiction: the level contains obstacle shapes "
            "no pattern can cover (try --masks)"
            if result.status is solver.RunStatus.CONTRADICTION
            else f"no solution in {cfg.max_attempts} attempts"
        )
        code = (
            EXIT_CONTRADICTION
            if result.status is solver.RunStatus.CONTRADICTION
            else EXIT_MAX_ATTEMPTS
        )
        manifest["exit_code"] = code
        artifacts.write_json(manifest, out_dir / "manifest.json")
        return code, manifest

    assert result.output is not None
    t1 = time.perf_counter()
    paths = postprocess.trace_paths(result.output)
    traced_count = len(paths.paths)
    if cfg.min_path_len > 0 or cfg.require_enclosure:
        paths = postprocess.filter_paths(
            paths, cfg.min_path_len, cfg.require_enclosure, level.grid
        )
    if cfg.rdp_epsilon is not None:
        paths = postprocess.simplify_paths(paths, cfg.rdp_epsilon, level.grid)
    if cfg.smooth_iters > 0:
        paths = postprocess.smooth_paths(paths, cfg.smooth_iters, level.grid)
    post_seconds = time.perf_counter() - t1

    artifacts.write_raster_png(result.output, out_dir / "output.png", palette)
    artifacts.write_waypoints_json(paths, out_dir / "waypoints.json")
    artifacts.write_overlay_svg(level, paths, out_dir / "overlay.svg")
    manifest["paths"] = {
        "traced": traced_count,
        "final": len(paths.paths),
        "dropped_isolated": paths.dropped_isolated,
        "stages": [name for name, _ in paths.stages],
    }
    manifest["timings"]["postprocess_seconds"] = post_seconds
    manifest["exit_code"] = EXIT_OK
    artifacts.write_json(manifest, out_dir / "manifest.json")
    return EXIT_OK, manifest


# -- bench ---------------------------------------------------------------------

def _bench_case(cfg: JobConfig, runs: int) -> dict:
    level, sketch = _load_inputs(cfg)
    times: list[float] = []
    statuses: list[str] = []
    pattern_count = 0
    output_size = f"{level.width}x{level.height}"
    for i in range(runs):
        run_cfg = replace(cfg, seed=cfg.seed + i).solver_config()
        t0 = time.perf_counter()
        result = solver.run(level, sketch, run_cfg)
        elapsed = time.perf_counter() - t0
        times.append(elapsed)
        statuses.append(result.status.value)
        pattern_count = result.pattern_count
    retained = times[1:]  # first run is cache warm-up
    ok = all(s == "solved" for s in statuses)
    mean = statistics.fmean(retained) if ok and retained else None
    stdev = statistics.stdev(retained) if ok and len(retained) > 1 else None
    return {
        "name": cfg.name or f"{FsPath(cfg.sketch).stem}/{FsPath(cfg.level).stem}",
        "input": FsPath(cfg.sketch).stem,
        "output": FsPath(cfg.level).stem,
        "pattern_count": pattern_count,
        "size": output_size,
        "runs": runs,
        "discard_first": True,
        "statuses": statuses,
        "times": retained,
        "all_times": times,
        "mean": mean,
        "stdev": stdev,
        "failed": not ok,
    }


def run_bench(cases: list[JobConfig], runs: int, parallel: bool = False) -> dict:
    """Paper-style timing harness: run each case `runs` times, drop run 0."""
    if runs < 2:
        raise ValueError("bench needs runs >= 2 (the first run is discarded)")
    if parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda c: _bench_case(c, runs), cases))
    else:
        results = [_bench_case(c, runs) for c in cases]
    return {
        "runs": runs,
        "discard_first": True,
        "parallel": parallel,
        "caveat": (
            "cases ran concurrently; timings may interfere" if parallel else None
        ),
        "cases": results,
    }


def bench_table(report: dict) -> str:
    header = f"{'Input':<16} {'Output':<16} {'Nb. Patt.':>9} {'Size':>10} {'Time (sec.)':>12} {'Std Dev.':>9}"
    lines = [header, "-" * len(header)]
    for case in report["cases"]:
        if case["failed"]:
            lines.append(
                f"{case['input']:<16} {case['output']:<16} {case['pattern_count']:>9} "
                f"{case['size']:>10} {'FAILED':>12} {'-':>9}"
            )
        else:
            stdev = f"{case['stdev']:.3f}" if case["stdev"] is not None else "-"
            lines.append(
                f"{case['input']:<16} {case['output']:<16} {case['pattern_count']:>9} "
                f"{case['size']:>10} {case['mean']:>12.3f} {stdev:>9}"
            )
    return "\n".join(lines)


def load_bench_suite(path: str) -> tuple[list[JobConfig], int | None]:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    raw_cases = data.get("case")
    if not raw_cases:
        raise ParseError("bench suite needs at least one [[case]] table")
    base = FsPath(path).parent
    cases = []
    for i, raw in enumerate(raw_cases):
        cfg = job_config_from_dict(raw, where=f"case {i + 1}")
        cases.append(
            replace(
                cfg,
                level=str((base / cfg.level)),
                sketch=str((base / cfg.sketch)),
            )
        )
    return cases, data.get("runs")


# -- inspect ---------------------------------------------------------------------

def inspect_report(path: str, n: int, symmetry: str) -> str:
    lines = []
    if path.endswith(".map"):
        level = load_moving_ai_map(path)
        lines.append(f"level {level.name}: {level.width}x{level.height}")
        hist = {
            "Free": int((level.grid.a == TileClass.FREE).sum()),
            "Obstacle": int((level.grid.a == TileClass.OBSTACLE).sum()),
        }
        lines.append(
            "histogram: " + ", ".join(f"{k}={v}" for k, v in hist.items())
        )
        masks = synthesize_masks(level.grid, n)
        lines.append(f"mask patterns (n={n}): {len(masks)}")
    else:
        sketch = load_sketch(path, Palette(), min_size=n)
        lines.append(f"sketch: {sketch.width}x{sketch.height}")
        counts = {tc.name.capitalize(): int((sketch.grid.a == tc).sum()) for tc in TileClass}
        lines.append(
            "histogram: " + ", ".join(f"{k}={v}" for k, v in counts.items() if v)
        )
        pset = extract_patterns(sketch, ExtractionOptions(n=n, symmetry=symmetry))
        lines.append(f"patterns (n={n}, symmetry={symmetry}): {len(pset)}")
        for warning in validate_stretch_coverage(pset):
            lines.append(f"warning: {warning}")
    return "\n".join(lines)


# -- click wiring -----------------------------------------------------------------

@click.group()
def main() -> None:
    """Example-based patrol path generation for grid game levels."""


def _fail(exc: Exception) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(EXIT_PARSE_ERROR)


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TOML config; explicit flags override it.")
@click.option("--level", type=click.Path(), default=None)
@click.option("--sketch", type=click.Path(), default=None)
@click.option("--out", type=click.Path(), default=None)
@click.option("--n", type=int, default=None)
@click.option("--symmetry", type=click.Choice(["none", "rotations_and_reflections"]), default=None)
@click.option("--weights", type=click.Choice(["frequency", "uniform"]), default=None)
@click.option("--masks/--no-masks", "masks", default=None)
@click.option("--seed", type=int, default=None)
@click.option("--max-attempts", type=int, default=None)
@click.option("--min-path-len", type=int, default=None)
@click.option("--require-enclosure/--no-require-enclosure", default=None)
@click.option("--rdp-epsilon", type=float, default=None)
@click.option("--smooth-iters", type=int, default=None)
@click.option("--snapshot-every", type=int, default=None)
def generate(config_path: str | None, **flags) -> None:
    """Generate patrol paths for a level from a sketch."""
    try:
        cfg = load_job_config(config_path, flags)
        code, manifest = run_generate(cfg)
    except (ParseError, OSError, ValueError) as exc:
        _fail(exc)
        return
    if code != EXIT_OK:
        click.echo(f"failed: {manifest['failure_reason']}", err=True)
    else:
        click.echo(
            f"solved in {manifest['attempts_used']} attempt(s), "
            f"{manifest['paths']['final']} path(s) -> {cfg.out or '.'}"
        )
    sys.exit(code)


@main.command()
@click.argument("suite", type=click.Path(exists=True))
@click.option("--runs", type=int, default=None, help="Runs per case (first is discarded).")
@click.option("--out", "out_path", type=click.Path(), default=None, help="Write JSON report here.")
@click.option("--parallel", is_flag=True, default=False,
              help="Run cases concurrently (timings may interfere).")
def bench(suite: str, runs: int | None, out_path: str | None, parallel: bool) -> None:
    """Time the solver over a TOML suite of cases."""
    try:
        cases, suite_runs = load_bench_suite(suite)
        effective_runs = runs if runs is not None else (suite_runs or 10)
        report = run_bench(cases, effective_runs, parallel=parallel)
    except (ParseError, OSError, ValueError) as exc:
        _fail(exc)
        return
    click.echo(bench_table(report))
    if out_path:
        artifacts.write_json(report, out_path)
    sys.exit(EXIT_OK)


@main.command()
@click.argument("path", type=click.Path(exists=True))
@click.option("--n", type=int, default=3)
@click.option("--symmetry", type=click.Choice(["none", "rotations_and_reflections"]), default="none")
def inspect(path: str, n: int, symmetry: str) -> None:
    """Describe a sketch or level file."""
    try:
        click.echo(inspect_report(path, n, symmetry))
    except (ParseError, OSError, ValueError) as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
