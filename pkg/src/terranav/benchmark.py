"""Benchmark matrix: terrains x inclinations x methods x trials, plus reporting.

Each terrain is one work unit. Inside a unit every planner plans once per
trial and all controllers of that planner track the same path, so the
controller ablations differ only in the controller. Units can fan out over a
process pool; rows are merged in (terrain_id, method, trial) order, so the
report files do not depend on scheduling.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import Method, RunConfig
from .errors import ConfigError, PlanningFailure
from .planner import plan
from .sim.metrics import SUMMARY_FIELDS, EpisodeResult
from .sim.simulator import run_episode
from .sim.terrain import LEVELS, Ditch, Pillar, Sill, TerrainSpec, difficulty_level, generate_terrain

EXTENT = (8.0, 5.0)
START_X, GOAL_X = 0.8, 7.2


def _smooth_spec(k, rng, seed) -> TerrainSpec:
    pillars = tuple(Pillar(float(rng.uniform(2.5, 5.5)), float(rng.uniform(1.0, 4.0)), 0.25)
                    for _ in range(int(rng.integers(0, 3))))
    return TerrainSpec(terrain_id=f"s{k:02d}", extent=EXTENT, noise_amplitude=float(rng.uniform(0.05, 0.15)),
                       noise_wavelength=float(rng.uniform(2.0, 3.5)), rock_density=float(rng.uniform(0.05, 0.3)),
                       rock_radius=(0.15, 0.3), rock_height=(0.03, 0.1), pillars=pillars,
                       incline_direction=float(rng.uniform(-math.pi, math.pi)),
                       start=(START_X, 2.5, 0.0), goal=(GOAL_X, 2.5, 0.0), seed=seed)


def _rocky_spec(k, rng, seed) -> TerrainSpec:
    x = float(rng.uniform(2.5, 5.5))
    sills = (Sill(x, float(rng.uniform(1.5, 3.5)), angle=math.pi / 2, length=float(rng.uniform(1.5, 3.0)),
                  width=0.6, height=float(rng.uniform(0.14, 0.17))),)
    return TerrainSpec(terrain_id=f"r{k:02d}", extent=EXTENT, noise_amplitude=float(rng.uniform(0.08, 0.15)),
                       noise_wavelength=float(rng.uniform(1.5, 2.5)), rock_density=float(rng.uniform(0.3, 0.6)),
                       rock_radius=(0.15, 0.35), rock_height=(0.08, 0.2),
                       rubble_amplitude=float(rng.uniform(0.6, 0.9)), rubble_wavelength=0.3,
                       rubble_coverage=float(rng.uniform(0.32, 0.45)), sills=sills,
                       incline_direction=float(rng.uniform(-math.pi, math.pi)),
                       start=(START_X, 2.5, 0.0), goal=(GOAL_X, 2.5, 0.0), seed=seed)


def _corridor_spec(k, rng, seed) -> TerrainSpec:
    amp = float(rng.uniform(0.5, 1.0))
    period = float(rng.uniform(5.0, 8.0))
    phase = float(rng.uniform(0.0, 2 * math.pi))
    probe = TerrainSpec(extent=EXTENT, corridor_y=2.5, corridor_amplitude=amp, corridor_period=period,
                        corridor_phase=phase)

    def cy(x):
        return float(probe.corridor_center(x))

    sx = float(rng.uniform(2.5, 3.5))
    dx = float(rng.uniform(5.0, 5.8))
    side = 1.0 if rng.random() < 0.5 else -1.0
    return TerrainSpec(terrain_id=f"c{k:02d}", extent=EXTENT, noise_amplitude=0.1, noise_wavelength=2.0,
                       rubble_amplitude=float(rng.uniform(0.9, 1.0)), rubble_wavelength=0.3,
                       rubble_coverage=0.9, corridor_width=1.4, corridor_y=2.5, corridor_amplitude=amp,
                       corridor_period=period, corridor_phase=phase,
                       sills=(Sill(sx, cy(sx), angle=math.pi / 2, length=3.0, width=0.6,
                                   height=float(rng.uniform(0.14, 0.17))),),
                       ditches=(Ditch(dx, cy(dx) + side * 0.5, length=1.0, width=1.0, depth=0.3),),
                       incline_direction=float(rng.uniform(-math.pi, math.pi)),
                       start=(START_X, cy(START_X), 0.0), goal=(GOAL_X, cy(GOAL_X), 0.0), seed=seed)


def default_suite(seed: int = 7) -> list[TerrainSpec]:
    """27 seeded terrains: nine smooth, nine rocky with rubble patches, nine rubble corridors."""
    rng = np.random.default_rng(seed)
    specs = []
    for family in (_smooth_spec, _rocky_spec, _corridor_spec):
        for k in range(9):
            specs.append(family(len(specs), rng, int(rng.integers(2 ** 31))))
    return specs


SUITES = {"default": default_suite}


def build_suite(config: RunConfig) -> list[TerrainSpec]:
    """Base specs (inline or named suite) swept over the configured inclinations."""
    b = config.benchmark
    if b.terrains:
        base = [TerrainSpec.from_dict(dict(t)) for t in b.terrains]
    elif b.suite in SUITES:
        base = SUITES[b.suite](b.suite_seed)
    else:
        raise ConfigError(f"unknown terrain suite {b.suite!r}")
    ids = [s.terrain_id for s in base]
    if len(set(ids)) != len(ids):
        raise ConfigError("terrain ids in a suite must be unique")
    return [s.with_inclination(inc) for s in base for inc in b.inclinations]


def derive_seed(base: int, *parts) -> int:
    """``base`` XOR a stable 63-bit hash of the parts."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return (int(base) ^ int.from_bytes(digest[:8], "big")) & (2 ** 63 - 1)


@dataclass(frozen=True)
class _Unit:
    spec: TerrainSpec
    config: RunConfig
    methods: tuple


def _row(spec, level, method: Method, seed, trial, result: EpisodeResult) -> dict:
    row = {"terrain_id": spec.terrain_id, "level": level, "planner": method.planner,
           "controller": method.solver, "adaptive": int(method.adaptive), "seed": seed}
    row.update(result.summary())
    row["trial"] = trial
    return row


def run_unit(unit: _Unit) -> list[dict]:
    """All trials and methods on one terrain."""
    cfg = unit.config
    terrain = generate_terrain(unit.spec, cfg.assessment_config())
    level = difficulty_level(terrain, tuple(cfg.benchmark.level_cuts))
    sim_cfg = cfg.sim_config()
    blocked = terrain.obstacle_mask(sim_cfg.footprint_radius)
    spec = unit.spec
    rows = []
    planners = sorted({m.planner for m in unit.methods})
    for trial in range(cfg.benchmark.trials):
        for planner in planners:
            plan_seed = derive_seed(cfg.seed, spec.terrain_id, planner, trial)
            path = None
            try:
                path = plan(spec.start, spec.goal, terrain.maps, cfg.planner_config(planner),
                            np.random.default_rng(plan_seed), blocked=blocked)
                failure = None
            except PlanningFailure as exc:
                failure = str(exc)
            for method in (m for m in unit.methods if m.planner == planner):
                seed = derive_seed(cfg.seed, spec.terrain_id, method.name, trial)
                if path is None:
                    result = EpisodeResult.plan_failure(failure)
                else:
                    result = run_episode(terrain, controller_config=cfg.controller_config(method.solver,
                                                                                          method.adaptive),
                                         seed=seed, path=path, sim_config=sim_cfg, keep_log=False)
                rows.append(_row(spec, level, method, seed, trial, result))
    return rows


def _sort_key(row):
    return row["terrain_id"], row["method"], row["trial"]


def run_benchmark(config: RunConfig, methods=None, level: str | None = None, workers: int | None = None,
                  progress=None) -> list[dict]:
    """Run the whole matrix and return rows in deterministic order.

    ``level`` keeps only terrains of that difficulty; ``progress`` is called
    with (done, total) after each terrain.
    """
    methods = tuple(methods or config.methods())
    if level is not None and level not in LEVELS:
        raise ConfigError(f"level must be one of {', '.join(LEVELS)}")
    specs = build_suite(config)
    if level is not None:
        specs = [s for s in specs if difficulty_level(generate_terrain(s, config.assessment_config()),
                                                      tuple(config.benchmark.level_cuts)) == level]
    units = [_Unit(s, config, methods) for s in specs]
    workers = workers or config.benchmark.workers
    rows = []
    if workers > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for k, chunk in enumerate(pool.map(run_unit, units), 1):
                rows.extend(chunk)
                if progress:
                    progress(k, len(units))
    else:
        for k, unit in enumerate(units, 1):
            rows.extend(run_unit(unit))
            if progress:
                progress(k, len(units))
    for r in rows:
        r["method"] = _method_name(r)
    rows.sort(key=_sort_key)
    return rows


def _method_name(row) -> str:
    return f"{row['planner']}/{row['controller']}/{'adaptive' if int(row['adaptive']) else 'vanilla'}"


# ---------------------------------------------------------------- reporting

ROW_FIELDS = SUMMARY_FIELDS + ("trial",)
AGG_FIELDS = ("method", "level", "episodes", "success_pct", "steps", "progress_pct", "aeg_mm", "trav_pct",
              "cte_cm", "incons_cm")


def _mean(values):
    values = list(values)
    return math.fsum(values) / len(values) if values else float("nan")


def aggregate(rows) -> list[dict]:
    """Per-(method, level) aggregates.

    Success and progress average over every episode. Steps average over
    successful episodes. The trajectory metrics skip planning failures,
    which have no trajectory.
    """
    groups: dict = {}
    for r in rows:
        groups.setdefault((_method_name(r), r["level"]), []).append(r)
    out = []
    for (method, level) in sorted(groups, key=lambda k: (k[0], LEVELS.index(k[1]) if k[1] in LEVELS else 99, k[1])):
        g = groups[(method, level)]
        ran = [r for r in g if r["failure_reason"] != "plan_failure"]
        ok = [r for r in g if int(r["success"])]
        out.append({
            "method": method, "level": level, "episodes": len(g),
            "success_pct": 100.0 * _mean(int(r["success"]) for r in g),
            "steps": _mean(float(r["steps"]) for r in ok),
            "progress_pct": 100.0 * _mean(float(r["progress"]) for r in g),
            "aeg_mm": _mean(float(r["aeg_mm"]) for r in ran),
            "trav_pct": _mean(float(r["trav_pct"]) for r in ran),
            "cte_cm": _mean(float(r["cte_cm"]) for r in ran),
            "incons_cm": _mean(float(r["incons_cm"]) for r in ran),
        })
    return out


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def write_rows(path, rows, fields) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[f]) for f in fields])


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return rows
    missing = set(ROW_FIELDS) - set(rows[0])
    if missing:
        raise ConfigError(f"{path}: missing columns {', '.join(sorted(missing))}")
    for r in rows:
        for k in ("success", "steps", "adaptive", "seed", "trial"):
            r[k] = int(r[k])
        for k in ("progress", "aeg_mm", "trav_pct", "cte_cm", "incons_cm"):
            r[k] = float(r[k])
        r["method"] = _method_name(r)
    return rows


def render_table(aggregates) -> str:
    """Text table: one block per level, one line per method."""
    buf = io.StringIO()
    cols = ("success_pct", "steps", "progress_pct", "aeg_mm", "trav_pct", "cte_cm", "incons_cm")
    heads = ("Success%", "Steps", "Progress%", "AEG mm", "Trav%", "CTE cm", "Incons cm")
    width = max([len(a["method"]) for a in aggregates] + [6])
    levels = sorted({a["level"] for a in aggregates}, key=lambda s: LEVELS.index(s) if s in LEVELS else 99)
    for level in levels:
        buf.write(f"[{level}]\n")
        buf.write(f"{'method':<{width}}  {'n':>4}  " + "  ".join(f"{h:>9}" for h in heads) + "\n")
        for a in (a for a in aggregates if a["level"] == level):
            vals = "  ".join(f"{a[c]:>9.2f}" for c in cols)
            buf.write(f"{a['method']:<{width}}  {a['episodes']:>4}  {vals}\n")
        buf.write("\n")
    return buf.getvalue()


def write_report(out_dir, rows, config: RunConfig | None = None) -> dict:
    """Write episodes.csv, summary.csv, report.txt (and config.json); return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"episodes": out / "episodes.csv", "summary": out / "summary.csv", "report": out / "report.txt"}
    write_rows(paths["episodes"], rows, ROW_FIELDS)
    aggs = aggregate(rows)
    write_rows(paths["summary"], aggs, AGG_FIELDS)
    paths["report"].write_text(render_table(aggs))
    if config is not None:
        paths["config"] = out / "config.json"
        paths["config"].write_text(config.to_json())
    return paths


__all__ = ["default_suite", "build_suite", "derive_seed", "run_unit", "run_benchmark", "aggregate",
           "write_rows", "read_rows", "render_table", "write_report", "ROW_FIELDS", "AGG_FIELDS", "SUITES"]
