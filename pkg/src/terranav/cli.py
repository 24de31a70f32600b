"""Command-line entry point: assess, plan, simulate, benchmark, report.

Exit codes: 0 success, 2 bad config or input, 3 planning failure, 1 anything
else. Errors go to stderr as ``error[<category>]: <message>``.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .benchmark import AGG_FIELDS, aggregate, read_rows, render_table, run_benchmark, write_report, write_rows
from .config import Method, RunConfig, load_config
from .errors import ConfigError, MapFormatError, PlanningFailure
from .gridmap import GridSpec
from .mapio import read_heightmap, write_grid_csv
from .planner import PLANNER_MODES, plan_with_tree, read_path_csv, write_path_csv, write_tree_csv
from .sim.metrics import SUMMARY_FIELDS, TRAJECTORY_FIELDS
from .sim.simulator import run_episode, straight_path
from .sim.terrain import LEVELS, TerrainSpec, difficulty_level, generate_terrain, sill_scenario
from .traversability import assess

OUT_ENV = "TERRANAV_OUT"

EXIT_INPUT = 2
EXIT_PLAN = 3


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


def flat_scenario(seed: int = 0) -> TerrainSpec:
    return TerrainSpec(terrain_id="flat", extent=(7.0, 4.0), start=(1.0, 2.0, 0.0), goal=(6.0, 2.0, 0.0),
                       seed=seed)


# Named scenarios drive a fixed straight route so only the controller matters.
SCENARIOS = {"flat": flat_scenario, "sill": lambda seed=0: sill_scenario(seed=seed)}


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _out_dir(args, cfg: RunConfig, default_leaf: str) -> Path:
    # Precedence: --out, then the environment, then the config.
    if args.out:
        out = Path(args.out)
    elif os.environ.get(OUT_ENV):
        out = Path(os.environ[OUT_ENV])
    else:
        out = Path(cfg.output) / default_leaf
    out.mkdir(parents=True, exist_ok=True)
    return out


def _pose(text: str | None):
    if text is None:
        return None
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise CliError("input", f"pose {text!r} is not x,y,heading", EXIT_INPUT) from None
    if len(vals) != 3:
        raise CliError("input", f"pose {text!r} needs three comma-separated numbers", EXIT_INPUT)
    return vals


def _load_spec(source: str, seed: int) -> TerrainSpec:
    if source in SCENARIOS:
        return SCENARIOS[source](seed)
    try:
        data = json.loads(Path(source).read_text())
    except OSError as exc:
        raise CliError("input", f"cannot read {source}: {exc.strerror}", EXIT_INPUT) from None
    except json.JSONDecodeError as exc:
        raise CliError("input", f"{source}: not valid JSON ({exc.msg})", EXIT_INPUT) from None
    try:
        return TerrainSpec.from_dict(data)
    except TypeError as exc:
        raise CliError("config", f"{source}: {exc}", EXIT_INPUT) from None


def _load_source(source: str, args, cfg: RunConfig):
    """(maps, terrain-or-None) from a heightmap file, a terrain spec JSON or a scenario name."""
    suffix = Path(source).suffix.lower()
    if suffix in (".csv", ".pgm"):
        origin = tuple(args.origin) if getattr(args, "origin", None) else None
        hmap = read_heightmap(source, getattr(args, "resolution", None), origin)
        return assess(hmap, cfg.assessment_config()), None
    terrain = generate_terrain(_load_spec(source, cfg.seed), cfg.assessment_config())
    return terrain.maps, terrain


# ------------------------------------------------------------------ commands

def cmd_assess(args) -> int:
    cfg = _config(args)
    maps, terrain = _load_source(args.input, args, cfg)
    out = _out_dir(args, cfg, "assess")
    spec: GridSpec = maps.spec
    write_grid_csv(out / "height.csv", maps.height.cells, spec)
    for k, axis in enumerate("xyz"):
        write_grid_csv(out / f"normal_{axis}.csv", maps.normals.cells[..., k], spec)
    write_grid_csv(out / "traversability.csv", maps.trav.cells, spec)
    write_grid_csv(out / "constraints.csv", maps.constraints.cells, spec)
    observed = ~maps.height.vacant
    tau = maps.trav.cells[observed]
    summary = {
        "cells": int(observed.size), "observed_cells": int(observed.sum()),
        "normal_cells": int(maps.normals.present.sum()),
        "tau_mean": float(tau.mean()) if tau.size else 1.0,
        "tau_max": float(tau.max()) if tau.size else 1.0,
        "constrained_cells": int(maps.constraints.cells.sum()),
        "level": difficulty_level(maps, tuple(cfg.benchmark.level_cuts)),
    }
    if terrain is not None:
        summary["terrain_id"] = terrain.terrain_id
    (out / "features.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"assessed {summary['observed_cells']} cells, mean tau {summary['tau_mean']:.4f} -> {out}")
    return 0


def cmd_plan(args) -> int:
    cfg = _config(args)
    mode = args.method or "tao"
    if mode not in PLANNER_MODES:
        raise CliError("config", f"planner must be one of {', '.join(PLANNER_MODES)}", EXIT_INPUT)
    maps, terrain = _load_source(args.input, args, cfg)
    start = _pose(args.start) or (terrain.spec.start if terrain else None)
    goal = _pose(args.goal) or (terrain.spec.goal if terrain else None)
    if start is None or goal is None:
        raise CliError("input", "--start and --goal are required for heightmap input", EXIT_INPUT)
    out = _out_dir(args, cfg, "plan")
    blocked = terrain.obstacle_mask(cfg.sim.footprint_radius) if terrain else None
    rng = np.random.default_rng(cfg.seed)
    try:
        result = plan_with_tree(start, goal, maps, cfg.planner_config(mode), rng, blocked=blocked)
    except PlanningFailure as exc:
        if exc.tree is not None:
            write_tree_csv(out / "tree.csv", exc.tree)
        raise CliError("plan", f"{exc} ({_stats(exc.stats)})", EXIT_PLAN) from None
    write_path_csv(out / "path.csv", result.path)
    write_tree_csv(out / "tree.csv", result.tree)
    print(f"path with {len(result.path)} waypoints, length {result.path.length:.3f} m ({_stats(result.stats)})"
          f" -> {out}")
    return 0


def _stats(stats: dict) -> str:
    return ", ".join(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}" for k, v in stats.items())


def cmd_simulate(args) -> int:
    cfg = _config(args)
    method = _method(args.method or "tao/mppi/adaptive")
    spec = _load_spec(args.input, cfg.seed)
    terrain = generate_terrain(spec, cfg.assessment_config())
    level = difficulty_level(terrain, tuple(cfg.benchmark.level_cuts))
    if args.path:
        try:
            path = read_path_csv(args.path)
        except (OSError, ValueError) as exc:
            raise CliError("input", str(exc), EXIT_INPUT) from None
    elif args.input in SCENARIOS:
        path = straight_path(terrain, speed=cfg.planner.nominal_speed)
    else:
        path = None
    result = run_episode(terrain, planner_config=cfg.planner_config(method.planner),
                         controller_config=cfg.controller_config(method.solver, method.adaptive),
                         seed=cfg.seed, path=path, sim_config=cfg.sim_config())
    out = _out_dir(args, cfg, "simulate")
    row = {"terrain_id": spec.terrain_id, "level": level, "planner": method.planner,
           "controller": method.solver, "adaptive": int(method.adaptive), "seed": cfg.seed}
    row.update(result.summary())
    with open(out / "trajectory.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_FIELDS)
        w.writerows([repr(float(v)) for v in r] for r in result.trajectory)
    if result.path is not None:
        write_path_csv(out / "path.csv", result.path)
    line = ",".join(str(row[f]) for f in SUMMARY_FIELDS)
    (out / "summary.csv").write_text(",".join(SUMMARY_FIELDS) + "\n" + line + "\n")
    print(line)
    return 0


def _method(text: str) -> Method:
    try:
        return Method.parse(text)
    except ConfigError as exc:
        raise CliError("config", str(exc), EXIT_INPUT) from None


def _level(text: str | None) -> str | None:
    if text is not None and text not in LEVELS:
        raise CliError("config", f"level must be one of {', '.join(LEVELS)}", EXIT_INPUT)
    return text


def cmd_benchmark(args) -> int:
    cfg = _config(args)
    methods = [_method(m) for m in args.method] if args.method else None
    level = _level(args.level)
    out = _out_dir(args, cfg, "benchmark")

    def progress(k, n):
        if not args.quiet:
            print(f"terrain {k}/{n}", file=sys.stderr, flush=True)

    rows = run_benchmark(cfg, methods, level, args.workers, progress)
    paths = write_report(out, rows, cfg)
    print(paths["report"].read_text(), end="")
    return 0


def cmd_report(args) -> int:
    src = Path(args.input)
    episodes = src / "episodes.csv" if src.is_dir() else src
    try:
        rows = read_rows(episodes)
    except OSError as exc:
        raise CliError("input", f"cannot read {episodes}: {exc.strerror}", EXIT_INPUT) from None
    except (KeyError, ValueError) as exc:
        raise CliError("input", f"{episodes}: malformed row ({exc})", EXIT_INPUT) from None
    level = _level(args.level)
    if level:
        rows = [r for r in rows if r["level"] == level]
    if args.method:
        keep = {_method(m).name for m in args.method}
        rows = [r for r in rows if r["method"] in keep]
    aggs = aggregate(rows)
    text = render_table(aggs)
    if args.out or os.environ.get(OUT_ENV):
        out = Path(args.out or os.environ[OUT_ENV])
        out.mkdir(parents=True, exist_ok=True)
        write_rows(out / "summary.csv", aggs, AGG_FIELDS)
        (out / "report.txt").write_text(text)
    print(text, end="")
    return 0


# ------------------------------------------------------------------ parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"error[usage]: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="terranav", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, help="override the base seed")
        sp.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else the config's output)")

    def grid(sp):
        sp.add_argument("--resolution", type=float, help="cell size for CSV heightmaps without a sidecar")
        sp.add_argument("--origin", type=float, nargs=2, metavar=("X", "Y"), help="map origin without a sidecar")

    sp = sub.add_parser("assess", help="traversability and constraint maps for a heightmap or terrain")
    sp.add_argument("input", help="heightmap (.csv/.pgm), terrain spec (.json) or scenario name")
    common(sp)
    grid(sp)
    sp.set_defaults(func=cmd_assess)

    sp = sub.add_parser("plan", help="plan a path and dump the search tree")
    sp.add_argument("input", help="heightmap (.csv/.pgm), terrain spec (.json) or scenario name")
    sp.add_argument("--start", help="x,y,heading")
    sp.add_argument("--goal", help="x,y,heading")
    sp.add_argument("--method", help=f"planner mode: {', '.join(PLANNER_MODES)}")
    common(sp)
    grid(sp)
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("simulate", help="run one episode and print its summary line")
    sp.add_argument("input", help=f"terrain spec (.json) or scenario: {', '.join(SCENARIOS)}")
    sp.add_argument("--path", help="waypoint CSV to track instead of planning")
    sp.add_argument("--method", help="planner/solver/adaptive|vanilla, e.g. tao/mppi/vanilla")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("benchmark", help="run the terrain x method x trial matrix")
    sp.add_argument("--method", action="append", help="restrict to a method (repeatable)")
    sp.add_argument("--level", help=f"keep only terrains of one level: {', '.join(LEVELS)}")
    sp.add_argument("--workers", type=int, help="process pool size (default from config)")
    sp.add_argument("--quiet", action="store_true", help="no progress on stderr")
    common(sp)
    sp.set_defaults(func=cmd_benchmark)

    sp = sub.add_parser("report", help="re-aggregate an episodes CSV")
    sp.add_argument("input", help="episodes.csv or a benchmark output directory")
    sp.add_argument("--method", action="append", help="restrict to a method (repeatable)")
    sp.add_argument("--level", help="restrict to one level")
    sp.add_argument("--out", help="also write summary.csv and report.txt here")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error[config]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MapFormatError as exc:
        print(f"error[input]: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PlanningFailure as exc:
        print(f"error[plan]: {exc}", file=sys.stderr)
        return EXIT_PLAN


if __name__ == "__main__":
    sys.exit(main())
