"""Run configuration: one JSON tree holding every tunable setting by name.

The ``hyperparameters`` block carries the core constants under their usual
symbols (T, N, H, W, delta_L, ...). The other blocks hold the remaining
module settings. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import typing
from dataclasses import dataclass
from pathlib import Path

from .controller import (ControlBounds, ControllerConfig, MPCConfig, MPPIConfig, ObjectiveWeights)
from .errors import ConfigError
from .planner import PLANNER_MODES, PlannerConfig
from .sim.simulator import SimConfig
from .sim.terrain import TerrainSpec
from .traversability import AssessmentConfig, FeatureThresholds, FeatureWeights


@dataclass(frozen=True)
class Hyperparameters:
    T: int = 20  # controller horizon, steps
    N: int = 2000  # planner iteration budget
    H: int = 500  # rasterized map height, cells
    W: int = 500  # rasterized map width, cells
    delta_L: float = 0.1  # edge sampling interval, metres
    delta_t: float = 0.1  # control period, seconds
    alpha_1: float = 0.3
    alpha_2: float = 0.3
    alpha_3: float = 0.4
    kappa: float = 5.0
    k_q: float = 5.0
    r_min: float = 0.2
    r_max: float = 0.8
    eps_slope: float = 0.7
    eps_sparsity: float = 0.6
    eps_bumpiness: float = 0.5
    Q_x: float = 10.0
    Q_y: float = 10.0
    Q_phi: float = 1.0
    R_zeta: float = 0.5
    R_omega: float = 0.5
    W_v: float = 3.0


@dataclass(frozen=True)
class AssessmentBlock:
    kernel_side: int = 5
    b_max: float = 0.1
    roughness: str = "bumpiness"
    resolution: float = 0.1  # cell size when rasterizing point clouds


@dataclass(frozen=True)
class PlannerBlock:
    cost_form: str = "verbatim"
    turning_radius: float = 0.5
    max_extension: float = 1.5
    stall_iterations: int = 500
    goal_bias: float = 0.05
    goal_tolerance: float = 0.5
    goal_heading_tolerance_deg: float = 30.0
    rewire_gamma: float = 10.0
    max_rejections: int = 100_000
    nominal_speed: float = 0.63
    speed_max: float = 1.0


@dataclass(frozen=True)
class BoundsBlock:
    zeta_min: float = -0.3
    zeta_max: float = 1.0
    omega_max: float = 1.5


@dataclass(frozen=True)
class MPPIBlock:
    n_rollouts: int = 256
    noise_std: tuple = (0.15, 0.3)
    temperature: float = 1.0
    iterations: int = 3


@dataclass(frozen=True)
class MPCBlock:
    iterations: int = 15
    step_size: float = 0.05
    fd_step: float = 1e-5
    max_backtracks: int = 12


@dataclass(frozen=True)
class ControllerBlock:
    solver: str = "mppi"
    adaptive: bool = True
    state_error: str = "contour"
    lambda_open: float = 1.0
    open_samples: int = 16
    open_radius: float = 0.3
    kernel_side: int = 5
    goal_tolerance: float = 0.3
    lookbehind: float = 0.3
    lookahead: float = 2.5
    completion: float = 0.995
    bounds: BoundsBlock = BoundsBlock()
    mppi: MPPIBlock = MPPIBlock()
    mpc: MPCBlock = MPCBlock()


@dataclass(frozen=True)
class SimBlock:
    grade_max_deg: float = 25.0
    zeta_surmount: float = 0.6
    tipover_max_deg: float = 35.0
    ground_clearance: float = 0.13
    footprint_radius: float = 0.4
    stuck_window: float = 30.0
    stuck_pos_eps: float = 0.05
    stuck_ang_eps: float = 0.1
    max_steps: int = 3000


DEFAULT_METHODS = ("tao/mppi/adaptive", "tao/mppi/vanilla", "tau_only/mppi/adaptive",
                   "dem/mppi/adaptive", "dem/mppi/vanilla")


@dataclass(frozen=True)
class BenchmarkBlock:
    suite: str = "default"  # name of a built-in suite, ignored when ``terrains`` is given
    suite_seed: int = 7
    terrains: tuple = ()  # inline terrain specs (dicts)
    inclinations: tuple = (0.0, 5.0, 10.0, 15.0)
    trials: int = 5
    methods: tuple = DEFAULT_METHODS
    level_cuts: tuple = (0.15, 0.35)
    workers: int = 1


@dataclass(frozen=True)
class Method:
    planner: str
    solver: str
    adaptive: bool

    @classmethod
    def parse(cls, text: str) -> "Method":
        parts = text.strip().split("/")
        if len(parts) != 3:
            raise ConfigError(f"method {text!r} must look like planner/solver/adaptive|vanilla")
        planner, solver, mode = parts
        if planner not in PLANNER_MODES:
            raise ConfigError(f"unknown planner {planner!r} in method {text!r}")
        if solver not in ("mppi", "mpc"):
            raise ConfigError(f"unknown solver {solver!r} in method {text!r}")
        if mode not in ("adaptive", "vanilla"):
            raise ConfigError(f"controller mode must be adaptive or vanilla, got {mode!r}")
        return cls(planner, solver, mode == "adaptive")

    @property
    def name(self) -> str:
        return f"{self.planner}/{self.solver}/{'adaptive' if self.adaptive else 'vanilla'}"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    output: str = "runs"
    hyperparameters: Hyperparameters = Hyperparameters()
    assessment: AssessmentBlock = AssessmentBlock()
    planner: PlannerBlock = PlannerBlock()
    controller: ControllerBlock = ControllerBlock()
    sim: SimBlock = SimBlock()
    benchmark: BenchmarkBlock = BenchmarkBlock()

    def __post_init__(self):
        # Build every derived config once so invalid values surface at load time.
        try:
            self.assessment_config()
            self.planner_config()
            self.controller_config()
            self.sim_config()
            self.methods()
            for spec in self.benchmark.terrains:
                TerrainSpec.from_dict(dict(spec))
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        b = self.benchmark
        if b.trials < 1:
            raise ConfigError("benchmark trials must be >= 1")
        if b.workers < 1:
            raise ConfigError("benchmark workers must be >= 1")
        lo, hi = b.level_cuts
        if not 0 <= lo < hi <= 1:
            raise ConfigError("level cuts must satisfy 0 <= easy < plain <= 1")

    # -- derived module configs ------------------------------------------------

    def assessment_config(self) -> AssessmentConfig:
        h, a = self.hyperparameters, self.assessment
        return AssessmentConfig(
            kernel_side=a.kernel_side, b_max=a.b_max, roughness=a.roughness,
            weights=FeatureWeights(h.alpha_1, h.alpha_2, h.alpha_3),
            thresholds=FeatureThresholds(h.r_min, h.r_max, h.eps_slope, h.eps_sparsity, h.eps_bumpiness))

    def planner_config(self, mode: str = "tao") -> PlannerConfig:
        h, p = self.hyperparameters, self.planner
        return PlannerConfig(
            mode=mode, cost_form=p.cost_form, kappa=h.kappa, delta_l=h.delta_L,
            turning_radius=p.turning_radius, max_extension=p.max_extension, iterations=h.N,
            stall_iterations=p.stall_iterations, goal_bias=p.goal_bias, goal_tolerance=p.goal_tolerance,
            goal_heading_tolerance=math.radians(p.goal_heading_tolerance_deg), rewire_gamma=p.rewire_gamma,
            max_rejections=p.max_rejections, nominal_speed=p.nominal_speed, speed_max=p.speed_max)

    def controller_config(self, solver: str | None = None, adaptive: bool | None = None) -> ControllerConfig:
        h, c = self.hyperparameters, self.controller
        weights = ObjectiveWeights(Q=(h.Q_x, h.Q_y, h.Q_phi), R=(h.R_zeta, h.R_omega), W_v=h.W_v, k_q=h.k_q,
                                   lambda_open=c.lambda_open, horizon=h.T, dt=h.delta_t)
        return ControllerConfig(
            solver=c.solver if solver is None else solver,
            adaptive=c.adaptive if adaptive is None else adaptive,
            state_error=c.state_error, weights=weights,
            bounds=ControlBounds(c.bounds.zeta_min, c.bounds.zeta_max, c.bounds.omega_max),
            mppi=MPPIConfig(c.mppi.n_rollouts, tuple(c.mppi.noise_std), c.mppi.temperature, c.mppi.iterations),
            mpc=MPCConfig(c.mpc.iterations, c.mpc.step_size, c.mpc.fd_step, c.mpc.max_backtracks),
            open_samples=c.open_samples, open_radius=c.open_radius, kernel_side=c.kernel_side,
            goal_tolerance=c.goal_tolerance, lookbehind=c.lookbehind, lookahead=c.lookahead,
            completion=c.completion)

    def sim_config(self) -> SimConfig:
        s = self.sim
        return SimConfig(dt=self.hyperparameters.delta_t, grade_max=math.tan(math.radians(s.grade_max_deg)),
                         zeta_surmount=s.zeta_surmount, tipover_max=math.radians(s.tipover_max_deg),
                         ground_clearance=s.ground_clearance, footprint_radius=s.footprint_radius,
                         stuck_window=s.stuck_window, stuck_pos_eps=s.stuck_pos_eps,
                         stuck_ang_eps=s.stuck_ang_eps, max_steps=s.max_steps)

    def methods(self) -> list[Method]:
        return [Method.parse(m) for m in self.benchmark.methods]

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return _build(cls, d, "config")

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    return obj


def _coerce(tp, value, where):
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true or false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    if tp is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where} must be a list")
        return tuple(_plain_item(v) for v in value)
    return value


def _plain_item(v):
    if isinstance(v, list):
        return tuple(_plain_item(x) for x in v)
    if isinstance(v, dict):
        return {k: _list_free(x) for k, x in v.items()}
    return v


def _list_free(v):
    # Inline terrain specs keep plain lists so they stay JSON-shaped.
    if isinstance(v, tuple):
        return [_list_free(x) for x in v]
    if isinstance(v, list):
        return [_list_free(x) for x in v]
    if isinstance(v, dict):
        return {k: _list_free(x) for k, x in v.items()}
    return v


def _build(cls, d, where):
    if not isinstance(d, dict):
        raise ConfigError(f"{where} must be an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - names)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    kwargs = {k: _coerce(hints[k], v, f"{where}.{k}") for k, v in d.items()}
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Read a JSON config file; missing keys take their defaults."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(config.to_json())


__all__ = ["Hyperparameters", "AssessmentBlock", "PlannerBlock", "ControllerBlock", "BoundsBlock", "MPPIBlock",
           "MPCBlock", "SimBlock", "BenchmarkBlock", "RunConfig", "Method", "DEFAULT_METHODS", "load_config",
           "save_config"]
