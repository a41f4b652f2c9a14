"""Euler-Maruyama time integration, Brownian path management, blow-up and
penetration detection, and the damped-relaxation bootstrap that produces
stationary schooling states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels, metrics
from .dynamics import (
    AgentInsideObstacle,
    DegenerateDistance,
    _force_args,
    delta_min,
    drift,
)
from .model import (
    BlowUp,
    Completed,
    InvalidParams,
    LinearDrag,
    ModelParams,
    Obstacle,
    Penetration,
    SchoolingCriteria,
    SchoolSimError,
    SwarmState,
    Termination,
    validate,
)

# Speeds this many times the reference speed (initial max speed, floored at
# 1) are treated as finite-time blow-up rather than integrated onward.
V_MAX_FACTOR = 1e3

# Fresh random placements keep pairs at least this many critical distances
# apart: the matching weight at half the critical distance is the largest
# the explicit scheme integrates stably at the default step.
MIN_SEPARATION_FACTOR = 0.5


class NoConvergence(SchoolSimError):
    """Relaxation did not reach a stationary schooling state in time."""


class GapTooSmall(SchoolSimError):
    """Requested school-to-obstacle gap does not clear the school radius."""


@dataclass(frozen=True, eq=False)
class BrownianPaths:
    """Unit-variance Gaussian increments for every agent and step.

    Stored unscaled: the integrator multiplies by sigma and sqrt(dt), so one
    set of paths serves a whole noise-magnitude sweep.
    """

    seed: int
    increments: np.ndarray

    def __post_init__(self):
        inc = np.ascontiguousarray(self.increments, dtype=float)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @classmethod
    def generate(cls, seed: int, n_steps: int, n_agents: int, dim: int) -> "BrownianPaths":
        rng = np.random.default_rng(seed)
        return cls(seed=seed, increments=rng.standard_normal((n_steps, n_agents, dim)))

    def scaled(self, factor: float) -> "BrownianPaths":
        return BrownianPaths(seed=self.seed, increments=self.increments * factor)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def n_agents(self) -> int:
        return self.increments.shape[1]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]


_DUMMY_NOISE = np.zeros((1, 1, 1))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States sampled every ``record_every`` integration steps.

    states[0] is the initial state; later entries sit record_every * dt
    apart (the final step is always included). After a BlowUp or
    Penetration at step s, no state from step s onward is stored.
    """

    dt: float
    record_every: int
    states: tuple[SwarmState, ...]
    termination: Termination

    @property
    def final_state(self) -> SwarmState:
        return self.states[-1]

    @property
    def completed(self) -> bool:
        return isinstance(self.termination, Completed)


def _v_max2(initial: SwarmState) -> float:
    speed0 = float(np.sqrt(np.max(np.sum(initial.velocities**2, axis=1))))
    v_max = V_MAX_FACTOR * max(speed0, 1.0)
    return v_max * v_max


def step(state: SwarmState, params: ModelParams, noise, dt: float) -> SwarmState:
    """One Euler-Maruyama step; drift is evaluated at the pre-step state.

    noise holds one standard-normal vector per agent; the position update
    adds sigma * sqrt(dt) * noise on top of the v * dt transport.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    x = np.array(state.positions)
    v = np.array(state.velocities)
    acc = np.empty_like(x)
    code, agent = _kernels.em_step(
        x, v, np.ascontiguousarray(noise, dtype=float), dt, params.sigma,
        params.alpha, params.beta, params.p_exp, params.q_exp, params.r_crit,
        delta_min(params.r_crit), *_force_args(params), np.inf, acc,
    )
    if code == _kernels.DEGENERATE:
        raise DegenerateDistance(f"near-contact at agent {agent}")
    if code in (_kernels.INSIDE, _kernels.PENETRATED):
        raise AgentInsideObstacle(f"agent {agent} inside obstacle")
    if code != _kernels.OK:
        raise SchoolSimError(f"non-finite state produced at agent {agent}")
    return SwarmState(time=state.time + dt, positions=x, velocities=v)


def _run_raw(
    initial: SwarmState,
    params: ModelParams,
    increments: np.ndarray | None,
    dt: float,
    n_steps: int,
    record_every: int,
) -> Trajectory:
    """Integration core; assumes params already validated."""
    x = np.array(initial.positions)
    v = np.array(initial.velocities)
    if params.sigma != 0.0:
        noise = np.ascontiguousarray(increments[:n_steps], dtype=float)
    else:
        noise = _DUMMY_NOISE
    n_rec_max = n_steps // record_every + (1 if n_steps % record_every else 0)
    n, d = x.shape
    out_x = np.empty((n_rec_max, n, d))
    out_v = np.empty((n_rec_max, n, d))
    out_step = np.empty(n_rec_max, dtype=np.int64)
    code, stop_step, agent, n_rec = _kernels.run_sde(
        x, v, noise, dt, params.sigma, n_steps,
        params.alpha, params.beta, params.p_exp, params.q_exp, params.r_crit,
        delta_min(params.r_crit), *_force_args(params), _v_max2(initial),
        record_every, out_x, out_v, out_step,
    )
    states = [initial]
    t0 = initial.time
    for k in range(n_rec):
        states.append(
            SwarmState(
                time=t0 + out_step[k] * dt,
                positions=out_x[k],
                velocities=out_v[k],
            )
        )
    if code == _kernels.OK:
        termination: Termination = Completed()
    elif code in (_kernels.DEGENERATE, _kernels.NONFINITE):
        termination = BlowUp(step=int(stop_step), agent=int(agent))
    else:
        termination = Penetration(step=int(stop_step), agent=int(agent))
    return Trajectory(
        dt=dt, record_every=record_every, states=tuple(states), termination=termination
    )


def simulate(
    initial: SwarmState,
    params: ModelParams,
    paths: BrownianPaths | None,
    dt: float,
    t_end: float,
    record_every: int = 10,
) -> Trajectory:
    """Integrate the system over [0, t_end] from the initial state.

    Blow-up (non-finite coordinates, the speed sentinel, or near-contact)
    and obstacle penetration end the run early and are reported on the
    trajectory rather than raised: partial trajectories are valid outputs.
    """
    validate(params)
    if initial.positions.shape != (params.n_agents, params.dim):
        raise InvalidParams(
            f"state shape {initial.positions.shape} does not match "
            f"(n_agents, dim)=({params.n_agents}, {params.dim})"
        )
    if not (dt > 0 and t_end > 0):
        raise ValueError(f"dt and t_end must be > 0, got dt={dt}, t_end={t_end}")
    if not record_every >= 1:
        raise ValueError(f"record_every must be >= 1, got {record_every}")
    n_steps = int(round(t_end / dt))
    if params.sigma != 0.0:
        if paths is None:
            raise ValueError("sigma > 0 requires Brownian paths")
        if paths.n_steps < n_steps:
            raise ValueError(
                f"paths cover {paths.n_steps} steps but {n_steps} are needed"
            )
        increments = paths.increments
    else:
        increments = None
    return _run_raw(initial, params, increments, dt, n_steps, record_every)


def random_school_positions(
    rng: np.random.Generator,
    n_agents: int,
    dim: int,
    r_crit: float,
    side: float | None = None,
) -> np.ndarray:
    """Uniform positions in a centered box, default side 2 * r * N^(1/d).

    Agents are redrawn until no pair sits closer than half the critical
    distance, which keeps the first interaction step within the stable
    range of the explicit scheme.
    """
    if side is None:
        side = 2.0 * r_crit * n_agents ** (1.0 / dim)
    min_sep = MIN_SEPARATION_FACTOR * r_crit
    positions = np.empty((n_agents, dim))
    for i in range(n_agents):
        for _ in range(10_000):
            cand = rng.uniform(-side / 2.0, side / 2.0, dim)
            if i == 0 or np.min(
                np.linalg.norm(positions[:i] - cand, axis=1)
            ) >= min_sep:
                positions[i] = cand
                break
        else:
            raise SchoolSimError("could not place agents with minimum separation")
    return positions


def relax_to_schooling(
    params: ModelParams,
    criteria: SchoolingCriteria,
    seed: int,
    dt: float = 1e-3,
    t_max: float = 3000.0,
    record_every: int = 10,
    dwell: float = 1.0,
) -> SwarmState:
    """Damp a random cloud of agents into a stationary schooling state.

    Runs the noise-free system under the configured linear drag from random
    positions until the group is one component, the velocity variation and
    every speed are at or below theta, the residual interaction forces are
    within ten theta, and those conditions hold for a full dwell window. The
    returned state has its velocities zeroed and time 0, and is a fixed
    point of the drift up to that force residual.
    """
    validate(params)
    if not isinstance(params.external_force, LinearDrag):
        raise InvalidParams("relaxation requires a LinearDrag external force")
    rng = np.random.default_rng(seed)
    positions = random_school_positions(rng, params.n_agents, params.dim, params.r_crit)
    if params.n_agents == 1:
        return SwarmState(time=0.0, positions=positions, velocities=np.zeros_like(positions))
    work = params.with_sigma(0.0)
    state = SwarmState(time=0.0, positions=positions, velocities=np.zeros_like(positions))
    sample_dt = record_every * dt
    dwell_needed = max(1, math.ceil(dwell / sample_dt))
    chunk_t = max(10.0, 2.0 * dwell)
    chunk_steps = int(round(chunk_t / dt))

    def stationary(s: SwarmState) -> bool:
        speed2 = np.max(np.sum(s.velocities**2, axis=1))
        if not (
            speed2 <= criteria.theta**2
            and metrics.sigma_v(s) <= criteria.theta
            and metrics.epsilon_components(s, criteria.epsilon) == 1
        ):
            return False
        rest = SwarmState(time=s.time, positions=s.positions,
                          velocities=np.zeros_like(s.positions))
        acc, _ = drift(rest, work)
        return float(np.max(np.sum(acc * acc, axis=1))) <= (10.0 * criteria.theta) ** 2

    streak = 1 if stationary(state) else 0
    if streak >= dwell_needed:  # dwell window shorter than one sample
        return SwarmState(time=0.0, positions=state.positions,
                          velocities=np.zeros_like(state.positions))
    elapsed = 0.0
    while elapsed < t_max:
        traj = _run_raw(state, work, None, dt, chunk_steps, record_every)
        if not traj.completed:
            raise NoConvergence(f"relaxation terminated with {traj.termination}")
        for s in traj.states[1:]:
            streak = streak + 1 if stationary(s) else 0
            if streak >= dwell_needed:
                return SwarmState(
                    time=0.0, positions=s.positions,
                    velocities=np.zeros_like(s.positions),
                )
        state = traj.final_state
        elapsed += chunk_t
    raise NoConvergence(f"no stationary schooling state within t_max={t_max}")


def place_school(
    state: SwarmState, obstacle: Obstacle, gap: float, speed: float
) -> SwarmState:
    """Aim a relaxed school at the obstacle along the first axis.

    The school centroid moves to obstacle.center - gap * e1 and every agent
    velocity becomes (speed, 0, ...).
    """
    school_radius = metrics.diameter(state)
    if not gap > obstacle.radius + school_radius:
        raise GapTooSmall(
            f"gap {gap} must exceed obstacle radius {obstacle.radius} "
            f"plus school radius {school_radius:.3f}"
        )
    target = np.array(obstacle.center, dtype=float)
    target[0] -= gap
    positions = state.positions - metrics.centroid(state) + target
    velocities = np.zeros_like(positions)
    velocities[:, 0] = speed
    return SwarmState(time=state.time, positions=positions, velocities=velocities)
