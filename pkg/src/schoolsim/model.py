"""Domain types and parameter validation shared by every other module.

All types are immutable value objects: arrays they carry are copied on
construction and marked read-only, so instances can be shared freely
between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np


class SchoolSimError(Exception):
    """Base class for every error raised by this package."""


class InvalidParams(SchoolSimError):
    """A model parameter violates its constraint; the message names it."""


def _frozen_array(values, dim: int | None = None) -> np.ndarray:
    a = np.array(values, dtype=float)
    if dim is not None and a.ndim != dim:
        raise ValueError(f"expected a {dim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Obstacle:
    """Static sphere the agents must avoid: center point and radius."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _frozen_array(self.center, dim=1))
        if not self.radius > 0:
            raise InvalidParams(f"obstacle radius must be > 0, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


@dataclass(frozen=True)
class Zero:
    """No external force."""


@dataclass(frozen=True)
class LinearDrag:
    """External force -kappa * v_i applied to every agent."""

    kappa: float = 1.0


@dataclass(frozen=True)
class ObstacleAvoidance:
    """Reflection-law avoidance force toward a spherical obstacle.

    The force steers each agent's velocity toward its reflection off the
    obstacle surface, weighted by (r_obs/dist)^p_obs + (r_obs/dist)^q_obs
    where dist is the distance to the first ray-sphere intersection along
    the agent's heading.
    """

    obstacle: Obstacle
    gamma: float = 1.0
    p_obs: float = 2.0
    q_obs: float = 3.0
    r_obs: float = 0.5


ExternalForce = Union[Zero, LinearDrag, ObstacleAvoidance]


@dataclass(frozen=True)
class ModelParams:
    """All coefficients of the interacting-agent system.

    Pairwise attraction weight (r_crit/dist)^p_exp - (r_crit/dist)^q_exp is
    positive beyond r_crit (attraction) and negative inside it (repulsion);
    the matching weight uses the sum of the same two powers. ``sigma`` is a
    common noise magnitude applied to every agent's position equation.
    """

    n_agents: int
    dim: int
    alpha: float
    beta: float
    p_exp: float
    q_exp: float
    r_crit: float
    sigma: float = 0.0
    external_force: ExternalForce = Zero()

    def with_sigma(self, sigma: float) -> "ModelParams":
        return replace(self, sigma=sigma)

    def with_force(self, force: ExternalForce) -> "ModelParams":
        return replace(self, external_force=force)


# Alias kept distinct in signatures: functions taking ValidatedParams assume
# validate() has been called on the instance.
ValidatedParams = ModelParams


def validate(params: ModelParams) -> ValidatedParams:
    """Check every parameter constraint; return the instance unchanged.

    Raises:
        InvalidParams: naming the first violated constraint.
    """
    if not isinstance(params.n_agents, (int, np.integer)) or params.n_agents < 1:
        raise InvalidParams(f"n_agents must be an integer >= 1, got {params.n_agents}")
    if params.dim not in (2, 3):
        raise InvalidParams(f"dim must be 2 or 3, got {params.dim}")
    if not params.alpha > 0:
        raise InvalidParams(f"alpha > 0 violated: alpha={params.alpha}")
    if not params.beta > 0:
        raise InvalidParams(f"beta > 0 violated: beta={params.beta}")
    if not params.p_exp > 1:
        raise InvalidParams(f"1 < p violated: p={params.p_exp}")
    if not (params.p_exp < params.q_exp and np.isfinite(params.q_exp)):
        raise InvalidParams(
            f"p < q < inf violated: p={params.p_exp}, q={params.q_exp}"
        )
    if not params.r_crit > 0:
        raise InvalidParams(f"r > 0 violated: r={params.r_crit}")
    if not params.sigma >= 0:
        raise InvalidParams(f"sigma >= 0 violated: sigma={params.sigma}")
    force = params.external_force
    if isinstance(force, LinearDrag):
        if not force.kappa >= 0:
            raise InvalidParams(f"drag kappa >= 0 violated: kappa={force.kappa}")
    elif isinstance(force, ObstacleAvoidance):
        if not force.gamma > 0:
            raise InvalidParams(f"gamma > 0 violated: gamma={force.gamma}")
        if not force.p_obs > 1:
            raise InvalidParams(f"1 < P violated: P={force.p_obs}")
        if not (force.p_obs < force.q_obs and np.isfinite(force.q_obs)):
            raise InvalidParams(
                f"P < Q < inf violated: P={force.p_obs}, Q={force.q_obs}"
            )
        if not force.r_obs > 0:
            raise InvalidParams(f"R > 0 violated: R={force.r_obs}")
        if force.obstacle.dim != params.dim:
            raise InvalidParams(
                f"obstacle is {force.obstacle.dim}-d but dim={params.dim}"
            )
    elif not isinstance(force, Zero):
        raise InvalidParams(f"unknown external force {force!r}")
    return params


@dataclass(frozen=True, eq=False)
class SwarmState:
    """Positions and velocities of all agents at one instant.

    Every coordinate must be finite; a non-finite value is a blow-up the
    integrator reports explicitly and never stores in a state.
    """

    time: float
    positions: np.ndarray
    velocities: np.ndarray

    def __post_init__(self):
        pos = _frozen_array(self.positions, dim=2)
        vel = _frozen_array(self.velocities, dim=2)
        if pos.shape != vel.shape:
            raise ValueError(
                f"positions {pos.shape} and velocities {vel.shape} differ in shape"
            )
        if pos.shape[0] < 1:
            raise ValueError("a swarm needs at least one agent")
        if not (np.isfinite(pos).all() and np.isfinite(vel).all()):
            raise ValueError("non-finite coordinate in swarm state")
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)

    @property
    def n_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]


@dataclass(frozen=True)
class Completed:
    """The integrator ran through its full horizon."""


@dataclass(frozen=True)
class BlowUp:
    """The solution left the finite/slow regime at the given step.

    Raised-speed sentinels, non-finite coordinates and near-contact
    singularities all land here; agent is -1 when no single agent applies.
    """

    step: int
    agent: int = -1


@dataclass(frozen=True)
class Penetration:
    """An agent entered the obstacle at the given step."""

    step: int
    agent: int


Termination = Union[Completed, BlowUp, Penetration]


@dataclass(frozen=True)
class SchoolingCriteria:
    """Thresholds deciding whether a trajectory counts as schooling.

    The group is schooling if, from time ``t_onset`` on, the proximity graph
    with edge length ``epsilon`` has a single connected component and the
    velocity variation stays at or below ``theta``.
    """

    epsilon: float
    theta: float
    t_onset: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidParams(f"epsilon > 0 violated: epsilon={self.epsilon}")
        if not self.theta > 0:
            raise InvalidParams(f"theta > 0 violated: theta={self.theta}")
        if not self.t_onset >= 0:
            raise InvalidParams(f"t_onset >= 0 violated: t_onset={self.t_onset}")
