"""Deterministic drift terms: pairwise interaction weights, ray-sphere
geometry, the reflection-law obstacle force, and the assembled per-agent
accelerations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import (
    LinearDrag,
    ModelParams,
    Obstacle,
    ObstacleAvoidance,
    SchoolSimError,
    SwarmState,
    Zero,
)

# Pair and surface distances below DELTA_MIN_FACTOR * r_crit make the
# interaction weights effectively singular; they are surfaced as errors
# instead of being clamped, which would silently change the model.
DELTA_MIN_FACTOR = 1e-8


class DegenerateDistance(SchoolSimError):
    """Two agents, or an agent and the obstacle surface, nearly touch."""


class AgentInsideObstacle(SchoolSimError):
    """An agent position violates the exterior-domain precondition."""


def delta_min(r_crit: float) -> float:
    return DELTA_MIN_FACTOR * r_crit


def attraction_weight(dist, r: float, p: float, q: float):
    """(r/dist)^p - (r/dist)^q: positive beyond r (attract), negative inside.

    Accepts scalars or arrays; every distance must exceed the degeneracy
    guard.
    """
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < delta_min(r)):
        raise DegenerateDistance(f"distance below {delta_min(r):g}")
    ratio = r / dist
    return ratio**p - ratio**q


def matching_weight(dist, r: float, p: float, q: float):
    """(r/dist)^p + (r/dist)^q: strictly positive, strictly decreasing."""
    dist = np.asarray(dist, dtype=float)
    if np.any(dist < delta_min(r)):
        raise DegenerateDistance(f"distance below {delta_min(r):g}")
    ratio = r / dist
    return ratio**p + ratio**q


@dataclass(frozen=True, eq=False)
class RayHit:
    """First intersection of a heading ray with the obstacle surface."""

    hit: bool
    point: np.ndarray | None = None
    distance: float | None = None


MISS = RayHit(hit=False)


def ray_sphere_first_hit(x, v, obstacle: Obstacle) -> RayHit:
    """First intersection of the ray {x + s v, s >= 0} with the sphere.

    The agent must be strictly outside. A zero velocity means the ray
    degenerates to the point x and never reaches the surface, so it misses.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    offset = x - obstacle.center
    dist2c = float(offset @ offset)
    rho = obstacle.radius
    if dist2c <= rho * rho:
        raise AgentInsideObstacle(f"agent at distance {np.sqrt(dist2c):g} <= {rho:g}")
    a = float(v @ v)
    b = 2.0 * float(v @ offset)
    if a == 0.0 or b >= 0.0:
        return MISS
    disc = b * b - 4.0 * a * (dist2c - rho * rho)
    if disc < 0.0:
        return MISS
    s = (-b - np.sqrt(disc)) / (2.0 * a)
    point = x + s * v
    return RayHit(hit=True, point=point, distance=s * np.sqrt(a))


def reflect(v, hit_point, obstacle: Obstacle) -> np.ndarray:
    """Reflect v across the tangent plane of the sphere at hit_point.

    u = v - 2 (v . n) n with the outward unit normal n; norm-preserving.
    """
    v = np.asarray(v, dtype=float)
    normal = (np.asarray(hit_point, dtype=float) - obstacle.center) / obstacle.radius
    return v - 2.0 * float(v @ normal) * normal


def rf(x, v, obstacle: Obstacle) -> np.ndarray:
    """Reflected velocity when the heading ray meets the sphere, else v."""
    hit = ray_sphere_first_hit(x, v, obstacle)
    if not hit.hit:
        return np.array(v, dtype=float)
    return reflect(v, hit.point, obstacle)


def obstacle_force(x, v, cfg: ObstacleAvoidance) -> np.ndarray:
    """Avoidance force -gamma * w(dist) * (v - rf(x, v)).

    w is the matching-style weight (R/dist)^P + (R/dist)^Q of the distance
    to the first surface intersection; zero whenever the ray misses.
    """
    v = np.asarray(v, dtype=float)
    hit = ray_sphere_first_hit(x, v, cfg.obstacle)
    if not hit.hit:
        return np.zeros_like(v)
    if hit.distance < delta_min(cfg.r_obs):
        raise DegenerateDistance(
            f"surface distance {hit.distance:g} below {delta_min(cfg.r_obs):g}"
        )
    ratio = cfg.r_obs / hit.distance
    w = ratio**cfg.p_obs + ratio**cfg.q_obs
    return -cfg.gamma * w * (v - reflect(v, hit.point, cfg.obstacle))


def _force_args(params: ModelParams):
    """Flatten the external-force variant into kernel arguments."""
    force = params.external_force
    if isinstance(force, Zero):
        return (
            _kernels.FORCE_NONE, 0.0, np.zeros(params.dim), 0.0, 0.0, 2.0, 3.0, 1.0,
        )
    if isinstance(force, LinearDrag):
        return (
            _kernels.FORCE_DRAG, force.kappa, np.zeros(params.dim),
            0.0, 0.0, 2.0, 3.0, 1.0,
        )
    if isinstance(force, ObstacleAvoidance):
        return (
            _kernels.FORCE_OBSTACLE, 0.0, np.asarray(force.obstacle.center, float),
            force.obstacle.radius, force.gamma, force.p_obs, force.q_obs, force.r_obs,
        )
    raise TypeError(f"unknown external force {force!r}")


def _raise_for_code(code: int, agent: int):
    if code == _kernels.DEGENERATE:
        raise DegenerateDistance(f"near-contact at agent {agent}")
    if code == _kernels.INSIDE:
        raise AgentInsideObstacle(f"agent {agent} inside obstacle")


def drift(state: SwarmState, params: ModelParams):
    """Accelerations and position rates for every agent.

    Returns (accelerations, velocities), each of shape (N, d). The sums over
    interaction partners run in ascending index order, so repeated calls are
    bitwise reproducible.
    """
    x = np.ascontiguousarray(state.positions)
    v = np.ascontiguousarray(state.velocities)
    acc = np.empty_like(x)
    code, agent = _kernels.total_accel(
        x, v, params.alpha, params.beta, params.p_exp, params.q_exp,
        params.r_crit, delta_min(params.r_crit), *_force_args(params), acc,
    )
    _raise_for_code(code, agent)
    return acc, state.velocities
