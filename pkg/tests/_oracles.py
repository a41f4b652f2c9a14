"""Independent reference implementations the production code is checked
against. Everything here is deliberately written along a different route
than the package: dense numpy broadcasting instead of pair loops, BFS
instead of union-find, ray marching instead of the quadratic formula.
"""

import numpy as np

from schoolsim.model import (
    Completed,
    LinearDrag,
    ObstacleAvoidance,
    Zero,
)
from schoolsim.metrics import TrajectorySummary


def drift_reference(positions, velocities, params):
    """Vectorized accelerations straight from the model definition."""
    x = np.asarray(positions, dtype=float)
    v = np.asarray(velocities, dtype=float)
    n = x.shape[0]
    diff_x = x[:, None, :] - x[None, :, :]
    diff_v = v[:, None, :] - v[None, :, :]
    dist = np.linalg.norm(diff_x, axis=2)
    np.fill_diagonal(dist, np.inf)
    ratio = params.r_crit / dist
    w_attr = ratio**params.p_exp - ratio**params.q_exp
    w_match = ratio**params.p_exp + ratio**params.q_exp
    acc = -(params.alpha * w_attr[:, :, None] * diff_x).sum(axis=1)
    acc -= (params.beta * w_match[:, :, None] * diff_v).sum(axis=1)
    force = params.external_force
    if isinstance(force, LinearDrag):
        acc -= force.kappa * v
    elif isinstance(force, ObstacleAvoidance):
        for i in range(n):
            acc[i] += obstacle_force_reference(x[i], v[i], force)
    elif not isinstance(force, Zero):
        raise TypeError(force)
    return acc


def obstacle_force_reference(x, v, cfg):
    """Avoidance force via the marched ray hit and explicit reflection."""
    hit, point, distance = ray_march_first_hit(
        x, v, cfg.obstacle.center, cfg.obstacle.radius
    )
    if not hit:
        return np.zeros_like(np.asarray(v, dtype=float))
    normal = (point - cfg.obstacle.center) / cfg.obstacle.radius
    reflected = v - 2.0 * np.dot(v, normal) * normal
    ratio = cfg.r_obs / distance
    weight = ratio**cfg.p_obs + ratio**cfg.q_obs
    return -cfg.gamma * weight * (v - reflected)


def ray_march_first_hit(x, v, center, rho, step_factor=1e-4):
    """March along the ray to the first sign change of the sphere distance,
    then refine by bisection. Returns (hit, point, distance)."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    speed = np.linalg.norm(v)
    if speed == 0.0:
        return False, None, None

    def gap(s):
        return np.linalg.norm(x + s * v - center) - rho

    # any hit lies before the ray has covered the center distance plus rho
    s_max = (np.linalg.norm(x - center) + 2.0 * rho) / speed
    ds = step_factor * rho / speed
    s_grid = np.arange(0.0, s_max, ds)
    gaps = np.linalg.norm(x[None, :] + s_grid[:, None] * v[None, :] - center, axis=1) - rho
    below = np.nonzero(gaps <= 0.0)[0]
    if len(below) == 0:
        return False, None, None
    k = below[0]
    if k == 0:
        s_hit = 0.0
    else:
        lo, hi = s_grid[k - 1], s_grid[k]
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if gap(mid) > 0.0:
                lo = mid
            else:
                hi = mid
        s_hit = 0.5 * (lo + hi)
    point = x + s_hit * v
    return True, point, s_hit * speed


def bfs_components(positions, eps):
    """Connected components of the proximity graph by breadth-first search."""
    x = np.asarray(positions, dtype=float)
    n = x.shape[0]
    dist2 = np.sum((x[:, None, :] - x[None, :, :]) ** 2, axis=2)
    adjacent = dist2 <= eps * eps
    seen = np.zeros(n, dtype=bool)
    count = 0
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        stack = [start]
        seen[start] = True
        while stack:
            node = stack.pop()
            for nb in np.nonzero(adjacent[node])[0]:
                if not seen[nb]:
                    seen[nb] = True
                    stack.append(int(nb))
    return count


def make_summary(times, n_components, sigma_v, centroid, diameter,
                 termination=None) -> TrajectorySummary:
    return TrajectorySummary(
        times=np.asarray(times, dtype=float),
        n_components=np.asarray(n_components, dtype=np.int64),
        sigma_v=np.asarray(sigma_v, dtype=float),
        centroid=np.asarray(centroid, dtype=float),
        diameter=np.asarray(diameter, dtype=float),
        termination=termination if termination is not None else Completed(),
    )
