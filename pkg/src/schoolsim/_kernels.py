"""Compiled inner loops: pairwise forces, the time stepper, component counts.

Everything here is numba-jitted, single-threaded and allocation-free on the
hot path, so trajectories are reproducible bit for bit no matter how many
worker threads run other trajectories concurrently. Per-agent sums
accumulate in ascending partner order.

Status codes returned by the steppers:
    0  OK
    1  DEGENERATE    pair or surface distance fell below the guard
    2  INSIDE        agent inside the obstacle when forces were evaluated
    3  NONFINITE     candidate state non-finite or faster than the sentinel
    4  PENETRATED    candidate position inside the obstacle
"""

import numpy as np
from numba import njit

OK = 0
DEGENERATE = 1
INSIDE = 2
NONFINITE = 3
PENETRATED = 4

FORCE_NONE = 0
FORCE_DRAG = 1
FORCE_OBSTACLE = 2


@njit(cache=True, fastmath=True, nogil=True)
def pair_accel(x, v, alpha, beta, p, q, r, delta_min, acc):
    """Accumulate attraction/repulsion and velocity matching into acc.

    acc is overwritten. Returns (code, agent); agent is the lower index of
    the offending pair when code == DEGENERATE.
    """
    n, d = x.shape
    for i in range(n):
        for k in range(d):
            acc[i, k] = 0.0
    q_is_p_plus_1 = (q - p) == 1.0
    for i in range(n):
        for j in range(i + 1, n):
            dist2 = 0.0
            for k in range(d):
                dx = x[i, k] - x[j, k]
                dist2 += dx * dx
            dist = np.sqrt(dist2)
            if dist < delta_min:
                return DEGENERATE, i
            ratio = r / dist
            wp = ratio**p
            wq = wp * ratio if q_is_p_plus_1 else ratio**q
            wa = alpha * (wp - wq)
            wm = beta * (wp + wq)
            for k in range(d):
                f = wa * (x[i, k] - x[j, k]) + wm * (v[i, k] - v[j, k])
                acc[i, k] -= f
                acc[j, k] += f
    return OK, -1


@njit(cache=True, fastmath=True, nogil=True)
def obstacle_accel(x, v, center, rho, gamma, p_obs, q_obs, r_obs, delta_min, acc):
    """Add the reflection-law avoidance force for each agent into acc.

    For an agent heading at the sphere, the force pulls its velocity toward
    the reflection of that velocity off the tangent plane at the first
    ray-sphere intersection, with weight diverging as the intersection
    distance shrinks. Agents whose heading ray misses the sphere (including
    zero velocity) feel nothing.
    """
    n, d = x.shape
    q_is_p_plus_1 = (q_obs - p_obs) == 1.0
    for i in range(n):
        dist2c = 0.0
        for k in range(d):
            dx = x[i, k] - center[k]
            dist2c += dx * dx
        if dist2c <= rho * rho:
            return INSIDE, i
        a = 0.0
        b = 0.0
        for k in range(d):
            a += v[i, k] * v[i, k]
            b += 2.0 * v[i, k] * (x[i, k] - center[k])
        if a == 0.0 or b >= 0.0:
            continue  # at rest or pointing away: ray cannot reach the sphere
        disc = b * b - 4.0 * a * (dist2c - rho * rho)
        if disc < 0.0:
            continue
        s = (-b - np.sqrt(disc)) / (2.0 * a)
        speed = np.sqrt(a)
        hit_dist = s * speed
        if hit_dist < delta_min:
            return DEGENERATE, i
        # v - Rf(v) = 2 (v . n) n with n the outward unit normal at the hit
        vn = 0.0
        for k in range(d):
            nk = (x[i, k] + s * v[i, k] - center[k]) / rho
            vn += v[i, k] * nk
        ratio = r_obs / hit_dist
        wp = ratio**p_obs
        wq = wp * ratio if q_is_p_plus_1 else ratio**q_obs
        w = gamma * (wp + wq)
        for k in range(d):
            nk = (x[i, k] + s * v[i, k] - center[k]) / rho
            acc[i, k] -= w * 2.0 * vn * nk
    return OK, -1


@njit(cache=True, fastmath=True, nogil=True)
def total_accel(
    x, v, alpha, beta, p, q, r, delta_min,
    force_kind, kappa, center, rho, gamma, p_obs, q_obs, r_obs, acc,
):
    """Full acceleration: pairwise drift plus the configured external force."""
    code, agent = pair_accel(x, v, alpha, beta, p, q, r, delta_min, acc)
    if code != OK:
        return code, agent
    n, d = x.shape
    if force_kind == FORCE_DRAG:
        for i in range(n):
            for k in range(d):
                acc[i, k] -= kappa * v[i, k]
    elif force_kind == FORCE_OBSTACLE:
        return obstacle_accel(
            x, v, center, rho, gamma, p_obs, q_obs, r_obs, delta_min, acc
        )
    return OK, -1


@njit(cache=True, fastmath=False, nogil=True)
def em_step(
    x, v, noise, dt, sigma, alpha, beta, p, q, r, delta_min,
    force_kind, kappa, center, rho, gamma, p_obs, q_obs, r_obs,
    v_max2, acc,
):
    """One Euler-Maruyama step in place; drift evaluated at the pre-step state.

    noise holds one standard-normal vector per agent. The noise term is
    computed as sqrt(dt) * (sigma * noise) so that pre-scaling the stored
    increments by sigma and stepping with sigma = 1 gives bitwise-identical
    states. On a nonzero return the buffers hold the rejected candidate.
    """
    code, agent = total_accel(
        x, v, alpha, beta, p, q, r, delta_min,
        force_kind, kappa, center, rho, gamma, p_obs, q_obs, r_obs, acc,
    )
    if code != OK:
        return code, agent
    n, d = x.shape
    sqdt = np.sqrt(dt)
    if sigma != 0.0:
        for i in range(n):
            for k in range(d):
                x[i, k] += v[i, k] * dt + sqdt * (sigma * noise[i, k])
    else:
        for i in range(n):
            for k in range(d):
                x[i, k] += v[i, k] * dt
    for i in range(n):
        for k in range(d):
            v[i, k] += acc[i, k] * dt
    for i in range(n):
        speed2 = 0.0
        pos2 = 0.0
        for k in range(d):
            speed2 += v[i, k] * v[i, k]
            pos2 += x[i, k] * x[i, k]
        if not (speed2 <= v_max2) or not np.isfinite(pos2):
            return NONFINITE, i
    if force_kind == FORCE_OBSTACLE:
        for i in range(n):
            dist2c = 0.0
            for k in range(d):
                dx = x[i, k] - center[k]
                dist2c += dx * dx
            if dist2c <= rho * rho:
                return PENETRATED, i
    return OK, -1


@njit(cache=True, fastmath=False, nogil=True)
def run_sde(
    x, v, noise, dt, sigma, n_steps, alpha, beta, p, q, r, delta_min,
    force_kind, kappa, center, rho, gamma, p_obs, q_obs, r_obs,
    v_max2, record_every, out_x, out_v, out_step,
):
    """Integrate n_steps from (x, v) in place, recording periodic samples.

    Samples are stored at steps record_every, 2*record_every, ... plus the
    final step; out_step receives the step index of each sample. Returns
    (code, step, agent, n_recorded); on failure at step s nothing from step
    s onward is recorded and the (x, v) buffers are left invalid.
    """
    acc = np.empty_like(x)
    n_rec = 0
    # Zero-sigma runs may pass a single dummy noise row; never index past it.
    n_noise = noise.shape[0]
    for s in range(1, n_steps + 1):
        code, agent = em_step(
            x, v, noise[(s - 1) % n_noise], dt, sigma, alpha, beta, p, q, r, delta_min,
            force_kind, kappa, center, rho, gamma, p_obs, q_obs, r_obs,
            v_max2, acc,
        )
        if code != OK:
            return code, s, agent, n_rec
        if s % record_every == 0 or s == n_steps:
            out_x[n_rec] = x
            out_v[n_rec] = v
            out_step[n_rec] = s
            n_rec += 1
    return OK, n_steps, -1, n_rec


@njit(cache=True, fastmath=True, nogil=True)
def count_components(positions, eps):
    """Connected components of the proximity graph with edges at dist <= eps.

    Union-find over all agent pairs with path halving.
    """
    n = positions.shape[0]
    d = positions.shape[1]
    parent = np.arange(n)
    eps2 = eps * eps
    for i in range(n):
        for j in range(i + 1, n):
            dist2 = 0.0
            for k in range(d):
                dx = positions[i, k] - positions[j, k]
                dist2 += dx * dx
            if dist2 <= eps2:
                ri = i
                while parent[ri] != ri:
                    parent[ri] = parent[parent[ri]]
                    ri = parent[ri]
                rj = j
                while parent[rj] != rj:
                    parent[rj] = parent[parent[rj]]
                    rj = parent[rj]
                if ri != rj:
                    parent[rj] = ri
    count = 0
    for i in range(n):
        if parent[i] == i:
            count += 1
    return count
