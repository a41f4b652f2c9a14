"""Observables of a swarm trajectory: proximity-graph component count,
velocity variation, centroid, geometric diameter, and the schooling test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import Completed, SchoolingCriteria, SchoolSimError, SwarmState, Termination


class HorizonTooShort(SchoolSimError):
    """The trajectory ends before the time the decision needs to see."""


def epsilon_components(state: SwarmState, epsilon: float) -> int:
    """Number of connected components of the proximity graph.

    Agents i and j are adjacent iff ||x_i - x_j|| <= epsilon (inclusive).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return int(_kernels.count_components(np.ascontiguousarray(state.positions), epsilon))


def sigma_v(state: SwarmState) -> float:
    """Root-mean-square deviation of the velocities from their mean."""
    dev = state.velocities - state.velocities.mean(axis=0)
    return float(np.sqrt(np.mean(np.sum(dev * dev, axis=1))))


def centroid(state: SwarmState) -> np.ndarray:
    return state.positions.mean(axis=0)


def diameter(state: SwarmState) -> float:
    """Largest distance from any agent to the centroid."""
    dev = state.positions - state.positions.mean(axis=0)
    return float(np.sqrt(np.max(np.sum(dev * dev, axis=1))))


@dataclass(frozen=True, eq=False)
class TrajectorySummary:
    """Per-sample metric series of one trajectory.

    Arrays are index-aligned with times; termination is copied from the
    trajectory that produced the summary.
    """

    times: np.ndarray
    n_components: np.ndarray
    sigma_v: np.ndarray
    centroid: np.ndarray
    diameter: np.ndarray
    termination: Termination

    @property
    def n_samples(self) -> int:
        return len(self.times)

    @property
    def completed(self) -> bool:
        return isinstance(self.termination, Completed)


def summarize(trajectory, epsilon: float) -> TrajectorySummary:
    """Compute the metric series of every recorded state."""
    states = trajectory.states
    times = np.array([s.time for s in states])
    n_comp = np.array([epsilon_components(s, epsilon) for s in states], dtype=np.int64)
    sig = np.array([sigma_v(s) for s in states])
    cen = np.array([centroid(s) for s in states])
    dia = np.array([diameter(s) for s in states])
    return TrajectorySummary(
        times=times, n_components=n_comp, sigma_v=sig, centroid=cen, diameter=dia,
        termination=trajectory.termination,
    )


def _onset_mask(times: np.ndarray, t_onset: float) -> np.ndarray:
    # Absorb accumulated float error in sample times near the onset.
    tol = 1e-9 * max(1.0, abs(t_onset))
    return times >= t_onset - tol


def is_schooling(summary: TrajectorySummary, criteria: SchoolingCriteria) -> bool:
    """True iff the trajectory completed and, from t_onset on, every sample
    has a single component and velocity variation at or below theta."""
    if summary.n_samples == 0 or summary.times[-1] < criteria.t_onset - 1e-9:
        raise HorizonTooShort(
            f"trajectory ends at t={summary.times[-1] if summary.n_samples else None}"
            f" before onset {criteria.t_onset}"
        )
    if not summary.completed:
        return False
    sel = _onset_mask(summary.times, criteria.t_onset)
    return bool(
        np.all(summary.n_components[sel] == 1)
        and np.all(summary.sigma_v[sel] <= criteria.theta)
    )


def schooling_failure_modes(
    summary: TrajectorySummary, criteria: SchoolingCriteria
) -> tuple[bool, bool]:
    """Which schooling condition failed after onset: (split, velocity spread).

    Both flags can be set; both are False for a trajectory in schooling.
    Early termination counts as neither (the caller sees it on the summary).
    """
    if not summary.completed:
        return False, False
    sel = _onset_mask(summary.times, criteria.t_onset)
    broke_components = bool(np.any(summary.n_components[sel] >= 2))
    broke_sigma_v = bool(np.any(summary.sigma_v[sel] > criteria.theta))
    return broke_components, broke_sigma_v
