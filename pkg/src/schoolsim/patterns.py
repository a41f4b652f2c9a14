"""Classification of a completed obstacle-encounter trajectory into the four
avoidance patterns, from its metric summary alone.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .metrics import HorizonTooShort, TrajectorySummary
from .model import Obstacle, SchoolingCriteria

# "Passed" requires the school centroid to clear the far side of the sphere
# by half the initial school diameter, so the whole school is through.
PASS_MARGIN_FACTOR = 0.5

# A school that split and re-gathered is counted as re-formed once its
# velocity spread decays to this fraction of the approach speed. Floored by
# a multiple of the strict schooling tolerance for near-static encounters.
REUNION_SPEED_FRACTION = 0.02
REUNION_THETA_FACTOR = 1e3


class PatternLabel(str, enum.Enum):
    REBOUND = "Rebound"
    PULLBACK = "Pullback"
    PASS_AND_REUNION = "PassAndReunion"
    SEPARATION = "Separation"
    UNCLASSIFIED = "Unclassified"
    BLOW_UP = "BlowUp"


@dataclass(frozen=True)
class EncounterFeatures:
    """Facts the decision table runs on, all derived from one summary."""

    ever_broke: bool
    final_components: int
    passed: bool
    final_sigma_v: float
    approach_speed: float


def passed_obstacle(
    summary: TrajectorySummary, obstacle: Obstacle, axis: np.ndarray
) -> bool:
    """Did the school centroid ever clear the obstacle along the approach axis?

    axis is the unit vector from the initial centroid toward the obstacle
    center. True once the centroid projection beyond the center exceeds the
    sphere radius plus half the initial school diameter.
    """
    axis = np.asarray(axis, dtype=float)
    progress = (summary.centroid - obstacle.center) @ axis
    margin = PASS_MARGIN_FACTOR * summary.diameter[0]
    return bool(np.max(progress) > obstacle.radius + margin)


def approach_speed(summary: TrajectorySummary) -> float:
    """Centroid speed over the first recorded interval."""
    if summary.n_samples < 2:
        return 0.0
    dt = summary.times[1] - summary.times[0]
    step = summary.centroid[1] - summary.centroid[0]
    return float(np.linalg.norm(step) / dt) if dt > 0 else 0.0


def encounter_features(
    summary: TrajectorySummary, obstacle: Obstacle, axis: np.ndarray
) -> EncounterFeatures:
    return EncounterFeatures(
        ever_broke=bool(np.any(summary.n_components >= 2)),
        final_components=int(summary.n_components[-1]),
        passed=passed_obstacle(summary, obstacle, axis),
        final_sigma_v=float(summary.sigma_v[-1]),
        approach_speed=approach_speed(summary),
    )


def classify(
    summary: TrajectorySummary,
    obstacle: Obstacle,
    axis: np.ndarray,
    criteria: SchoolingCriteria,
) -> PatternLabel:
    """Label one obstacle encounter.

    Decision table, with P = passed, B = ever split, R = re-formed (one
    component at the end, velocity spread back within the reunion
    tolerance):

        terminated early    -> BlowUp
        not P, not B        -> Rebound
        not P, B, R         -> Pullback
        P, R                -> PassAndReunion
        P, not R            -> Separation
        not P, B, not R     -> Unclassified
    """
    if summary.n_samples < 2 or summary.times[-1] < criteria.t_onset - 1e-9:
        raise HorizonTooShort("encounter summary too short to classify")
    if not summary.completed:
        return PatternLabel.BLOW_UP
    f = encounter_features(summary, obstacle, axis)
    tolerance = max(
        REUNION_THETA_FACTOR * criteria.theta,
        REUNION_SPEED_FRACTION * f.approach_speed,
    )
    reformed = f.final_components == 1 and f.final_sigma_v <= tolerance
    if f.passed:
        return PatternLabel.PASS_AND_REUNION if reformed else PatternLabel.SEPARATION
    if not f.ever_broke:
        return PatternLabel.REBOUND
    return PatternLabel.PULLBACK if reformed else PatternLabel.UNCLASSIFIED
