"""Hand-built encounter summaries covering every classifier decision row."""

import numpy as np

from schoolsim.model import BlowUp, Completed, Obstacle, Penetration, SchoolingCriteria

from _oracles import make_summary

CRITERIA = SchoolingCriteria(epsilon=0.5, theta=1e-6)
OBSTACLE = Obstacle(center=[0.0, 0.0], radius=1.0)
AXIS = np.array([1.0, 0.0])

# Reunion tolerance for these summaries: approach speed 1 -> max(1e-3, 0.02).
_TOL = 0.02


def _series(path_x, n_mid, n_end, sv_end, termination=None, diameter=0.5):
    """Summary along the x axis: path_x gives centroid waypoints over time."""
    times = np.linspace(0.0, 20.0, len(path_x))
    centroid = np.column_stack([path_x, np.zeros(len(path_x))])
    k = len(path_x)
    n = np.ones(k, dtype=int)
    n[k // 2] = n_mid
    n[-1] = n_end
    sv = np.full(k, 1e-4)
    sv[-1] = sv_end
    dia = np.full(k, diameter)
    return make_summary(times, n, sv, centroid, dia, termination)


def _approach(progress_to, back_to=None, k=41, step=0.5):
    """Centroid x waypoints from -4 at unit speed: advance, then retreat or hold."""
    xs = [-4.0]
    retreating = False
    for _ in range(k - 1):
        x = xs[-1]
        if not retreating:
            x = min(x + step, progress_to)
            retreating = x >= progress_to
        elif back_to is not None and x > back_to:
            x = max(x - step, back_to)
        xs.append(x)
    return np.array(xs)


def library():
    """(summary, expected-label-name) pairs, one per decision-table case."""
    cases = []
    # Rebound: never passed, never broke
    for back in (-4.0, -2.0):
        cases.append((_series(_approach(-1.8, back), 1, 1, 1e-4), "Rebound"))
    # Pullback: broke while approaching, re-formed, never passed
    for sv in (1e-4, 5e-3, 1.5e-2):
        cases.append((_series(_approach(-1.6, -3.5), 3, 1, sv), "Pullback"))
    # PassAndReunion: passed and re-formed (split or not)
    for n_mid in (1, 2, 4):
        cases.append((_series(_approach(3.0), n_mid, 1, 1e-3), "PassAndReunion"))
    cases.append((_series(_approach(2.0), 2, 1, 1.9e-2), "PassAndReunion"))
    # Separation: passed, still split or still agitated
    for n_end in (2, 3, 5):
        cases.append((_series(_approach(3.0), 4, n_end, 0.8), "Separation"))
    cases.append((_series(_approach(3.0), 2, 1, 0.5), "Separation"))
    # Unclassified: broke, never passed, never re-formed
    cases.append((_series(_approach(-1.6, -2.0), 3, 2, 0.3), "Unclassified"))
    cases.append((_series(_approach(-1.6, -2.0), 2, 1, 0.9), "Unclassified"))
    # Early termination
    cases.append((_series(_approach(-1.8), 1, 1, 1e-4, BlowUp(step=900, agent=3)), "BlowUp"))
    cases.append((_series(_approach(-1.6), 2, 2, 0.5, BlowUp(step=1200)), "BlowUp"))
    cases.append((_series(_approach(1.0), 2, 1, 1e-3, Penetration(step=700, agent=0)), "BlowUp"))
    # Borderline reunion tolerance: just under and just over
    cases.append((_series(_approach(3.0), 2, 1, 0.99 * _TOL), "PassAndReunion"))
    cases.append((_series(_approach(3.0), 2, 1, 1.01 * _TOL), "Separation"))
    assert len(cases) == 20
    return cases
