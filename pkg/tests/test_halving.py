"""Step-halving sanity: labels and critical magnitudes must not be step
artifacts. Runs at reduced scale; the full-experiment evidence is recorded
alongside the calibration notes.
"""

from dataclasses import replace

import pytest

from schoolsim.cohesion import CohesionProtocol, estimate_critical_sigma
from schoolsim.harness import initial_school_state, preset, run_encounter
from schoolsim.model import LinearDrag, ModelParams, SchoolingCriteria


def test_pattern_panel_stable_under_step_halving(tmp_path):
    cfg = preset("pattern")
    for p in (2.0, 3.0, 3.62, 4.0):
        model = replace(cfg.model, p_exp=p, q_exp=p + 1.0)
        school = initial_school_state(cfg, model, cfg.criteria, tmp_path)
        label = run_encounter(cfg, model, cfg.criteria, school).label
        halved_cfg = replace(cfg, solver=replace(cfg.solver, dt=cfg.solver.dt / 2))
        halved = run_encounter(halved_cfg, model, cfg.criteria, school).label
        assert halved == label, (p, label, halved)


def test_small_cohesion_threshold_stable_under_step_halving():
    params = ModelParams(8, 2, 4.0, 1.0, 2.0, 3.0, 0.5, 0.0, LinearDrag(1.0))
    criteria = SchoolingCriteria(0.5, 0.05, 4.0)

    def sigma_bar(dt):
        protocol = CohesionProtocol(
            sigma_start=0.01, sigma_step=0.005, sigma_max=0.5,
            trial_seeds=(1, 2, 3, 4), criteria=criteria, horizon=5.5,
            dt=dt, record_every=10, box_side=1.2,
        )
        return estimate_critical_sigma(params, protocol).sigma_bar

    coarse = sigma_bar(2e-3)
    fine = sigma_bar(1e-3)
    assert abs(coarse - fine) <= 0.005 + 1e-12, (coarse, fine)
