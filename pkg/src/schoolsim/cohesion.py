"""Cohesiveness measurement: the largest noise magnitude at which every
trial over a fixed set of Wiener paths still ends up schooling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import is_schooling, schooling_failure_modes, summarize
from .model import ModelParams, SchoolingCriteria, SchoolSimError, SwarmState, validate
from .sde import BrownianPaths, random_school_positions, simulate


class NotSchoolingAtStart(SchoolSimError):
    """At least one trial already fails at the lowest scanned magnitude."""


class NoBreakBelowMax(SchoolSimError):
    """Every scanned magnitude up to sigma_max kept all trials schooling."""


@dataclass(frozen=True)
class CohesionProtocol:
    """Fixed recipe for one cohesiveness measurement.

    Each seed determines one trial: initial positions drawn uniformly in a
    centered box of side 2 * r * N^(1/d) (zero initial velocities) followed
    by that trial's unit Wiener increments, all from one generator. The same
    increments are reused at every noise magnitude, scaled by sigma.
    """

    sigma_start: float
    sigma_step: float
    sigma_max: float
    trial_seeds: tuple[int, ...]
    criteria: SchoolingCriteria
    horizon: float
    dt: float = 1e-3
    record_every: int = 10
    # Side of the initial-position box; None uses 2 * r * N^(1/d). Pin it
    # when comparing runs across critical distances so the aggregation
    # phase starts from the same spread.
    box_side: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "trial_seeds", tuple(int(s) for s in self.trial_seeds))
        if not self.sigma_step > 0:
            raise ValueError(f"sigma_step must be > 0, got {self.sigma_step}")
        if not self.sigma_start >= 0:
            raise ValueError(f"sigma_start must be >= 0, got {self.sigma_start}")
        if len(self.trial_seeds) < 1:
            raise ValueError("at least one trial seed is required")
        if len(set(self.trial_seeds)) != len(self.trial_seeds):
            raise ValueError("trial seeds must be distinct")
        if not self.horizon >= self.criteria.t_onset:
            raise ValueError(
                f"horizon {self.horizon} ends before onset {self.criteria.t_onset}"
            )

    @property
    def n_trials(self) -> int:
        return len(self.trial_seeds)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def sigma_at(self, index: int) -> float:
        return self.sigma_start + index * self.sigma_step

    @property
    def n_grid(self) -> int:
        # Largest k with sigma_start + k*step <= sigma_max (tolerating float dust).
        return int(np.floor((self.sigma_max - self.sigma_start) / self.sigma_step + 1e-9)) + 1


@dataclass(frozen=True)
class TrialResult:
    seed: int
    schooling: bool
    blew_up: bool
    broke_components: bool
    broke_sigma_v: bool


@dataclass(frozen=True)
class SigmaLevel:
    sigma: float
    trials: tuple[TrialResult, ...]

    @property
    def all_pass(self) -> bool:
        return all(t.schooling for t in self.trials)


@dataclass(frozen=True)
class CohesionReport:
    """Scan outcome: the critical magnitude and every evaluated level."""

    sigma_bar: float
    levels: tuple[SigmaLevel, ...]
    two_phase: bool = False


def trial_initial_state(
    params: ModelParams, n_steps: int, seed: int, box_side: float | None = None
):
    """Deterministic (state, unit paths) pair for one trial seed."""
    rng = np.random.default_rng(seed)
    positions = random_school_positions(
        rng, params.n_agents, params.dim, params.r_crit, side=box_side
    )
    state = SwarmState(time=0.0, positions=positions, velocities=np.zeros_like(positions))
    increments = rng.standard_normal((n_steps, params.n_agents, params.dim))
    return state, BrownianPaths(seed=seed, increments=increments)


def run_trial(
    params: ModelParams,
    sigma: float,
    seed: int,
    protocol: CohesionProtocol,
    paths: BrownianPaths | None = None,
) -> TrialResult:
    """One trial at one noise magnitude; blow-up counts as a failed trial."""
    state, trial_paths = trial_initial_state(
        params, protocol.n_steps, seed, protocol.box_side
    )
    if paths is not None:
        trial_paths = paths
    traj = simulate(
        state, params.with_sigma(sigma), trial_paths,
        protocol.dt, protocol.horizon, protocol.record_every,
    )
    summary = summarize(traj, protocol.criteria.epsilon)
    if not summary.completed:
        return TrialResult(seed, schooling=False, blew_up=True,
                           broke_components=False, broke_sigma_v=False)
    schooling = is_schooling(summary, protocol.criteria)
    broke_components, broke_sigma_v = schooling_failure_modes(summary, protocol.criteria)
    return TrialResult(seed, schooling=schooling, blew_up=False,
                       broke_components=broke_components, broke_sigma_v=broke_sigma_v)


def trial_is_schooling(
    params: ModelParams, sigma: float, seed: int, protocol: CohesionProtocol
) -> bool:
    return run_trial(params, sigma, seed, protocol).schooling


def _evaluate_level(
    params: ModelParams, sigma: float, protocol: CohesionProtocol, workers: int
) -> SigmaLevel:
    if workers <= 1 or protocol.n_trials == 1:
        trials = tuple(
            run_trial(params, sigma, seed, protocol) for seed in protocol.trial_seeds
        )
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [
                pool.submit(run_trial, params, sigma, seed, protocol)
                for seed in protocol.trial_seeds
            ]
            trials = tuple(f.result() for f in futures)
    return SigmaLevel(sigma=sigma, trials=trials)


def estimate_critical_sigma(
    params: ModelParams,
    protocol: CohesionProtocol,
    workers: int = 1,
    two_phase: bool = False,
    coarse_factor: int = 5,
) -> CohesionReport:
    """Scan the sigma grid upward and return the last all-pass magnitude.

    The reference behavior scans every grid value from sigma_start and stops
    at the first level where any trial fails; sigma_bar is the level before
    it. two_phase brackets that first failure with strides of coarse_factor
    grid steps before scanning finely, which gives the same sigma_bar
    whenever schooling is monotone in sigma.
    """
    validate(params)
    n_grid = protocol.n_grid
    if n_grid < 1:
        raise ValueError("empty sigma grid: sigma_max below sigma_start")
    levels: dict[int, SigmaLevel] = {}

    def evaluate(k: int) -> SigmaLevel:
        if k not in levels:
            levels[k] = _evaluate_level(params, protocol.sigma_at(k), protocol, workers)
        return levels[k]

    def report(sigma_bar: float) -> CohesionReport:
        ordered = tuple(levels[k] for k in sorted(levels))
        return CohesionReport(sigma_bar=sigma_bar, levels=ordered, two_phase=two_phase)

    if not evaluate(0).all_pass:
        raise NotSchoolingAtStart(
            f"trial failure at sigma_start={protocol.sigma_start}"
        )

    def fine_scan(lo: int, hi: int) -> CohesionReport | None:
        """Scan grid indices [lo, hi]; report if a failure appears."""
        for k in range(lo, hi + 1):
            if not evaluate(k).all_pass:
                return report(sigma_bar=protocol.sigma_at(k - 1))
        return None

    if not two_phase:
        result = fine_scan(1, n_grid - 1)
        if result is not None:
            return result
        raise NoBreakBelowMax(f"all trials pass up to sigma_max={protocol.sigma_max}")

    stride = max(2, coarse_factor)
    coarse = list(range(stride, n_grid, stride))
    if not coarse or coarse[-1] != n_grid - 1:
        coarse.append(n_grid - 1)
    prev = 0
    for k in coarse:
        if not evaluate(k).all_pass:
            result = fine_scan(prev + 1, k - 1)
            if result is not None:
                return result
            return report(sigma_bar=protocol.sigma_at(k - 1))
        prev = k
    raise NoBreakBelowMax(f"all trials pass up to sigma_max={protocol.sigma_max}")
