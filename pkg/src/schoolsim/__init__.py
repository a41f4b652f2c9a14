"""Stochastic fish-school simulator.

Integrates an interacting-agent SDE with attraction/repulsion, velocity
matching and a reflection-law obstacle force; classifies obstacle
encounters into the four avoidance patterns; and measures school
cohesiveness as the critical noise magnitude at which schooling breaks.
"""

from .cohesion import (
    CohesionProtocol,
    CohesionReport,
    NoBreakBelowMax,
    NotSchoolingAtStart,
    estimate_critical_sigma,
    trial_is_schooling,
)
from .dynamics import (
    AgentInsideObstacle,
    DegenerateDistance,
    RayHit,
    attraction_weight,
    drift,
    matching_weight,
    obstacle_force,
    ray_sphere_first_hit,
    reflect,
    rf,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    SweepReport,
    annulus_school,
    bootstrap_state,
    preset,
    run,
    run_encounter,
    sweep_critical_distance,
    sweep_exponent,
    sweep_speed,
)
from .metrics import (
    HorizonTooShort,
    TrajectorySummary,
    diameter,
    epsilon_components,
    is_schooling,
    sigma_v,
    summarize,
)
from .model import (
    BlowUp,
    Completed,
    InvalidParams,
    LinearDrag,
    ModelParams,
    Obstacle,
    ObstacleAvoidance,
    Penetration,
    SchoolingCriteria,
    SchoolSimError,
    SwarmState,
    Zero,
    validate,
)
from .patterns import PatternLabel, classify, encounter_features, passed_obstacle
from .sde import (
    BrownianPaths,
    GapTooSmall,
    NoConvergence,
    Trajectory,
    place_school,
    relax_to_schooling,
    simulate,
    step,
)

__version__ = "0.1.0"
