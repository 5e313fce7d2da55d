"""Energy-aware UAV radar target tracking: EKF, predicted-bound trajectory
optimization via moment SDPs, and budget-certified backup planning."""

from .controller import (
    BENCHMARK,
    MODE_BACKUP_FALLBACK,
    MODE_CANDIDATE,
    MODE_DIRECT_FLIGHT,
    MODE_FORCED_TERMINAL,
    PROPOSED,
    EpisodeResult,
    MissionInfeasibleError,
    SolverSuite,
    candidate_bounds,
    run_episode,
)
from .energy import (
    BackupPlan,
    EnergyLedger,
    PropulsionParams,
    backup_plan,
    dp_oracle,
    feasibility_gate,
    feasible_speed_intervals,
    min_power_speed,
    propulsion_power,
)
from .pcrb import (
    MATRIX_CONSISTENT,
    SWAPPED_NUMERATORS,
    SensingConstants,
    build_ratio_polys,
    fisher_terms,
    predicted_pcrb,
    weighted_objective,
)
from .polyopt import (
    DinkelbachResult,
    Interval,
    Polynomial,
    RatioPolys,
    default_sdp_backend,
    dinkelbach_minimize_ratio,
    minimize_on_interval,
    solve_moment_sdp,
)
from .scenario import Scenario, ScenarioError, load_scenario

__version__ = "0.1.0"

__all__ = [
    "BENCHMARK",
    "BackupPlan",
    "DinkelbachResult",
    "EnergyLedger",
    "EpisodeResult",
    "Interval",
    "MATRIX_CONSISTENT",
    "MODE_BACKUP_FALLBACK",
    "MODE_CANDIDATE",
    "MODE_DIRECT_FLIGHT",
    "MODE_FORCED_TERMINAL",
    "MissionInfeasibleError",
    "PROPOSED",
    "Polynomial",
    "PropulsionParams",
    "RatioPolys",
    "SWAPPED_NUMERATORS",
    "Scenario",
    "ScenarioError",
    "SensingConstants",
    "SolverSuite",
    "backup_plan",
    "build_ratio_polys",
    "candidate_bounds",
    "default_sdp_backend",
    "dinkelbach_minimize_ratio",
    "dp_oracle",
    "feasibility_gate",
    "feasible_speed_intervals",
    "fisher_terms",
    "load_scenario",
    "min_power_speed",
    "minimize_on_interval",
    "predicted_pcrb",
    "propulsion_power",
    "run_episode",
    "solve_moment_sdp",
    "weighted_objective",
]
