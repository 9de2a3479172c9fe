"""Primal-dual evolutionary dynamics on population games with convex constraints.

The library simulates two coupled populations: one playing the game's
strategies, one pricing its inequality constraints.  Under
pairwise-comparison revision protocols the pair converges to states that
are simultaneously Nash for both populations, which for potential games
coincide with the optima of the constrained program; the package ships the
dynamics, the equilibrium and Lyapunov verifiers, an independent grid
oracle, and a CLI for reproducing the two benchmark experiments.
"""

from .core import (
    AffineConstraint,
    CallableFitness,
    CallablePotential,
    CongestionPotential,
    ConfigurationError,
    DualState,
    GameSpec,
    MatrixFitness,
    PotentialFitness,
    PrimalState,
    QuadraticConstraint,
    QuadraticPotential,
    StabilityCheck,
    UnsupportedOperationError,
    check_stable_game,
    constraint_jacobian,
    constraint_values,
    fitness,
    fitness_jacobian,
    lagrangian,
    potential,
    primal_dual_payoff,
    primal_dual_payoff_jacobian,
)
from .dynamics import (
    PROTOCOLS,
    IntegrationDivergedError,
    Protocol,
    SimParams,
    Trajectory,
    dual_field,
    integrate,
    primal_field,
    sample_simplex,
    smith_protocol,
    validate_protocol,
)
from .equilibrium import (
    EquilibriumReport,
    InfeasibleInstanceError,
    NashCheck,
    OracleSolution,
    SaddleCheck,
    SlaterPoint,
    SlaterViolationError,
    dual_mass_bound,
    in_equilibria_set,
    is_dual_nash,
    is_primal_nash,
    oracle_solve,
    saddle_check,
    slater_point,
)
from .games import (
    BUILTIN_GAMES,
    Road,
    RoadNetwork,
    build_congestion,
    build_quadratic_potential,
    build_rps,
    builtin_game,
    paper_congestion,
    paper_rps,
)
from .lyapunov import (
    LyapunovAudit,
    QuadratureError,
    adaptive_simpson,
    lyapunov_rate,
    lyapunov_value,
    monotonicity_audit,
)

__version__ = "0.1.0"

__all__ = [
    "AffineConstraint",
    "BUILTIN_GAMES",
    "CallableFitness",
    "CallablePotential",
    "ConfigurationError",
    "CongestionPotential",
    "DualState",
    "EquilibriumReport",
    "GameSpec",
    "InfeasibleInstanceError",
    "IntegrationDivergedError",
    "LyapunovAudit",
    "MatrixFitness",
    "NashCheck",
    "OracleSolution",
    "PROTOCOLS",
    "PotentialFitness",
    "PrimalState",
    "Protocol",
    "QuadraticConstraint",
    "QuadraticPotential",
    "QuadratureError",
    "Road",
    "RoadNetwork",
    "SaddleCheck",
    "SimParams",
    "SlaterPoint",
    "SlaterViolationError",
    "StabilityCheck",
    "Trajectory",
    "UnsupportedOperationError",
    "adaptive_simpson",
    "build_congestion",
    "build_quadratic_potential",
    "build_rps",
    "builtin_game",
    "check_stable_game",
    "constraint_jacobian",
    "constraint_values",
    "dual_field",
    "dual_mass_bound",
    "fitness",
    "fitness_jacobian",
    "in_equilibria_set",
    "integrate",
    "is_dual_nash",
    "is_primal_nash",
    "lagrangian",
    "lyapunov_rate",
    "lyapunov_value",
    "monotonicity_audit",
    "oracle_solve",
    "paper_congestion",
    "paper_rps",
    "potential",
    "primal_dual_payoff",
    "primal_dual_payoff_jacobian",
    "primal_field",
    "saddle_check",
    "sample_simplex",
    "slater_point",
    "smith_protocol",
    "validate_protocol",
]
