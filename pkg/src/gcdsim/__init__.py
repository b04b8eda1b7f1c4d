"""Constrained-dynamics simulation of a six-sector macroeconomy.

Bounded-rational agents push economic variables along utility and profit
gradients weighted by power factors; Lagrangian constraint forces
reconcile the plans with budget, labor and goods-market constraints.  The
package integrates the resulting dynamics, solves for stationary states,
and classifies local and global stability.
"""

from .core import (
    AffinityError,
    ConstraintDef,
    ConstraintDegeneracyError,
    ForceTerm,
    GcdError,
    InfeasibleStateError,
    ModelDefinition,
    MultiplierSolution,
    VariableId,
    assemble_multiplier_system,
    ex_ante_derivative,
    ex_post_derivative,
    solve_multipliers,
    verify_affinity,
)
from .macro import (
    DependentQuantities,
    MacroParams,
    MacroState,
    UtilityRecord,
    baseline_state,
    build_model,
    dependents,
    scale_powers,
    utilities,
    validate_params,
    validate_state,
    zero_directions,
)

__version__ = "0.1.0"

from .integrate import (  # noqa: E402
    RunConfig,
    Schedule,
    StopReason,
    Trajectory,
    apply_schedule,
    detect_convergence,
    integrate,
)
from .stationary import (  # noqa: E402
    StationaryError,
    StationaryState,
    VerificationReport,
    solve_stationary,
    stationarity_residual,
    verify_stationary,
)
from .stability import (  # noqa: E402
    CellClassification,
    EigenReport,
    GlobalStudyReport,
    ReducedJacobian,
    baseline_fixed_point,
    classify_point,
    eigenanalysis,
    parameter_sensitivity,
    randomized_global_study,
    reduced_jacobian,
    sweep,
)
