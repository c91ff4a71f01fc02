"""Direct model reference adaptive control with gradient and RLS laws.

Simulation library and CLI harness for SISO adaptive loops: classical
gradient adaptation with a constant gain, and recursive-least-squares
adaptation with a forgetting factor whose time-varying covariance is the
adaptive gain. Includes the vehicle-following (adaptive cruise control)
case study used to compare the two laws.
"""

__version__ = "0.1.0"

from .acc import (
    AccConfig,
    AccRefModel,
    DisturbanceSpec,
    LeadSpec,
    SpacingPolicy,
    VehicleModel,
    acc_metrics,
    ideal_acc_gains,
    simulate_acc,
)
from .errors import (
    AssumptionError,
    ConfigError,
    MatchingError,
    MracError,
    NumericsError,
)
from .harness import compare, run, run_scenario
from .laws import (
    Covariance,
    GradientGain,
    PeWindow,
    ProjectionBounds,
    covariance_update,
    dual_q_step,
    gradient_update,
    lyapunov_value,
    pe_check,
    project,
    rls_update,
)
from .lti import (
    Polynomial,
    StateSpace,
    TransferFunction,
    canonical_realize,
    is_hurwitz,
    poly_mul,
    rk4_step,
)
from .matching import (
    MracTheta,
    RegressorState,
    build_lambda,
    closed_loop_tf,
    control_law,
    regressor_step,
    solve_matching,
    validate_problem,
)
from .mrac import MracConfig, ReferenceSpec, reference_signal, simulate_mrac
from .scenario import Scenario, list_presets, load_scenario
from .trace import SimTrace, read_csv
