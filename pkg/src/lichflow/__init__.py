"""Solvers for positive steady states of -lap(u) = A*u^-p - B*u^q on
periodic grids: direct heat flow, ordered sub/supersolution chains, and
continuation in a regularization parameter for degenerate damping."""

from .grid import (
    Field,
    FieldStats,
    Grid,
    constant_field,
    coordinate_field,
    field_stats,
    gradient_sq,
    helmholtz_solve,
    integrate,
    laplacian,
    make_grid,
)
from .problem import (
    BarrierPair,
    CoeffParseError,
    CoefficientSpec,
    PositivityError,
    ProblemData,
    ResidualNorms,
    appendix_subsuper,
    barrier_bounds,
    elliptic_residual,
    energy,
    f_deriv,
    f_eval,
    materialize,
    omega_bound,
    parse_coeff,
    subsuper_init,
)
from .heatflow import (
    FlowConfig,
    FlowState,
    SteadyReport,
    StepSizeCollapse,
    TrajectoryRecord,
    TrajectoryRow,
    imex_step,
    run_to_steady,
    steady_check,
)
from .monotone import (
    ChainReport,
    SpaceTimeField,
    elliptic_fixed_point,
    implicit_flow,
    iterate_chain,
    make_time_grid,
    parabolic_lift,
)
from .epspath import (
    BoundTriple,
    EpsSchedule,
    IntegrabilityReport,
    PathAborted,
    PathReport,
    integrability_check,
    run_path,
    solve_at_eps,
)

__version__ = "0.1.0"
