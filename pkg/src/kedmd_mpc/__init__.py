"""Kernel EDMD surrogates of control-affine systems and MPC on top of them."""
from .analysis import (
    GrowthBoundSequence,
    compute_alpha,
    compute_B_eps,
    convergence_study,
    ell_star,
    estimate_growth_bounds,
    estimate_modulus,
    minimal_stabilizing_horizon,
)
from .autonomous import AutonomousModel, fit_autonomous, predict_observable, predict_state
from .control import (
    ControlSurrogate,
    error_constants,
    eval_surrogate,
    fit_control_surrogate,
    local_regression,
    surrogate_jacobian_x,
    validate_dataset,
)
from .exceptions import (
    ClosedLoopAborted,
    ConfigurationError,
    ConvergenceError,
    DatasetError,
    DomainError,
    DuplicatePointsError,
    FactorizationError,
    InfeasibleError,
    KedmdError,
    NumericalError,
)
from .kernels import (
    KernelMatrixFactor,
    WendlandKernel,
    factorize,
    fill_distance,
    kernel_matrix,
    wendland_phi,
    wendland_phi_deriv,
)
from .mpc import (
    ClosedLoopTrace,
    OcpConfig,
    OcpSolution,
    StageCost,
    mpc_closed_loop,
    solve_ocp,
    stage_cost,
)
from .sets import Box, ClusterSet
from .systems import (
    ClusterDataset,
    ControlAffinePlant,
    ExperimentConfig,
    chebyshev_grid,
    generate_cluster_data,
    van_der_pol,
    vdp_step,
)

__version__ = "0.1.0"
