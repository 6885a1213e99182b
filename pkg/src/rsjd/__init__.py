"""Monte Carlo toolkit for optimal control of regime-switching jump-diffusions.

Simulates controlled states driven by Brownian noise, regime-modulated
compound-Poisson jumps and the regime chain's own counting martingales;
estimates performance functionals and their control derivatives on common
random numbers; evaluates the two-regime linear-quadratic closed forms; and
solves recursive-utility backward equations by least-squares Monte Carlo.
"""

from ._backend import BACKEND, set_num_threads, using_numba
from .bsde import BsdeSolution, recursive_utility_value_regime2, solve_bsde
from .bundles import BundleSet, PathBundle, generate_bundle, generate_bundles, make_grid
from .errors import (
    ConfigError,
    DomainError,
    NumericalError,
    RsjdError,
    SimulationDivergedError,
    SingularControlError,
    UnsupportedModelError,
    ValidationError,
)
from .forward import (
    Trajectory,
    TrajectorySet,
    simulate_forward,
    simulate_forward_set,
    simulate_variational,
    simulate_variational_set,
)
from .jumps import DiscreteJumpSizes, GaussianJumpSizes, LevyMeasureSpec
from .mc import (
    Estimate,
    FittedConditional,
    PerformanceEvaluator,
    RegressionBasis,
    conditional_expectation,
    control_scaling_sweep,
    directional_derivative_crn,
    directional_derivative_pathwise,
    estimate_from_values,
    estimate_performance,
    paired_difference,
)
from .model import (
    BsdeModel,
    ControlPolicy,
    ForwardModel,
    LqSpec,
    PerformanceModel,
    Snapshot,
    application1_preset,
    application2_preset,
    bump_direction,
    perturb,
    scale_policy,
)
from .principle import (
    AdjointState,
    GammaCoefficients,
    LqAnalyticAdjoints,
    StationarityReport,
    SuppliedAdjoints,
    gamma,
    hamiltonian,
    hamiltonian_control_gradient,
    lq_conditional_adjoints,
    lq_kappa,
    optimal_control_lq,
    optimal_policy,
    simulate_adjoint_A,
    stationarity_check,
)
from .regime import (
    ChainIncrements,
    GeneratorMatrix,
    RegimePath,
    RegimePathSet,
    chain_increments,
    sample_regime_path,
    sample_regime_paths,
    transition_matrix,
    two_state,
)

__version__ = "0.1.0"
