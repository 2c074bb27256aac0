"""Generalized Hilbert projective metric on tail-controlled cones, with certified Sinkhorn contraction."""

from .errors import NotInConeError, PreconditionError
from .hilbert import (
    classic_hilbert_distance,
    hilbert_distance,
    l1_bound_from_hilbert,
    oracle_hilbert_distance,
    supnorm_bound_diagnostic,
)
from .kernelop import (
    Certificate,
    KernelSpec,
    apply_kernel,
    auto_cone,
    build_kernel,
    check_nonexpansive,
    contraction_certificate,
)
from .lp import LinearProgram, LPResult, maximize_ratio, solve_lp
from .sampling import sample_F, sample_G
from .sinkhorn import (
    ConvergenceReport,
    EotProblem,
    certify_sinkhorn,
    cone_ladder,
    eot_objective,
    growth_envelope,
    primal_plan,
    product_cone,
    run_sinkhorn,
    select_ladder_m,
    sinkhorn_step,
    tv_bound_chain,
    tv_primal,
)
from .space import CostSpec, DiscreteMeasure, cost_matrix, truncated_gaussian, uniform_grid
from .tailcone import (
    ConeSpec,
    ExponentialTail,
    SqrtTail,
    ZeroTail,
    beta_pair,
    check_tail_bounds,
    is_in_F,
    is_in_G,
    multiply_cone_map,
    xi_transform,
)

__version__ = "0.1.0"
