"""Solvers for eigenvalue problems with sum-of-rank-one quadratic eigenvector
nonlinearities, via an equivalent eigenvalue-nonlinear formulation."""

from .coefficient_eval import GHCache, GHPair, cache_get_or_eval, eval_gh
from .deflation import (
    DeflatedOperator,
    InvariantPair,
    KEigenpairsResult,
    build_deflated,
    compute_k_eigenpairs,
    expand_pair,
    invariant_pair_residual,
    load_invariant_pair,
    save_invariant_pair,
)
from .errors import (
    AllDeltasIllConditioned,
    BranchJumpDetected,
    CapacitanceSingular,
    InvalidProblem,
    LambdaHitsDeflated,
    LinearSolveFailed,
    MinimalityLost,
    Mu2RecoveryUndefined,
    NEPvError,
    NoConvergence,
    NoRealBranch,
    PencilSingular,
    ProblemTooLarge,
    SchurComplementSingular,
    SingularJacobian,
    WindowContainsBranchJump,
)
from .linalg import ScaledIdentity, SolveCounter
from .mep_solver import (
    DeltaSet,
    MEPSystem,
    build_deltas,
    build_mep,
    delta_dimension,
    extract_mu,
    solve_mep,
)
from .mu_functions import (
    BranchPolicy,
    MuEvaluator,
    recover_eigenvector,
    sample_curves,
)
from .nep_solver import (
    NEPOperator,
    NewtonSettings,
    SolveReport,
    apply_M,
    augmented_newton,
    dense_M,
    format_report_table,
    relres_nep,
    solve_M,
)
from .polysys import (
    MuSolution,
    PolySystem,
    Provenance,
    jacobian,
    newton_refine,
    residual,
    solve_m1_direct,
    solve_m2_analytic,
)
from .problem_model import (
    Eigenpair,
    GPEConfig,
    NEPvProblem,
    build_dense_problem,
    build_gpe_problem,
    load_problem_matrix_market,
    nepv_residual,
    nepv_relative_residual,
    paper_2x2_problem,
    paper_3x3_problem,
    save_problem_matrix_market,
)
from .verification import (
    brute_force_nepv,
    check_equivalence,
    fd_jacobian_suite,
    locate_mu_zero,
    singularity_fit,
)

__version__ = "0.1.0"
