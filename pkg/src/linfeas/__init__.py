"""Solvers and benchmarking for linear feasibility problems Ax <= b."""

from .matrix import (
    BlockView,
    RowMatrix,
    block_residual,
    positive_part,
    spectral_norm_squared,
    transpose_apply_block,
)
from .problems import (
    FeasibilityProblem,
    LpInstance,
    MatrixMarketError,
    generate_dense,
    generate_sparse,
    lp_to_feasibility,
    mtx_problem,
    random_dense_problem,
    random_sparse_problem,
    read_lp_instance,
    read_matrix_market,
    synth_rhs,
    write_lp_instance,
)
from .selection import (
    AlreadyFeasibleError,
    GreedySelection,
    Partition,
    ProbabilityRule,
    block_probabilities,
    compute_epsilon,
    evaluate_selection,
    greedy_index_set,
    random_partition,
    sample_block,
)
from .solvers import (
    GrabpConfig,
    GskmConfig,
    GskmParams,
    PaskmConfig,
    PaskmParams,
    RpConfig,
    SkmConfig,
    SolverState,
    StepsizePolicy,
    StoppingCriterion,
    TrialResult,
    gap_ratio,
    grabp_step,
    gskm_step,
    paskm_step,
    res,
    rp_step,
    run,
    skm_step,
)
from .analysis import (
    ConvergenceAnalysis,
    PolyhedronProjector,
    ProjectionError,
    distance_to_S,
    empirical_factor,
    exact_hoffman_constant,
    hoffman_lower_bound,
    project_onto_S,
    theoretical_factor,
    zeta,
)
from .bench import (
    BenchConfig,
    RunReport,
    TrialRecord,
    block_sweep,
    emit_report,
    run_benchmark,
)

__version__ = "0.1.0"
