"""Gaussian-process residual models with correlation-aware online data
selection and a cone-constrained safety-filter solver.

The heavy lifting lives in the compiled extension ``gpcert._core``; this
package re-exports its public names.
"""

from ._core import (  # noqa: F401
    AdpKernel,
    BoundCheck,
    Box,
    ConeProblem,
    CorrelationIndicator,
    Dataset,
    ErrorBoundConfig,
    GpModel,
    OnlineSubset,
    SeKernelParams,
    SelectionConfig,
    SolveOutcome,
    SolveStatus,
    alignment,
    asymptotic_direction_cost,
    build_correlation_indicator,
    calibrate_beta,
    cone_violation,
    correlation_quantiles,
    data_quality,
    kkt_residual,
    modified_alignment,
    naive_select,
    se_eval,
    select_online,
    selection_objective,
    solve_backup_problem,
    solve_filter_problem,
    theorem1_bound,
    theorem3_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
