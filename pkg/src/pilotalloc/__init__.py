"""Treatment allocation from small pilot studies.

Computes the plug-in (feasible) Neyman allocation and its regularized
variants, characterizes the homoskedasticity region where balanced
randomization beats the plug-in rule, and provides Monte Carlo / bootstrap
tooling to quantify the trade-off on synthetic and empirical data.
"""

from .alloc import (
    AllocationRule,
    VarEstimates,
    WaldResult,
    additive_reg,
    apply_rule,
    assign_block,
    diff_in_means,
    exponential_reg,
    feasible_neyman,
    infeasible_neyman,
    pilot_variances,
    wald_test,
)
from .asymp import (
    BmEstimate,
    CmInterval,
    LossReport,
    SubGaussianInterval,
    avar,
    cm_curve,
    cm_from_bm,
    efficiency_losses,
    estimate_bm,
    gaussian_bm_oracle,
    loss_derivatives,
    mixture_avar,
    required_pilot_asymptotic,
    subgaussian_cm,
)
from .dgp import (
    DgpSpec,
    ErrorLaw,
    Moments,
    PilotSample,
    make_model,
    make_regret_dgp,
    sample_arm,
    sample_pilot,
    true_moments,
)
from .empirical import (
    EmpiricalDataset,
    GroupStats,
    bootstrap_cm_curve,
    cluster_aggregate,
    group_stats,
    load_dataset,
    required_pilot_exact,
    required_pilot_from_data,
)
from .errors import (
    DataInputError,
    DegenerateDataError,
    InsufficientPilotError,
    InvalidParameterError,
    NotApplicableError,
    PilotAllocError,
)
from .sim import SimConfig, SimResult, run_mse, run_replication

__all__ = [name for name in dir() if not name.startswith("_")]
