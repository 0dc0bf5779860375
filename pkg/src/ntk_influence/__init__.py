"""Influence functions for wide two-layer ReLU networks via their tangent kernel.

The package computes the exact effect of deleting a training point on a
kernel ridge model (closed-form leave-one-out), the classical
inverse-Hessian influence estimate, spectral and density-based bounds on
the gap between the two, their finite-width counterparts on actual trained
networks, training-time dynamics, and complexity attributions.
"""

from .complexity import ComplexityReport, group_complexity, rkhs_norm, subset_complexity
from .datasets import (
    Dataset,
    MixtureSpec,
    flip_labels,
    generate_mixture,
    kde_density,
    load_dataset,
    normalize_rows,
)
from .dynamics import (
    DynamicsTrace,
    influence_at_time,
    predict_at_time,
    track_top_influencers,
)
from .influence import (
    BoundInputs,
    InfluenceRecord,
    density_upper_bound,
    error_lower_bound,
    error_rate,
    gamma_hat,
    influence_exact,
    influence_ihvp,
    influence_ihvp_empirical,
    influence_records,
    spectral_ratio,
)
from .kernel import (
    KernelCross,
    KernelMatrix,
    cross,
    cross_many,
    empirical_kernel,
    gram,
    jitter_for,
    ntk_value,
)
from .network import (
    NetworkState,
    TrainConfig,
    init_network,
    predict_batch,
    retrain_influence,
    retrain_influences,
    train,
)
from .ridge import RidgeModel, fit, loo_predict, loo_residual, loo_residuals, predict
from .stats import (
    CorrelationSummary,
    correlation_summary,
    pearson_r,
    spearman_rho,
    top_k_by_magnitude,
)

__version__ = "0.1.0"

__all__ = [
    "BoundInputs",
    "ComplexityReport",
    "CorrelationSummary",
    "Dataset",
    "DynamicsTrace",
    "InfluenceRecord",
    "KernelCross",
    "KernelMatrix",
    "MixtureSpec",
    "NetworkState",
    "RidgeModel",
    "TrainConfig",
    "correlation_summary",
    "cross",
    "cross_many",
    "density_upper_bound",
    "empirical_kernel",
    "error_lower_bound",
    "error_rate",
    "fit",
    "flip_labels",
    "gamma_hat",
    "generate_mixture",
    "gram",
    "group_complexity",
    "influence_at_time",
    "influence_exact",
    "influence_ihvp",
    "influence_ihvp_empirical",
    "influence_records",
    "init_network",
    "jitter_for",
    "kde_density",
    "load_dataset",
    "loo_predict",
    "loo_residual",
    "loo_residuals",
    "normalize_rows",
    "ntk_value",
    "pearson_r",
    "predict",
    "predict_at_time",
    "predict_batch",
    "retrain_influence",
    "retrain_influences",
    "rkhs_norm",
    "spearman_rho",
    "spectral_ratio",
    "subset_complexity",
    "top_k_by_magnitude",
    "track_top_influencers",
    "train",
    "__version__",
]
