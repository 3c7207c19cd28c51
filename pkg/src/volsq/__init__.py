"""Volume-rescaled sampling and bias-corrected least squares."""

from .data import (
    CovarianceEstimate,
    LabelOracle,
    PointDistribution,
    RngState,
    conditioning_number,
    draw_iid,
    estimate_covariance,
    exact_covariance,
    load_distribution_spec,
    query_labels,
)
from .estimator import (
    EstimatorReport,
    LabeledSample,
    augmented_least_squares,
    average_estimators,
    estimation_error,
    least_squares,
    leave_one_out_identity_residual,
    optimum_weights,
)
from .rescaled import (
    RejectionConfig,
    determinantal_rejection_sample,
    determinantal_rejection_sample_batch,
    gaussian_vs_sample,
    gaussian_vs_sample_batch,
    vs_normalization_constant,
    vs_rescaling_weight,
    vs_sample_size_k,
)
from .volume import (
    brute_force_volume_distribution,
    removal_distribution,
    reverse_iterative_sample,
    reverse_iterative_sample_batch,
    volume_subset_probability,
)

__version__ = "0.1.0"

__all__ = [
    "CovarianceEstimate",
    "EstimatorReport",
    "LabelOracle",
    "LabeledSample",
    "PointDistribution",
    "RejectionConfig",
    "RngState",
    "augmented_least_squares",
    "average_estimators",
    "brute_force_volume_distribution",
    "conditioning_number",
    "determinantal_rejection_sample",
    "determinantal_rejection_sample_batch",
    "draw_iid",
    "estimate_covariance",
    "estimation_error",
    "exact_covariance",
    "gaussian_vs_sample",
    "gaussian_vs_sample_batch",
    "least_squares",
    "leave_one_out_identity_residual",
    "load_distribution_spec",
    "optimum_weights",
    "query_labels",
    "removal_distribution",
    "reverse_iterative_sample",
    "reverse_iterative_sample_batch",
    "volume_subset_probability",
    "vs_normalization_constant",
    "vs_rescaling_weight",
    "vs_sample_size_k",
]
