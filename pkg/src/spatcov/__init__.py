"""Joint row/column covariance estimation for matrix-variate spatial data."""

from ._accel import USING_NUMBA
from .downstream import (
    ClusterResult,
    GeneNetwork,
    cluster_cells,
    correlation_vs_distance,
    elbow_diagnostics,
    kmeans,
    normalized_laplacian,
    partial_correlations,
    spectral_embedding,
    threshold_network,
)
from .gibbs import (
    ChainState,
    ColumnPosterior,
    ColumnPrior,
    GibbsConfig,
    PosteriorSamples,
    adaptive_metropolis_step,
    column_posterior,
    column_prior,
    design_matrix,
    marginal_loglik_theta,
    ram_update,
    run_gibbs,
    run_gibbs_multi,
    sample_column,
    sample_lambda,
)
from .io import SpatialDataset, ingest, log_normalize, serialize_posterior
from .kernels import KernelSpec, covariance_matrix, exponential_cov, matern_cov
from .matnorm import (
    MatrixNormalParams,
    SparseCholesky,
    SparseLowerFactor,
    assemble_precision,
    cov_to_corr,
    factor_to_covariance,
    kl_matnorm,
    kl_mvn,
    kl_optimal_factor,
    matnorm_logpdf,
    row_ignorance_kl_pair,
    vecchia_factor,
)
from .simulation import (
    SimMetrics,
    SimScenario,
    kl_metrics,
    relative_frobenius,
    run_scenario,
    sample_inverse_wishart,
    sample_matrix_normal,
    scale_matrix,
)
from .spatial import (
    MaximinOrdering,
    build_ordering,
    maximin_order,
    pairwise_distances,
    predecessor_neighbors,
)

__version__ = "0.1.0"

__all__ = [
    "USING_NUMBA",
    "ChainState",
    "ClusterResult",
    "ColumnPosterior",
    "ColumnPrior",
    "GeneNetwork",
    "GibbsConfig",
    "KernelSpec",
    "MatrixNormalParams",
    "MaximinOrdering",
    "PosteriorSamples",
    "SimMetrics",
    "SimScenario",
    "SparseCholesky",
    "SparseLowerFactor",
    "SpatialDataset",
    "adaptive_metropolis_step",
    "assemble_precision",
    "build_ordering",
    "cluster_cells",
    "column_posterior",
    "column_prior",
    "correlation_vs_distance",
    "cov_to_corr",
    "covariance_matrix",
    "design_matrix",
    "elbow_diagnostics",
    "exponential_cov",
    "factor_to_covariance",
    "ingest",
    "kl_matnorm",
    "kl_metrics",
    "kl_mvn",
    "kl_optimal_factor",
    "kmeans",
    "log_normalize",
    "marginal_loglik_theta",
    "matern_cov",
    "matnorm_logpdf",
    "maximin_order",
    "normalized_laplacian",
    "pairwise_distances",
    "partial_correlations",
    "predecessor_neighbors",
    "ram_update",
    "relative_frobenius",
    "row_ignorance_kl_pair",
    "run_gibbs",
    "run_gibbs_multi",
    "run_scenario",
    "sample_column",
    "sample_inverse_wishart",
    "sample_lambda",
    "sample_matrix_normal",
    "scale_matrix",
    "serialize_posterior",
    "spectral_embedding",
    "threshold_network",
    "vecchia_factor",
]
