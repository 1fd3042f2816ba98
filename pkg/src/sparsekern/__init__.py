"""Sparse random feature maps, their limiting additive kernels, and the
regression/experiment tooling built on top of them."""

__version__ = "0.1.0"

from .degrees import (
    BinomialDegrees,
    CustomDegrees,
    DegreeSpec,
    RegularDegrees,
    degree_spec_from_dict,
    sample_degrees,
)
from .errors import (
    NoOracleError,
    NonConvergenceError,
    SingularSystemError,
    ValidationError,
)
from .features import (
    BiasLaw,
    Nonlinearity,
    SparseFeatureMap,
    WeightLaw,
    apply_features,
    build_feature_map,
    degree_zero_constant,
    empirical_kernel,
    feature_map_from_json,
    feature_map_from_json_dict,
    sample_neighborhood,
)
from .kernels import (
    ArcCos0,
    DegreeMixture,
    DenseSign,
    KernelSpec,
    MGFGaussian,
    RBF,
    RegularAdditive,
    SparseSignD1,
    SparseStepD1,
    arccos0_kernel,
    degree_mixture_kernel,
    dense_sign_kernel,
    gram_matrix,
    gram_to_csv,
    kernel_from_dict,
    limiting_kernel_spec,
    mgf_gaussian_kernel,
    rbf_kernel,
    regular_additive_kernel,
    sparse_sign_d1,
    sparse_step_d1,
)
from .regression import (
    Dataset,
    KernelRidgeFit,
    RidgeFit,
    huber_fit,
    kernel_ridge_cv,
    kernel_ridge_fit,
    linear_ols,
    load_csv_dataset,
    log_lambda_grid,
    mse,
    r2_score,
    ridge_cv,
    ridge_fit,
    train_test_split_indices,
    trimmed_linear,
)
from .experiments import (
    CorruptionSpec,
    PolyTarget,
    StudyResult,
    amplification_summary,
    convergence_study,
    corrupt_inputs,
    eigen_amplification,
    eigen_study,
    loglog_slope,
    polytest_study,
    probe_pairs,
    stability_study,
)
