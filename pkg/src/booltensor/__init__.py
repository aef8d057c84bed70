"""Probabilistic Boolean tensor decomposition with Gibbs-sampled binary factors."""

from .encode import ContinuousMatrix, read_continuous_csv, relational_encode, zscore_normalize
from .model import (
    FactorMatrix,
    ModelState,
    NoiseModel,
    boolean_product,
    deterministic_product_entry,
    entry_log_likelihood,
    total_log_likelihood,
)
from .modelselect import RankSelectionReport, cv_select, occam_select
from .reconstruct import (
    Reconstruction,
    accuracy,
    factor_map_reconstruct,
    factor_mean_reconstruct,
    posterior_predictive,
)
from .sampler import (
    PosteriorAccumulator,
    SamplerConfig,
    Trace,
    conditional_prob,
    relevance_indicator,
    run_chain,
    sweep_mode,
    update_lambda,
)
from .simulate import SimSpec, density_for_target, expected_density, generate
from .tensor import (
    ObservedTensor,
    ParseError,
    flat_offset,
    load_tensor,
    mask_holdout,
    save_dense,
    save_sparse,
    unflatten_offset,
)

__version__ = "0.1.0"

__all__ = [
    "ContinuousMatrix",
    "FactorMatrix",
    "ModelState",
    "NoiseModel",
    "ObservedTensor",
    "ParseError",
    "PosteriorAccumulator",
    "RankSelectionReport",
    "Reconstruction",
    "SamplerConfig",
    "SimSpec",
    "Trace",
    "accuracy",
    "boolean_product",
    "conditional_prob",
    "cv_select",
    "density_for_target",
    "deterministic_product_entry",
    "entry_log_likelihood",
    "expected_density",
    "factor_map_reconstruct",
    "factor_mean_reconstruct",
    "flat_offset",
    "generate",
    "load_tensor",
    "mask_holdout",
    "occam_select",
    "posterior_predictive",
    "read_continuous_csv",
    "relational_encode",
    "relevance_indicator",
    "run_chain",
    "save_dense",
    "save_sparse",
    "sweep_mode",
    "total_log_likelihood",
    "unflatten_offset",
    "update_lambda",
    "zscore_normalize",
    "__version__",
]
