"""Bayesian mixed-frequency (MIDAS) nowcasting.

Gaussian-process, sum-of-trees, and horseshoe-linear conditional means over
compressed high-frequency predictor lags, with homoskedastic or
stochastic-volatility errors, a synthetic replication study, and
probabilistic forecast evaluation.
"""

__version__ = "0.1.0"

from .basis import (
    ImpliedLengthScale,
    MidasWeightMatrix,
    build_weight_matrix,
    implied_inverse_length_scale,
)
from .pipeline import (
    DesignMatrix,
    MixedFrequencyPanel,
    Standardizer,
    assemble_design,
    build_hf_lag_vector,
    ingest_csv,
    prediction_input,
    transform_series,
)
from .sampler import (
    ModelConfig,
    PosteriorDraws,
    PredictiveDistribution,
    draw_predictive,
    parse_model_id,
    run_chain,
)

__all__ = [
    "ImpliedLengthScale",
    "MidasWeightMatrix",
    "build_weight_matrix",
    "implied_inverse_length_scale",
    "DesignMatrix",
    "MixedFrequencyPanel",
    "Standardizer",
    "assemble_design",
    "build_hf_lag_vector",
    "ingest_csv",
    "prediction_input",
    "transform_series",
    "ModelConfig",
    "PosteriorDraws",
    "PredictiveDistribution",
    "draw_predictive",
    "parse_model_id",
    "run_chain",
    "__version__",
]
