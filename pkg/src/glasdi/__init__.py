"""Greedy latent-space dynamics identification for parametric ROMs.

Train an autoencoder jointly with per-sample polynomial latent-dynamics
models over a discrete parameter grid, pick training parameters greedily
with a residual-based error indicator, and serve fast surrogate predictions
through nearest-neighbor convex interpolation of the dynamics coefficients.
"""

from .dynamics import BasisLibrary, DiCoeffs, LatentTrajectory, eval_library, latent_rhs
from .estimator import GlasdiRom
from .fom import (
    Burgers1D,
    Burgers2D,
    FomConfig1D,
    FomConfig2D,
    NonConvergence,
    Trajectory,
    load_trajectory,
    save_trajectory,
)
from .greedy import (
    DegenerateFit,
    ErrorCorrelation,
    ErrorRecord,
    SamplerState,
    TerminationCriteria,
    TrainingDatabase,
    ZeroNormColumn,
    greedy_step,
    max_relative_error,
    residual_indicator,
)
from .network import (
    AdamState,
    LayerSpec,
    MlpParams,
    NonFiniteLoss,
    adam_step,
    decode,
    decoder_jvp,
    encode,
    encoder_jvp,
    loss_and_gradients,
)
from .param_space import (
    DiscreteParamSpace,
    SampleSet,
    build_grid,
    corner_indices,
    knn_indices,
    random_subset,
)
from .rom import LatentBlowup, RomModel, error_heatmap, measure_speedup, predict
from .shepard import ShepardWeights, interpolate_coeffs, shepard_weights
from .training import (
    CheckpointFormatError,
    TrainConfig,
    TrainResult,
    TrainingFailure,
    VersionMismatch,
    load_checkpoint,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "BasisLibrary",
    "Burgers1D",
    "Burgers2D",
    "CheckpointFormatError",
    "DegenerateFit",
    "DiCoeffs",
    "DiscreteParamSpace",
    "ErrorCorrelation",
    "ErrorRecord",
    "FomConfig1D",
    "FomConfig2D",
    "GlasdiRom",
    "LatentBlowup",
    "LatentTrajectory",
    "LayerSpec",
    "MlpParams",
    "NonConvergence",
    "NonFiniteLoss",
    "RomModel",
    "SampleSet",
    "SamplerState",
    "ShepardWeights",
    "TerminationCriteria",
    "Trajectory",
    "TrainConfig",
    "TrainResult",
    "TrainingDatabase",
    "TrainingFailure",
    "VersionMismatch",
    "adam_step",
    "build_grid",
    "corner_indices",
    "decode",
    "decoder_jvp",
    "encode",
    "encoder_jvp",
    "error_heatmap",
    "eval_library",
    "greedy_step",
    "interpolate_coeffs",
    "knn_indices",
    "latent_rhs",
    "load_checkpoint",
    "load_trajectory",
    "loss_and_gradients",
    "max_relative_error",
    "measure_speedup",
    "predict",
    "random_subset",
    "residual_indicator",
    "save_checkpoint",
    "save_trajectory",
    "shepard_weights",
    "train",
]
