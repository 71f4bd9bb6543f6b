"""Multi-task spatio-temporal crime prediction.

A regression model with shared-plus-specific weights per (region, slot,
type), a learned cross-type covariance, and fused-L1 temporal/spatial
penalties, trained by ADMM; prediction combines trained weight histories
with a learned per-series decay.
"""

__version__ = "0.1.0"

from ._kernels import backend
from .analytics import build_report, cross_type_similarity, spatial_diff_curve, temporal_diff_curve
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .datagen import GroundTruth, SynthResult, SynthSpec, generate, square_grid, write_dataset
from .dataio import LoadReport, load_dataset, save_dataset
from .evaluation import EvaluationReport, RunConfig, evaluate, rmse
from .forecaster import (
    ForecastTable,
    combine_weights,
    decay_coefficients,
    estimate_sigma,
    fit_forecast_table,
    naive_baselines,
    predict,
)
from .solver import (
    FitReport,
    Hyperparams,
    ModelState,
    StepReport,
    TrainingData,
    admm_step,
    fit,
    grad_P,
    grad_Q,
    init_state,
    objective,
    soft_threshold,
    training_rmse,
    unaugmented_objective,
    update_omega,
)
from .tensors import (
    CrimeTensor,
    DifferenceOperator,
    FeatureTensor,
    RegionGrid,
    build_spatial_operator,
    build_temporal_operator,
)
