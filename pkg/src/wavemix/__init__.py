"""Wavelet estimation of a mean curve from replicated, heteroscedastic curves."""

__version__ = "0.1.0"

from .dwt import CoefficientTree, WaveletFilter, forward, forward_array, get_filter, inverse, inverse_array
from .errors import (
    CalibrationError,
    CellError,
    ConfigurationError,
    DomainError,
    InsufficientReplicatesError,
    LengthError,
    StructureError,
    WavemixError,
)
from .estimator import (
    CurvePanel,
    EstimateResult,
    average_then_shrink,
    estimate_sigma_mad,
    estimate_variances,
    pointwise_average,
    shrink_then_average,
)
from .shrinkage import ShrinkageRule
from .threshold import ThresholdPolicy, VarianceField, select_thresholds, universal_thresholds
from .simgen import SimulationConfig
from .bench import Estimator, StudyReport, mise, run_study

__all__ = [name for name in dir() if not name.startswith("_")]
