"""ROC analysis with linear transformation models."""

__version__ = "0.1.0"

from .bernstein import BernsteinBasis, OrdinalBasis, TransformationFunction  # noqa: E402
from .estimator import TransformationROC, fit_dataset  # noqa: E402
from .exceptions import (  # noqa: E402
    NotConvergedError,
    OutOfRangeError,
    PolarityWarning,
    TransRocError,
)
from .fit import FitOptions, FittedModel, fit_mle, fit_restricted  # noqa: E402
from .inference import (  # noqa: E402
    SimCiConfig,
    delta_method_ci,
    hypothesis_test_delta_zero,
    index_interval,
    score_ci,
    score_statistic,
    simulate_ci,
    uniform_roc_band,
)
from .links import get_link  # noqa: E402
from .model import Dataset, ModelSpec, Observation  # noqa: E402
from .mvmodel import JointData, JointSpec, compare_tests, fit_joint  # noqa: E402
from .rocmetrics import auc, optimal_threshold, ovl, roc_curve, sens_spec_at_star, youden  # noqa: E402

__all__ = [
    "__version__",
    "BernsteinBasis",
    "OrdinalBasis",
    "TransformationFunction",
    "TransformationROC",
    "fit_dataset",
    "NotConvergedError",
    "OutOfRangeError",
    "PolarityWarning",
    "TransRocError",
    "FitOptions",
    "FittedModel",
    "fit_mle",
    "fit_restricted",
    "SimCiConfig",
    "delta_method_ci",
    "hypothesis_test_delta_zero",
    "index_interval",
    "score_ci",
    "score_statistic",
    "simulate_ci",
    "uniform_roc_band",
    "get_link",
    "Dataset",
    "ModelSpec",
    "Observation",
    "JointData",
    "JointSpec",
    "compare_tests",
    "fit_joint",
    "auc",
    "optimal_threshold",
    "ovl",
    "roc_curve",
    "sens_spec_at_star",
    "youden",
]
