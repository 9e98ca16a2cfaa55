"""Unbiased minimum-variance state and fault estimation with unknown-disturbance decoupling."""

from .estimator import FaultStateEstimator
from .exceptions import (
    ConfigError,
    DimensionMismatch,
    JointCovarianceIndefinite,
    LengthMismatch,
    NotPositiveDefinite,
    NumericalError,
    RankDeficient,
    SingularKkt,
    UmvfError,
    ValidationError,
)
from .filtering import (
    FilterState,
    StepRecord,
    gain_schedule,
    init_state,
    measurement_update,
    run_filter,
    run_with_schedule,
    step,
    time_update,
)
from .model import (
    InitialCondition,
    NoiseFactors,
    SystemDims,
    SystemModel,
    factor_noise,
    matrices_at,
    validate_scenario,
)
from .simulator import (
    DisturbanceSpec,
    FaultSignalSpec,
    TruthRecord,
    fault_signal_at,
    sample_noise_pair,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DimensionMismatch",
    "DisturbanceSpec",
    "FaultSignalSpec",
    "FaultStateEstimator",
    "FilterState",
    "InitialCondition",
    "JointCovarianceIndefinite",
    "LengthMismatch",
    "NoiseFactors",
    "NotPositiveDefinite",
    "NumericalError",
    "RankDeficient",
    "SingularKkt",
    "StepRecord",
    "SystemDims",
    "SystemModel",
    "TruthRecord",
    "UmvfError",
    "ValidationError",
    "factor_noise",
    "fault_signal_at",
    "gain_schedule",
    "init_state",
    "matrices_at",
    "measurement_update",
    "run_filter",
    "run_with_schedule",
    "sample_noise_pair",
    "simulate",
    "step",
    "time_update",
    "validate_scenario",
    "__version__",
]
