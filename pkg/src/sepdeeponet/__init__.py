"""Physics-informed DeepONets with separable (per-axis) trunk networks."""

from .errors import (
    CorruptionError,
    FormatError,
    NumericError,
    ShapeError,
    SolverDivergenceError,
    UnsupportedOperationError,
    UsageError,
)
from .model import (
    DeepONetConfig,
    DeepONetModel,
    MLPSpec,
    count_params,
    deeponet_eval,
    init_params,
    mlp_forward,
)

__all__ = [
    "CorruptionError",
    "DeepONetConfig",
    "DeepONetModel",
    "FormatError",
    "MLPSpec",
    "NumericError",
    "ShapeError",
    "SolverDivergenceError",
    "UnsupportedOperationError",
    "UsageError",
    "count_params",
    "deeponet_eval",
    "init_params",
    "mlp_forward",
]
