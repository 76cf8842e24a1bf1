"""The correlation-informed regression network and its trainer."""
from .network import (
    NetworkParams, forward, jacobian, jacobian_scaled, minmax_range, mre,
    scale_inputs, scale_outputs, unscale_outputs,
)
from .training import (
    FeatureMismatch, LMResult, TrainConfig, TrainedModel, TrainingError,
    init_params, lm_fit, restart_rng, train_multistart,
)

__all__ = [
    "NetworkParams", "forward", "jacobian", "jacobian_scaled", "minmax_range", "mre",
    "scale_inputs", "scale_outputs", "unscale_outputs",
    "FeatureMismatch", "LMResult", "TrainConfig", "TrainedModel", "TrainingError",
    "init_params", "lm_fit", "restart_rng", "train_multistart",
]
