from .base import CONTEXT_FRAMES, PredictionRequest, padded_context
from .learned import LearnedPredictor, ModelConfig, init_params, rollout
from .oracle import (MAX_ORACLE_HORIZON, OraclePredictor, PersistencePredictor,
                     oracle_predict)
from .training import evaluate, grad_check, rollout_loss, train
from .transforms import apply_transforms

__all__ = [
    "CONTEXT_FRAMES", "MAX_ORACLE_HORIZON", "LearnedPredictor", "ModelConfig",
    "OraclePredictor", "PersistencePredictor", "PredictionRequest",
    "apply_transforms", "evaluate", "grad_check", "init_params", "oracle_predict",
    "padded_context", "rollout", "rollout_loss", "train",
]
