# Joint training of exit-augmented models

from .joint import joint_forward, joint_backward, joint_loss_and_grads, sgd_step, exit_params_bytes
from .training import (
    TrainConfig, EpochRecord, TrainingHistory, TrainResult, HeadEvaluation,
    train, evaluate_heads, score_predictions, predictions_from_frame,
    export_history, export_head_predictions, beats_to_batch
)

__all__ = [
    "joint_forward", "joint_backward", "joint_loss_and_grads", "sgd_step", "exit_params_bytes",
    "TrainConfig", "EpochRecord", "TrainingHistory", "TrainResult", "HeadEvaluation",
    "train", "evaluate_heads", "score_predictions", "predictions_from_frame",
    "export_history", "export_head_predictions", "beats_to_batch"
]
