import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from beatset.records import AamiClass, BeatRecord, DatasetSplit, NUM_CLASSES
from cascade.gating import Cascade
from common.artifacts import write_csv_report
from common.errors import InvalidInput, TrainingDiverged
from common.logger import logger
from exit_graph.branches import ExitModel, ExitParams
from exit_graph.partition import ForwardMode, partition
from .joint import joint_forward, joint_loss_and_grads, sgd_step

EVAL_CHUNK = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 0.05
    exit_loss_weights: Optional[Tuple[float, ...]] = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise InvalidInput(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidInput(f"batch_size must be positive, got {self.batch_size}")
        if not math.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise InvalidInput(f"learning_rate must be a non-negative real, got {self.learning_rate}")
        if self.exit_loss_weights is not None:
            weights = tuple(float(w) for w in self.exit_loss_weights)
            if any(not w > 0 for w in weights):
                raise InvalidInput(f"Exit loss weights must be positive, got {weights}")
            object.__setattr__(self, "exit_loss_weights", weights)

    def weights_for(self, num_heads: int) -> Tuple[float, ...]:
        if self.exit_loss_weights is None:
            return (1.0,) * num_heads
        if len(self.exit_loss_weights) != num_heads:
            raise InvalidInput(f"{len(self.exit_loss_weights)} loss weights for {num_heads} heads")
        return self.exit_loss_weights


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    loss: float
    train_accuracy: Tuple[float, ...]
    val_accuracy: Tuple[float, ...]


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for record in self.records:
            row = {"epoch": record.epoch, "loss": record.loss}
            for h, acc in enumerate(record.train_accuracy):
                row[f"train_acc_head{h}"] = acc
            for h, acc in enumerate(record.val_accuracy):
                row[f"val_acc_head{h}"] = acc
            row["best"] = int(record.epoch == self.best_epoch)
            rows.append(row)
        return pd.DataFrame(rows)


@dataclass(frozen=True)
class TrainResult:
    params: ExitParams
    history: TrainingHistory


def beats_to_batch(beats: Sequence[BeatRecord], input_shape) -> Tuple[np.ndarray, np.ndarray]:
    x = np.stack([b.samples for b in beats]).reshape((len(beats),) + tuple(input_shape))
    y = np.array([int(b.label) for b in beats], dtype=np.int64)
    return x, y


def head_accuracies(exit_model: ExitModel, params: ExitParams, x: np.ndarray, y: np.ndarray) -> Tuple[float, ...]:
    if len(y) == 0:
        return tuple(float("nan") for _ in range(exit_model.num_heads))
    correct = np.zeros(exit_model.num_heads, dtype=np.int64)
    for start in range(0, len(y), EVAL_CHUNK):
        joint = joint_forward(exit_model, params, x[start:start + EVAL_CHUNK])
        for h, probs in enumerate(joint.probs):
            correct[h] += int(np.sum(np.argmax(probs, axis=1) == y[start:start + EVAL_CHUNK]))
    return tuple(float(c) / len(y) for c in correct)


def train(exit_model: ExitModel, params: ExitParams, data: DatasetSplit,
          config: TrainConfig = TrainConfig()) -> TrainResult:
    """Mini-batch SGD on the weighted sum of every head's cross-entropy.

    Returns the parameters of the epoch with the best final-head validation
    accuracy (training accuracy when the validation set is empty); the
    earliest epoch wins ties.
    """
    if not data.train:
        raise InvalidInput("Training set is empty")
    if config.batch_size > len(data.train):
        raise InvalidInput(f"batch_size {config.batch_size} exceeds the {len(data.train)} training beats")
    weights = config.weights_for(exit_model.num_heads)
    input_shape = exit_model.backbone.input_shape
    x_train, y_train = beats_to_batch(data.train, input_shape)
    if data.validation:
        x_val, y_val = beats_to_batch(data.validation, input_shape)
    else:
        x_val, y_val = x_train, y_train

    rng = np.random.default_rng(config.seed)
    history = TrainingHistory()
    best_params, best_score = params, -1.0
    current = params
    logger.info(
        f"Training {exit_model.num_heads} heads on {len(data.train)} beats for {config.epochs} epochs "
        f"(batch {config.batch_size}, lr {config.learning_rate}, weights {weights})"
    )
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(y_train))
        total_loss = 0.0
        try:
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                loss, _, grads = joint_loss_and_grads(exit_model, current, x_train[idx], y_train[idx], weights)
                if not math.isfinite(loss):
                    raise TrainingDiverged(epoch)
                total_loss += loss * len(idx)
                current = sgd_step(current, grads, config.learning_rate)
            train_acc = head_accuracies(exit_model, current, x_train, y_train)
            val_acc = head_accuracies(exit_model, current, x_val, y_val)
        except InvalidInput as e:
            raise TrainingDiverged(epoch, str(e)) from e

        record = EpochRecord(epoch, total_loss / len(order), train_acc, val_acc)
        history.records.append(record)
        logger.info(
            f"Epoch {epoch}/{config.epochs}: loss {record.loss:.4f}, "
            f"val accuracy per head {[round(a, 4) for a in val_acc]}"
        )
        if val_acc[-1] > best_score:
            best_score, best_params, history.best_epoch = val_acc[-1], current, epoch

    logger.info(f"Best epoch {history.best_epoch} with final-head validation accuracy {best_score:.4f}")
    return TrainResult(best_params, history)


@dataclass(frozen=True)
class HeadEvaluation:
    """Per-head accuracy and per-class recall (NaN for classes absent from the beats)."""
    accuracy: Tuple[float, ...]
    recall: Tuple[Tuple[float, ...], ...]
    predictions: np.ndarray
    labels: np.ndarray

    @property
    def num_heads(self) -> int:
        return len(self.accuracy)


def recall_per_class(predicted: np.ndarray, labels: np.ndarray) -> Tuple[float, ...]:
    recalls = []
    for cls in range(NUM_CLASSES):
        mask = labels == cls
        recalls.append(float(np.mean(predicted[mask] == cls)) if mask.any() else float("nan"))
    return tuple(recalls)


def score_predictions(predictions: np.ndarray, labels: np.ndarray) -> HeadEvaluation:
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    accuracy = tuple(float(np.mean(predictions[:, h] == labels)) for h in range(predictions.shape[1]))
    recall = tuple(recall_per_class(predictions[:, h], labels) for h in range(predictions.shape[1]))
    return HeadEvaluation(accuracy, recall, predictions, labels)


def evaluate_heads(exit_model: ExitModel, params: ExitParams, beats: Sequence[BeatRecord]) -> HeadEvaluation:
    """Score every head on every beat, running each beat through the cascade stages one at a time."""
    if not beats:
        raise InvalidInput("Cannot evaluate heads on an empty beat list")
    cascade = Cascade(partition(exit_model), params)
    predictions = np.empty((len(beats), exit_model.num_heads), dtype=np.int64)
    for row, beat in enumerate(beats):
        for outcome in cascade.stage_outcomes(beat, ForwardMode.GATED):
            predictions[row, outcome.stage_index] = int(outcome.predicted_class)
    labels = np.array([int(b.label) for b in beats], dtype=np.int64)
    evaluation = score_predictions(predictions, labels)
    logger.info(f"Head accuracies on {len(beats)} beats: {[round(a, 4) for a in evaluation.accuracy]}")
    return evaluation


def export_history(path: Union[str, Path], history: TrainingHistory,
                   metadata: Optional[Dict[str, Any]] = None) -> Path:
    return write_csv_report(path, history.to_frame(), metadata)


def export_head_predictions(path: Union[str, Path], evaluation: HeadEvaluation, beats: Sequence[BeatRecord],
                            metadata: Optional[Dict[str, Any]] = None) -> Path:
    frame = pd.DataFrame({
        "beat_id": [b.beat_id for b in beats],
        "true_class": [AamiClass(int(c)).name for c in evaluation.labels],
    })
    for h in range(evaluation.num_heads):
        frame[f"head{h}"] = [AamiClass(int(c)).name for c in evaluation.predictions[:, h]]
    return write_csv_report(path, frame, metadata)


def predictions_from_frame(frame: pd.DataFrame) -> HeadEvaluation:
    """Re-score a head-prediction CSV; used to recount reported accuracies."""
    heads = sorted((c for c in frame.columns if c.startswith("head")), key=lambda c: int(c[4:]))
    labels = np.array([int(AamiClass.parse(v)) for v in frame["true_class"]], dtype=np.int64)
    predictions = np.array([[int(AamiClass.parse(v)) for v in frame[h]] for h in heads], dtype=np.int64).T
    return score_predictions(predictions.reshape(len(labels), len(heads)), labels)
