from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from beatset.records import AamiClass, BEAT_LENGTH
from cascade.gating import ExitDecision, exit_counts
from common.errors import InvalidInput

RAW_BEAT_BYTES = BEAT_LENGTH * 4


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    system_accuracy: float
    system_sensitivity: float
    dtc: float
    exit_rate: Tuple[float, ...]
    total_flops: float
    efficiency_rate: float
    bytes_per_beat: float
    transmission_savings: float
    exit_counts: Tuple[int, ...] = ()
    mean_latency_s: Optional[float] = None

    @property
    def rate_sum(self) -> float:
        return float(sum(self.exit_rate) + self.dtc)


def _classes(values) -> np.ndarray:
    return np.array([int(v.predicted_class) if isinstance(v, ExitDecision) else int(AamiClass.parse(v))
                     for v in values], dtype=np.int64)


def sensitivity(decisions: Sequence[Union[ExitDecision, AamiClass, int]],
                labels: Sequence[Union[AamiClass, int]]) -> float:
    """Macro-averaged recall over the classes present in ``labels``."""
    if len(decisions) == 0:
        raise InvalidInput("Cannot compute sensitivity of an empty decision list")
    if len(decisions) != len(labels):
        raise InvalidInput(f"{len(decisions)} decisions for {len(labels)} labels")
    predicted = _classes(decisions)
    truth = np.array([int(AamiClass.parse(l)) for l in labels], dtype=np.int64)
    recalls = [np.mean(predicted[truth == cls] == cls) for cls in np.unique(truth)]
    return float(np.mean(recalls))


def transmission_savings(point: Union[SweepPoint, float], raw_beat_bytes: int = RAW_BEAT_BYTES) -> float:
    if raw_beat_bytes <= 0:
        raise InvalidInput(f"raw_beat_bytes must be positive, got {raw_beat_bytes}")
    bytes_per_beat = point.bytes_per_beat if isinstance(point, SweepPoint) else float(point)
    return 1.0 - bytes_per_beat / raw_beat_bytes


def recount(decisions: Sequence[ExitDecision], baseline_flops: int, num_stages: int, threshold: float = float("nan"),
            labels: Optional[Sequence[Union[AamiClass, int]]] = None, raw_beat_bytes: int = RAW_BEAT_BYTES,
            latencies: Optional[Sequence[float]] = None) -> SweepPoint:
    """Fold per-beat decisions into one sweep point.

    Labels default to each decision's ``true_class``.  Exit rates cover the
    early-exit stages; the final stage's share is the data-to-cloud rate.
    """
    if not decisions:
        raise InvalidInput("Cannot summarize an empty decision list")
    if labels is None:
        if any(d.true_class is None for d in decisions):
            raise InvalidInput("Decisions carry no ground truth and no labels were given")
        labels = [d.true_class for d in decisions]
    n = len(decisions)
    predicted = _classes(decisions)
    truth = np.array([int(AamiClass.parse(l)) for l in labels], dtype=np.int64)
    counts = exit_counts(decisions, num_stages)
    total_flops = float(np.mean([d.flops_spent for d in decisions]))
    bytes_per_beat = float(np.mean([d.bytes_transmitted for d in decisions]))
    return SweepPoint(
        threshold=float(threshold),
        system_accuracy=float(np.mean(predicted == truth)),
        system_sensitivity=sensitivity(decisions, labels),
        dtc=counts[-1] / n,
        exit_rate=tuple(c / n for c in counts[:-1]),
        total_flops=total_flops,
        efficiency_rate=total_flops / baseline_flops,
        bytes_per_beat=bytes_per_beat,
        transmission_savings=transmission_savings(bytes_per_beat, raw_beat_bytes),
        exit_counts=counts,
        mean_latency_s=float(np.mean(latencies)) if latencies is not None else None,
    )
