"""Confidence-gated multistage inference.

Each stage reports its head's softmax; a beat leaves the cascade at the
first stage whose maximum probability is strictly above that stage's
threshold, and the final stage always emits.  Forwarded beats carry the
encoder bottleneck across each crossed boundary.
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from beatset.records import AamiClass, BeatRecord
from common.artifacts import write_csv_report
from common.errors import InvalidInput
from common.logger import logger
from exit_graph.branches import ExitParams
from exit_graph.partition import ForwardMode, PartitionPlan, StageExecutor, build_executors

TRACE_COLUMNS = ["beat_id", "exit_stage", "pred", "predicted_class", "true_class", "flops", "bytes"]


@dataclass(frozen=True)
class GateConfig:
    thresholds: Tuple[float, ...]
    mode: ForwardMode = ForwardMode.GATED

    def __post_init__(self):
        thresholds = tuple(float(t) for t in self.thresholds)
        for t in thresholds:
            if not math.isfinite(t) or not 0.0 <= t <= 1.0:
                raise InvalidInput(f"Thresholds must lie in [0, 1], got {t}")
        object.__setattr__(self, "thresholds", thresholds)
        object.__setattr__(self, "mode", ForwardMode.parse(self.mode))

    @classmethod
    def uniform(cls, threshold: float, num_exits: int, mode: ForwardMode = ForwardMode.GATED) -> "GateConfig":
        return cls((threshold,) * num_exits, mode)

    def check_for(self, plan: PartitionPlan) -> None:
        expected = plan.placement.num_exits
        if len(self.thresholds) != expected:
            raise InvalidInput(f"Plan has {expected} exit(s) but {len(self.thresholds)} threshold(s) were given")


@dataclass(frozen=True)
class StageOutcome:
    """What one executed stage contributes to a beat's decision."""
    stage_index: int
    probs: np.ndarray
    exit_flops: int
    forward_flops: int
    forward_bytes: int

    @property
    def pred(self) -> float:
        return float(np.max(self.probs))

    @property
    def predicted_class(self) -> AamiClass:
        return AamiClass(int(np.argmax(self.probs)))


@dataclass(frozen=True)
class ExitDecision:
    beat_id: str
    exit_stage: int
    pred: float
    predicted_class: AamiClass
    flops_spent: int
    bytes_transmitted: int
    true_class: Optional[AamiClass] = None

    @property
    def correct(self) -> bool:
        return self.true_class is not None and self.predicted_class == self.true_class


@dataclass(frozen=True)
class BatchResult:
    decisions: List[ExitDecision]
    exit_counts: Tuple[int, ...]

    @property
    def num_beats(self) -> int:
        return len(self.decisions)


def gate(outcomes: Iterable[StageOutcome], thresholds: Sequence[float], beat: Optional[BeatRecord] = None,
         num_stages: Optional[int] = None) -> ExitDecision:
    """Walk stage outcomes in order and stop at the first exit.

    ``outcomes`` may be a lazy iterator; stages after the exit are never
    pulled from it.
    """
    num_stages = num_stages if num_stages is not None else len(thresholds) + 1
    flops, sent = 0, 0
    for outcome in outcomes:
        k = outcome.stage_index
        final = k == num_stages - 1
        if final or outcome.pred > thresholds[k]:
            return ExitDecision(
                beat_id=beat.beat_id if beat is not None else "",
                exit_stage=k,
                pred=outcome.pred,
                predicted_class=outcome.predicted_class,
                flops_spent=flops + outcome.exit_flops,
                bytes_transmitted=sent,
                true_class=beat.label if beat is not None else None,
            )
        flops += outcome.forward_flops
        sent += outcome.forward_bytes
    raise InvalidInput("Stage outcomes ended before the final stage")


class Cascade:
    """A partition plan bound to its parameters, ready to classify beats."""

    def __init__(self, plan: PartitionPlan, params: ExitParams, dtype=np.float32):
        self.plan = plan
        self.executors: List[StageExecutor] = build_executors(plan, params, dtype)

    @property
    def num_stages(self) -> int:
        return len(self.executors)

    def stage_outcomes(self, beat: Union[BeatRecord, np.ndarray],
                       mode: ForwardMode = ForwardMode.GATED) -> Iterator[StageOutcome]:
        samples = beat.samples if isinstance(beat, BeatRecord) else np.asarray(beat)
        payload = samples.reshape((1,) + tuple(self.plan.backbone.input_shape))
        for executor in self.executors:
            stage = executor.stage
            features = executor.compute(executor.receive(payload, mode))
            probs = executor.exit_probs(features)[0]
            if mode == ForwardMode.GATED:
                decoder, encoder, sent = stage.decoder_flops, stage.encoder_flops, stage.payload_bytes
            else:
                decoder, encoder = 0, 0
                sent = stage.exit_branch.raw_feature_bytes if stage.exit_branch else 0
            exit_flops = decoder + stage.backbone_flops + stage.head_flops
            yield StageOutcome(stage.index, probs, exit_flops, exit_flops + encoder, sent)
            if stage.is_final:
                return
            payload = executor.transmit(features, mode)

    def classify(self, beat: BeatRecord, gate_config: GateConfig) -> ExitDecision:
        gate_config.check_for(self.plan)
        return gate(self.stage_outcomes(beat, gate_config.mode), gate_config.thresholds, beat, self.num_stages)

    def classify_batch(self, beats: Sequence[BeatRecord], gate_config: GateConfig,
                       workers: int = 1) -> BatchResult:
        gate_config.check_for(self.plan)
        if workers > 1 and len(beats) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                decisions = list(pool.map(lambda b: self.classify(b, gate_config), beats))
        else:
            decisions = [self.classify(beat, gate_config) for beat in beats]
        counts = exit_counts(decisions, self.num_stages)
        logger.debug(f"Classified {len(decisions)} beats, exits per stage {counts}")
        return BatchResult(decisions, counts)


def exit_counts(decisions: Sequence[ExitDecision], num_stages: int) -> Tuple[int, ...]:
    counts = np.bincount([d.exit_stage for d in decisions], minlength=num_stages) if decisions else np.zeros(num_stages)
    return tuple(int(c) for c in counts[:num_stages])


def classify(plan: PartitionPlan, params: ExitParams, gate_config: GateConfig, beat: BeatRecord) -> ExitDecision:
    return Cascade(plan, params).classify(beat, gate_config)


def classify_batch(plan: PartitionPlan, params: ExitParams, gate_config: GateConfig,
                   beats: Sequence[BeatRecord], workers: int = 1) -> BatchResult:
    return Cascade(plan, params).classify_batch(beats, gate_config, workers)


def trace_frame(decisions: Sequence[ExitDecision]) -> pd.DataFrame:
    rows = [{
        "beat_id": d.beat_id,
        "exit_stage": d.exit_stage,
        "pred": d.pred,
        "predicted_class": d.predicted_class.name,
        "true_class": d.true_class.name if d.true_class is not None else "",
        "flops": d.flops_spent,
        "bytes": d.bytes_transmitted,
    } for d in decisions]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def export_trace(path: Union[str, Path], decisions: Sequence[ExitDecision],
                 metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = write_csv_report(path, trace_frame(decisions), metadata)
    logger.info(f"Decision trace with {len(decisions)} beats written to {path}")
    return path


def decisions_from_trace(frame: pd.DataFrame) -> List[ExitDecision]:
    """Rebuild decisions from a trace DataFrame read back from CSV."""
    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise InvalidInput(f"Trace is missing columns {missing}")
    decisions = []
    for row in frame.itertuples(index=False):
        true_class = row.true_class if isinstance(row.true_class, str) and row.true_class else None
        decisions.append(ExitDecision(
            beat_id=str(row.beat_id),
            exit_stage=int(row.exit_stage),
            pred=float(row.pred),
            predicted_class=AamiClass.parse(row.predicted_class),
            flops_spent=int(row.flops),
            bytes_transmitted=int(row.bytes),
            true_class=AamiClass.parse(true_class) if true_class else None,
        ))
    return decisions
