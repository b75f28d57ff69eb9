"""Threshold sweep over a partitioned exit model.

Every beat's stage outcomes are computed once; each threshold then re-gates
the same outcomes, so a sweep costs one full cascade pass per beat.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd

from beatset.records import BeatRecord
from cascade.gating import Cascade, ExitDecision, StageOutcome, gate
from common.artifacts import provenance, read_json_report, write_csv_report, write_json_report
from common.errors import FormatError, InvalidInput
from common.logger import logger
from deploy_sim.links import LinkProfile, beat_latency
from exit_graph.branches import ExitParams
from exit_graph.partition import ForwardMode, PartitionPlan
from exit_graph.placements import ExitPlacement
from .metrics import RAW_BEAT_BYTES, SweepPoint, recount


def threshold_grid(step: float = 0.01) -> List[float]:
    count = int(round(1.0 / step))
    return [round(i / count, 10) for i in range(count + 1)]


@dataclass(frozen=True)
class SweepReport:
    placement: ExitPlacement
    points: Tuple[SweepPoint, ...]
    baseline_flops: int
    baseline_accuracy: float
    baseline_sensitivity: float
    bottleneck_size: int
    num_beats: int

    @property
    def thresholds(self) -> List[float]:
        return [p.threshold for p in self.points]

    def point_at(self, threshold: float) -> SweepPoint:
        for point in self.points:
            if abs(point.threshold - threshold) < 1e-9:
                return point
        raise InvalidInput(f"Threshold {threshold} is not part of the sweep")

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for p in self.points:
            row = {
                "threshold": p.threshold,
                "system_accuracy": p.system_accuracy,
                "system_sensitivity": p.system_sensitivity,
                "dtc": p.dtc,
            }
            for k, rate in enumerate(p.exit_rate, start=1):
                row[f"exit_rate_{k}"] = rate
            row.update({
                "total_flops": p.total_flops,
                "efficiency_rate": p.efficiency_rate,
                "bytes_per_beat": p.bytes_per_beat,
                "transmission_savings": p.transmission_savings,
            })
            for k, count in enumerate(p.exit_counts):
                row[f"exits_stage{k}"] = count
            if p.mean_latency_s is not None:
                row["mean_latency_s"] = p.mean_latency_s
            rows.append(row)
        return pd.DataFrame(rows)


def collect_outcomes(cascade: Cascade, beats: Sequence[BeatRecord], workers: int = 1) -> List[List[StageOutcome]]:
    def run(beat):
        return list(cascade.stage_outcomes(beat, ForwardMode.GATED))

    if workers > 1 and len(beats) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, beats))
    return [run(beat) for beat in beats]


def sweep(plan: PartitionPlan, params: ExitParams, beats: Sequence[BeatRecord],
          thresholds: Optional[Sequence[float]] = None, raw_beat_bytes: int = RAW_BEAT_BYTES,
          links: Optional[LinkProfile] = None, workers: int = 1) -> SweepReport:
    """Apply each threshold at every exit and summarize the cascade's behavior."""
    if not beats:
        raise InvalidInput("Cannot sweep an empty beat list")
    thresholds = threshold_grid() if thresholds is None else [float(t) for t in thresholds]
    for t in thresholds:
        if not 0.0 <= t <= 1.0:
            raise InvalidInput(f"Thresholds must lie in [0, 1], got {t}")
    if any(a >= b for a, b in zip(thresholds, thresholds[1:])):
        raise InvalidInput("Thresholds must be strictly increasing")

    cascade = Cascade(plan, params)
    num_exits = plan.placement.num_exits
    logger.info(f"Sweeping {len(thresholds)} thresholds over {len(beats)} beats for placement {plan.placement.label}")
    outcomes = collect_outcomes(cascade, beats, workers)

    def decide(t: float) -> List[ExitDecision]:
        return [gate(o, (t,) * num_exits, beat, cascade.num_stages) for o, beat in zip(outcomes, beats)]

    points = []
    for t in thresholds:
        decisions = decide(t)
        latencies = [beat_latency(d, plan, links) for d in decisions] if links is not None else None
        point = recount(decisions, plan.baseline_flops, cascade.num_stages, t,
                        raw_beat_bytes=raw_beat_bytes, latencies=latencies)
        points.append(point)
        logger.debug(
            f"t={t:.2f}: accuracy {point.system_accuracy:.4f}, dtc {point.dtc:.4f}, "
            f"efficiency {point.efficiency_rate:.4f}"
        )

    final = recount(decide(1.0), plan.baseline_flops, cascade.num_stages, 1.0, raw_beat_bytes=raw_beat_bytes)
    return SweepReport(
        placement=plan.placement,
        points=tuple(points),
        baseline_flops=plan.baseline_flops,
        baseline_accuracy=final.system_accuracy,
        baseline_sensitivity=final.system_sensitivity,
        bottleneck_size=plan.exit_model.bottleneck_size,
        num_beats=len(beats),
    )


def write_sweep(report: SweepReport, stem: Union[str, Path],
                metadata: Optional[Dict[str, Any]] = None) -> Tuple[Path, Path]:
    """Write ``<stem>.csv`` and ``<stem>.json`` holding the same sweep."""
    stem = Path(stem)
    metadata = metadata if metadata is not None else provenance()
    csv_path = write_csv_report(stem.with_suffix(".csv"), report.to_frame(), metadata)
    payload = {
        "placement": list(report.placement.boundaries),
        "baseline_flops": report.baseline_flops,
        "baseline_accuracy": report.baseline_accuracy,
        "baseline_sensitivity": report.baseline_sensitivity,
        "bottleneck_size": report.bottleneck_size,
        "num_beats": report.num_beats,
        "points": [{
            "threshold": p.threshold,
            "system_accuracy": p.system_accuracy,
            "system_sensitivity": p.system_sensitivity,
            "dtc": p.dtc,
            "exit_rate": list(p.exit_rate),
            "total_flops": p.total_flops,
            "efficiency_rate": p.efficiency_rate,
            "bytes_per_beat": p.bytes_per_beat,
            "transmission_savings": p.transmission_savings,
            "exit_counts": list(p.exit_counts),
            "mean_latency_s": p.mean_latency_s,
        } for p in report.points],
    }
    json_path = write_json_report(stem.with_suffix(".json"), payload, metadata)
    logger.info(f"Sweep for placement {report.placement.label} written to {csv_path} and {json_path}")
    return csv_path, json_path


def read_sweep(path: Union[str, Path]) -> SweepReport:
    document = read_json_report(path)
    try:
        points = tuple(SweepPoint(
            threshold=p["threshold"],
            system_accuracy=p["system_accuracy"],
            system_sensitivity=p["system_sensitivity"],
            dtc=p["dtc"],
            exit_rate=tuple(p["exit_rate"]),
            total_flops=p["total_flops"],
            efficiency_rate=p["efficiency_rate"],
            bytes_per_beat=p["bytes_per_beat"],
            transmission_savings=p["transmission_savings"],
            exit_counts=tuple(p.get("exit_counts", ())),
            mean_latency_s=p.get("mean_latency_s"),
        ) for p in document["points"])
        return SweepReport(
            placement=ExitPlacement(tuple(document["placement"])),
            points=points,
            baseline_flops=int(document["baseline_flops"]),
            baseline_accuracy=document["baseline_accuracy"],
            baseline_sensitivity=document["baseline_sensitivity"],
            bottleneck_size=int(document["bottleneck_size"]),
            num_beats=int(document["num_beats"]),
        )
    except (KeyError, TypeError) as e:
        raise FormatError(f"Sweep report {path} is missing fields: {e}") from e
