"""Consistency checks run by ``edgecascade verify``."""
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np
import pandas as pd

from beatset.records import BeatRecord
from cascade.gating import Cascade, decisions_from_trace, gate, trace_frame
from common.artifacts import FLOAT_FORMAT
from common.errors import VerificationFailed
from common.logger import logger
from evaluator.metrics import SweepPoint, recount
from evaluator.sweep import collect_outcomes, sweep
from exit_graph.branches import ExitParams
from exit_graph.partition import (
    ForwardMode, PartitionPlan, run_plan, split_params, stage_file_name, stage_segments
)
from nn_core.engine import forward
from nn_core.model_file import decode_segments, encode_segments

RATE_TOLERANCE = 1e-9
RECOUNT_TOLERANCE = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _close(a: Optional[float], b: Optional[float]) -> bool:
    if a is None or b is None:
        return a is b
    return math.isclose(a, b, rel_tol=RECOUNT_TOLERANCE, abs_tol=1e-12)


def _same_point(a: SweepPoint, b: SweepPoint) -> bool:
    fields = ("system_accuracy", "system_sensitivity", "dtc", "total_flops", "efficiency_rate",
              "bytes_per_beat", "transmission_savings")
    return (all(_close(getattr(a, f), getattr(b, f)) for f in fields)
            and len(a.exit_rate) == len(b.exit_rate)
            and all(_close(x, y) for x, y in zip(a.exit_rate, b.exit_rate))
            and tuple(a.exit_counts) == tuple(b.exit_counts))


def check_serialization(plan: PartitionPlan, params: ExitParams, plan_dir: Optional[Path] = None) -> CheckResult:
    for stage, stage_params in zip(plan.stages, split_params(plan, params)):
        data = encode_segments(stage_segments(plan, stage, stage_params))
        segments, _ = decode_segments(data)
        if encode_segments(segments) != data:
            return CheckResult("serialization_round_trip", False, f"stage {stage.index} does not re-encode identically")
        if len(data) != stage.serialized_bytes:
            return CheckResult("serialization_round_trip", False,
                               f"stage {stage.index} is {len(data)} bytes, plan says {stage.serialized_bytes}")
        if plan_dir is not None:
            with open(plan_dir / stage_file_name(stage), "rb") as f:
                if f.read() != data:
                    return CheckResult("serialization_round_trip", False,
                                       f"stage file {stage_file_name(stage)} differs from its re-encoding")
    return CheckResult("serialization_round_trip", True, f"{len(plan.stages)} stages")


def check_pass_through(plan: PartitionPlan, params: ExitParams, beats: Sequence[BeatRecord]) -> CheckResult:
    x = np.stack([b.samples for b in beats]).reshape((len(beats),) + tuple(plan.backbone.input_shape))
    monolithic = forward(plan.backbone, params.backbone, x)
    staged = run_plan(plan, params, x, ForwardMode.PASS_THROUGH)
    if monolithic.dtype != staged.dtype or monolithic.tobytes() != staged.tobytes():
        mismatched = int(np.sum(np.any(monolithic != staged, axis=1)))
        return CheckResult("pass_through_equivalence", False, f"{mismatched} of {len(beats)} beats differ")
    return CheckResult("pass_through_equivalence", True, f"{len(beats)} beats bitwise identical")


def check_sweep(plan: PartitionPlan, params: ExitParams, beats: Sequence[BeatRecord],
                thresholds: Sequence[float]) -> List[CheckResult]:
    report = sweep(plan, params, beats, thresholds)
    bad_rates = [p.threshold for p in report.points if abs(p.rate_sum - 1.0) > RATE_TOLERANCE]
    results = [CheckResult("rate_conservation", not bad_rates,
                           f"violations at {bad_rates}" if bad_rates else f"{len(report.points)} points")]

    first_rates = [p.exit_rate[0] for p in report.points]
    dtcs = [p.dtc for p in report.points]
    monotone = (all(a >= b for a, b in zip(first_rates, first_rates[1:]))
                and all(a <= b for a, b in zip(dtcs, dtcs[1:])))
    results.append(CheckResult("monotone_rates", monotone, "" if monotone else "exit rate or DtC is not monotone"))

    cascade = Cascade(plan, params)
    outcomes = collect_outcomes(cascade, beats)
    mismatches = []
    for point in report.points:
        decisions = [gate(o, (point.threshold,) * plan.placement.num_exits, beat, cascade.num_stages)
                     for o, beat in zip(outcomes, beats)]
        buffer = io.StringIO()
        trace_frame(decisions).to_csv(buffer, index=False, float_format=FLOAT_FORMAT)
        buffer.seek(0)
        frame = pd.read_csv(buffer, keep_default_na=False, na_values=[""])
        again = recount(decisions_from_trace(frame), plan.baseline_flops, cascade.num_stages, point.threshold)
        if not _same_point(point, again):
            mismatches.append(point.threshold)
    results.append(CheckResult("recount_oracle", not mismatches,
                               f"mismatch at {mismatches}" if mismatches else f"{len(report.points)} points"))
    return results


def verify_plan(plan: PartitionPlan, params: ExitParams, beats: Sequence[BeatRecord], thresholds: Sequence[float],
                plan_dir: Optional[Path] = None) -> List[CheckResult]:
    """Run every check; raises VerificationFailed naming the checks that failed."""
    checks: List[Callable[[], List[CheckResult]]] = [
        lambda: [check_serialization(plan, params, plan_dir)],
        lambda: [check_pass_through(plan, params, beats)],
        lambda: check_sweep(plan, params, beats, thresholds),
    ]
    results: List[CheckResult] = []
    for check in checks:
        for result in check():
            status = "PASS" if result.passed else "FAIL"
            logger.info(f"[{status}] {result.name}: {result.detail}")
            results.append(result)
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerificationFailed(failed)
    return results
