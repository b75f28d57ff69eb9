# Confidence-gated multistage inference

from .gating import (
    GateConfig, StageOutcome, ExitDecision, BatchResult, Cascade,
    gate, classify, classify_batch, exit_counts,
    trace_frame, export_trace, decisions_from_trace, TRACE_COLUMNS
)

__all__ = [
    "GateConfig", "StageOutcome", "ExitDecision", "BatchResult", "Cascade",
    "gate", "classify", "classify_batch", "exit_counts",
    "trace_frame", "export_trace", "decisions_from_trace", "TRACE_COLUMNS"
]
