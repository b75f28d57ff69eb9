# Threshold sweeps and system metrics

from .metrics import SweepPoint, sensitivity, transmission_savings, recount, RAW_BEAT_BYTES
from .sweep import SweepReport, sweep, threshold_grid, collect_outcomes, write_sweep, read_sweep

__all__ = [
    "SweepPoint", "sensitivity", "transmission_savings", "recount", "RAW_BEAT_BYTES",
    "SweepReport", "sweep", "threshold_grid", "collect_outcomes", "write_sweep", "read_sweep"
]
