# Edge energy and link latency models

from .power import (
    TxMode, PowerProfile, EnergyReport, DEPLOYMENT_THRESHOLDS,
    average_current, savings_report, calibrate_profile, energy_report, write_energy_report,
    read_energy_report
)
from .links import LinkProfile, beat_latency, DEFAULT_THROUGHPUT

__all__ = [
    "TxMode", "PowerProfile", "EnergyReport", "DEPLOYMENT_THRESHOLDS",
    "average_current", "savings_report", "calibrate_profile", "energy_report", "write_energy_report",
    "read_energy_report",
    "LinkProfile", "beat_latency", "DEFAULT_THROUGHPUT"
]
