"""Duty-cycle current model of the edge device.

Over one beat period the device infers for ``t_infer`` seconds, transmits
for ``t_tx`` seconds when the beat is forwarded, and sleeps otherwise:

    I = (t_infer * i_infer + f * t_tx * i_tx + (T - t_infer - f * t_tx) * i_sleep) / T

where ``f`` is the fraction of beats forwarded past the edge exit.
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from common.artifacts import provenance, read_csv_report, write_csv_report
from common.errors import FormatError, InvalidInput
from common.logger import logger

DEPLOYMENT_THRESHOLDS = (0.5, 0.6, 0.7, 0.8, 0.9)


class TxMode(Enum):
    CONNECTED = "connected"
    BROADCAST = "broadcast"

    @classmethod
    def parse(cls, value: Union[str, "TxMode"]) -> "TxMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidInput(f"Unknown transmission mode '{value}'; expected connected or broadcast")


@dataclass(frozen=True)
class PowerProfile:
    """Currents in mA, times in seconds."""
    i_sleep: float = 0.58
    i_infer: float = 0.74
    i_tx_connected: float = 3.66
    i_tx_broadcast: float = 3.20
    t_infer: float = 0.5
    t_tx: float = 0.45
    beat_period: float = 1.0

    def __post_init__(self):
        for name in ("i_sleep", "i_infer", "i_tx_connected", "i_tx_broadcast", "beat_period"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0:
                raise InvalidInput(f"{name} must be positive, got {value}")
        if self.i_sleep > self.i_infer:
            raise InvalidInput(f"i_sleep ({self.i_sleep}) must not exceed i_infer ({self.i_infer})")
        if self.t_infer < 0 or self.t_tx < 0:
            raise InvalidInput("t_infer and t_tx must be non-negative")
        if self.t_infer + self.t_tx > self.beat_period + 1e-12:
            raise InvalidInput(
                f"t_infer + t_tx ({self.t_infer + self.t_tx}) exceeds the beat period ({self.beat_period})"
            )

    def i_tx(self, mode: Union[str, TxMode]) -> float:
        return self.i_tx_connected if TxMode.parse(mode) == TxMode.CONNECTED else self.i_tx_broadcast


def average_current(profile: PowerProfile, forward_fraction: float, tx_mode: Union[str, TxMode]) -> float:
    if not 0.0 <= forward_fraction <= 1.0:
        raise InvalidInput(f"forward_fraction must lie in [0, 1], got {forward_fraction}")
    t_send = forward_fraction * profile.t_tx
    sleep = profile.beat_period - profile.t_infer - t_send
    return (profile.t_infer * profile.i_infer + t_send * profile.i_tx(tx_mode)
            + sleep * profile.i_sleep) / profile.beat_period


@dataclass(frozen=True)
class EnergyReport:
    thresholds: Tuple[float, ...]
    ours: Dict[TxMode, Tuple[float, ...]]
    continuous: Dict[TxMode, float]
    inference_only: float
    sleep: float
    savings: Dict[TxMode, float] = field(default_factory=dict)
    overall_savings: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, threshold in enumerate(self.thresholds):
            for mode in (TxMode.CONNECTED, TxMode.BROADCAST):
                if mode not in self.ours:
                    continue
                ours, continuous = self.ours[mode][i], self.continuous[mode]
                rows.append({
                    "threshold": threshold,
                    "mode": mode.value,
                    "ours_mA": ours,
                    "continuous_mA": continuous,
                    "savings_pct": 100.0 * (1.0 - ours / continuous),
                })
        return pd.DataFrame(rows, columns=["threshold", "mode", "ours_mA", "continuous_mA", "savings_pct"])


def savings_report(thresholds: Sequence[float], ours: Dict[Union[str, TxMode], Sequence[float]],
                   continuous: Dict[Union[str, TxMode], float], inference_only: float = 0.74,
                   sleep: float = 0.58) -> EnergyReport:
    """Savings of the cascade against continuous transmission, per mode and pooled.

    Per mode: 1 - mean(ours) / continuous.  Pooled: 1 - sum of the mode
    means / sum of the continuous currents.
    """
    ours = {TxMode.parse(m): tuple(float(v) for v in values) for m, values in ours.items()}
    continuous = {TxMode.parse(m): float(v) for m, v in continuous.items()}
    if not ours or set(ours) != set(continuous):
        raise InvalidInput("Every mode needs both modeled currents and a continuous-transmission current")
    for mode, values in ours.items():
        if len(values) != len(thresholds):
            raise InvalidInput(f"{mode.value}: {len(values)} currents for {len(thresholds)} thresholds")
        if continuous[mode] <= 0:
            raise InvalidInput(f"{mode.value}: continuous current must be positive")

    means = {mode: float(np.mean(values)) for mode, values in ours.items()}
    savings = {mode: 1.0 - means[mode] / continuous[mode] for mode in ours}
    overall = 1.0 - sum(means.values()) / sum(continuous[mode] for mode in ours)
    for mode in sorted(savings, key=lambda m: m.value):
        logger.info(f"{mode.value}: mean {means[mode]:.4f} mA vs {continuous[mode]:.2f} mA, "
                    f"savings {100 * savings[mode]:.1f}%")
    logger.info(f"Pooled savings {100 * overall:.1f}%")
    return EnergyReport(tuple(float(t) for t in thresholds), ours, continuous,
                        float(inference_only), float(sleep), savings, overall)


def calibrate_profile(profile: PowerProfile, forward_fractions: Sequence[float],
                      measured_currents: Sequence[float], tx_mode: Union[str, TxMode]) -> PowerProfile:
    """Fit ``t_tx`` to measured currents by least squares.

    The model is affine in ``t_tx``, so the fit is closed-form; the result is
    clipped to ``[0, beat_period - t_infer]``.
    """
    f = np.asarray(forward_fractions, dtype=np.float64)
    y = np.asarray(measured_currents, dtype=np.float64)
    if f.shape != y.shape or f.size == 0:
        raise InvalidInput(f"{f.size} forward fractions for {y.size} measured currents")
    if np.any(f < 0) or np.any(f > 1):
        raise InvalidInput("Forward fractions must lie in [0, 1]")
    base = (profile.t_infer * profile.i_infer
            + (profile.beat_period - profile.t_infer) * profile.i_sleep) / profile.beat_period
    slope = f * (profile.i_tx(tx_mode) - profile.i_sleep) / profile.beat_period
    denom = float(np.dot(slope, slope))
    if denom == 0.0:
        raise InvalidInput("All forward fractions are zero; t_tx cannot be fitted")
    t_tx = float(np.dot(slope, y - base)) / denom
    t_tx = min(max(t_tx, 0.0), profile.beat_period - profile.t_infer)
    logger.info(f"Calibrated t_tx = {t_tx:.6f} s from {f.size} points ({TxMode.parse(tx_mode).value})")
    return replace(profile, t_tx=t_tx)


def energy_report(profile: PowerProfile, report, thresholds: Sequence[float] = DEPLOYMENT_THRESHOLDS) -> EnergyReport:
    """Model the deployed currents from a sweep's exit rate at the edge exit."""
    ours: Dict[TxMode, list] = {TxMode.CONNECTED: [], TxMode.BROADCAST: []}
    for t in thresholds:
        forward_fraction = min(1.0, max(0.0, 1.0 - report.point_at(t).exit_rate[0]))
        for mode in ours:
            ours[mode].append(average_current(profile, forward_fraction, mode))
    continuous = {mode: profile.i_tx(mode) for mode in ours}
    base = average_current(profile, 0.0, TxMode.BROADCAST)
    logger.debug(f"Edge current without forwarding: {base:.4f} mA")
    return savings_report(thresholds, ours, continuous, profile.i_infer, profile.i_sleep)


def write_energy_report(path: Union[str, Path], report: EnergyReport,
                        metadata: Optional[Dict[str, Any]] = None) -> Path:
    metadata = dict(metadata if metadata is not None else provenance())
    for mode, value in sorted(report.savings.items(), key=lambda item: item[0].value):
        metadata[f"savings_{mode.value}_pct"] = f"{100 * value:.9g}"
    metadata["savings_pooled_pct"] = f"{100 * report.overall_savings:.9g}"
    metadata["inference_only_mA"] = f"{report.inference_only:.9g}"
    metadata["sleep_mA"] = f"{report.sleep:.9g}"
    path = write_csv_report(path, report.to_frame(), metadata)
    logger.info(f"Energy report written to {path}")
    return path


def read_energy_report(path: Union[str, Path]) -> EnergyReport:
    metadata, frame = read_csv_report(path)
    try:
        thresholds = tuple(sorted({float(t) for t in frame["threshold"]}))
        ours, continuous = {}, {}
        for mode in (TxMode.CONNECTED, TxMode.BROADCAST):
            rows = frame[frame["mode"] == mode.value].sort_values("threshold")
            if rows.empty:
                continue
            ours[mode] = tuple(float(v) for v in rows["ours_mA"])
            continuous[mode] = float(rows["continuous_mA"].iloc[0])
        return savings_report(thresholds, ours, continuous,
                              float(metadata.get("inference_only_mA", 0.74)), float(metadata.get("sleep_mA", 0.58)))
    except KeyError as e:
        raise FormatError(f"Energy report {path} is missing column {e}") from e
