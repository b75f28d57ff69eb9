import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from common.errors import InvalidInput
from exit_graph.placements import ExitPlacement


@dataclass(frozen=True)
class ObjectiveWeights:
    w_acc: float = 1.0
    w_sen: float = 1.0
    w_com: float = 1.0

    def __post_init__(self):
        values = (self.w_acc, self.w_sen, self.w_com)
        if any(not math.isfinite(w) or w < 0 for w in values):
            raise InvalidInput(f"Objective weights must be non-negative, got {values}")
        if not any(values):
            raise InvalidInput("At least one objective weight must be positive")

    def scaled(self, factor: float) -> "ObjectiveWeights":
        return ObjectiveWeights(self.w_acc * factor, self.w_sen * factor, self.w_com * factor)


@dataclass(frozen=True, order=True)
class Chromosome:
    placement_index: int
    threshold_index: int


@dataclass(frozen=True)
class FitnessScore:
    of_value: float
    accuracy: float
    sensitivity: float
    flops: float
    accuracy_norm: float
    sensitivity_norm: float
    flops_norm: float


@dataclass(frozen=True)
class MetricsTable:
    """Accuracy, sensitivity and mean FLOPs indexed by (placement, threshold index)."""
    placements: Tuple[ExitPlacement, ...]
    thresholds: Tuple[float, ...]
    accuracy: np.ndarray
    sensitivity: np.ndarray
    flops: np.ndarray

    def __post_init__(self):
        shape = (len(self.placements), len(self.thresholds))
        for name in ("accuracy", "sensitivity", "flops"):
            values = np.asarray(getattr(self, name), dtype=np.float64)
            if values.shape != shape:
                raise InvalidInput(f"{name} grid has shape {values.shape}, expected {shape}")
            object.__setattr__(self, name, values)

    @classmethod
    def from_reports(cls, reports: Sequence) -> "MetricsTable":
        if not reports:
            raise InvalidInput("Need at least one sweep report")
        thresholds = tuple(reports[0].thresholds)
        for report in reports[1:]:
            if tuple(report.thresholds) != thresholds:
                raise InvalidInput(f"Sweep for placement {report.placement.label} uses a different threshold grid")
        placements = tuple(r.placement for r in reports)
        if len(set(placements)) != len(placements):
            raise InvalidInput("Duplicate placements among the sweep reports")
        return cls(
            placements, thresholds,
            np.array([[p.system_accuracy for p in r.points] for r in reports]),
            np.array([[p.system_sensitivity for p in r.points] for r in reports]),
            np.array([[p.total_flops for p in r.points] for r in reports]),
        )

    def contains(self, candidate: Chromosome) -> bool:
        return (0 <= candidate.placement_index < len(self.placements)
                and 0 <= candidate.threshold_index < len(self.thresholds))

    def metrics(self, candidate: Chromosome) -> Tuple[float, float, float]:
        if not self.contains(candidate):
            raise InvalidInput(f"Candidate {candidate} lies outside the metrics table")
        p, t = candidate.placement_index, candidate.threshold_index
        return float(self.accuracy[p, t]), float(self.sensitivity[p, t]), float(self.flops[p, t])

    def describe(self, candidate: Chromosome) -> Dict[str, object]:
        return {
            "placement": list(self.placements[candidate.placement_index].boundaries),
            "threshold": self.thresholds[candidate.threshold_index],
            "placement_index": candidate.placement_index,
            "threshold_index": candidate.threshold_index,
        }


def full_universe(table: MetricsTable) -> List[Chromosome]:
    return [Chromosome(p, t) for p in range(len(table.placements)) for t in range(len(table.thresholds))]


def _minmax(value: float, low: float, high: float) -> float:
    return 0.0 if high == low else (value - low) / (high - low)


class FitnessLandscape:
    """Objective values of a fixed universe, normalized over that universe."""

    def __init__(self, universe: Sequence[Chromosome], table: MetricsTable, weights: ObjectiveWeights):
        if not universe:
            raise InvalidInput("The candidate universe is empty")
        for candidate in universe:
            if not table.contains(candidate):
                raise InvalidInput(f"Candidate {candidate} lies outside the metrics table")
        self.universe = list(universe)
        self.members = set(self.universe)
        self.table = table
        self.weights = weights
        triples = np.array([table.metrics(c) for c in self.universe])
        self.low = triples.min(axis=0)
        self.high = triples.max(axis=0)
        self._cache: Dict[Chromosome, FitnessScore] = {}

    def score(self, candidate: Chromosome) -> FitnessScore:
        if candidate not in self.members:
            raise InvalidInput(f"Candidate {candidate} is not part of the universe")
        cached = self._cache.get(candidate)
        if cached is not None:
            return cached
        acc, sen, flops = self.table.metrics(candidate)
        acc_n = _minmax(acc, self.low[0], self.high[0])
        sen_n = _minmax(sen, self.low[1], self.high[1])
        flops_n = _minmax(flops, self.low[2], self.high[2])
        w = self.weights
        score = FitnessScore(w.w_acc * acc_n + w.w_sen * sen_n - w.w_com * flops_n,
                             acc, sen, flops, acc_n, sen_n, flops_n)
        self._cache[candidate] = score
        return score


def fitness(candidate: Chromosome, table: MetricsTable, weights: ObjectiveWeights,
            universe: Optional[Sequence[Chromosome]] = None) -> FitnessScore:
    """Weighted objective of one candidate, min-max normalized over ``universe`` (default: the whole table)."""
    if not table.contains(candidate):
        raise InvalidInput(f"Candidate {candidate} lies outside the metrics table")
    return FitnessLandscape(universe if universe is not None else full_universe(table), table, weights).score(candidate)
