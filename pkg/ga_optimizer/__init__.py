# Genetic search for exit placements and thresholds

from .objective import (
    ObjectiveWeights, Chromosome, FitnessScore, MetricsTable, FitnessLandscape,
    fitness, full_universe
)
from .genetic import (
    GAConfig, GenerationLog, OptimizationResult,
    optimize, exhaustive, argmax_set, write_optimizer_report
)

__all__ = [
    "ObjectiveWeights", "Chromosome", "FitnessScore", "MetricsTable", "FitnessLandscape",
    "fitness", "full_universe",
    "GAConfig", "GenerationLog", "OptimizationResult",
    "optimize", "exhaustive", "argmax_set", "write_optimizer_report"
]
