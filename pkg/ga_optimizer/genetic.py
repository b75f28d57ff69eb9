"""Genetic search over (placement, threshold) chromosomes.

Generational replacement with fitness-proportional parent selection on
rank-scaled fitness, a single-point swap of the threshold genes and
per-offspring mutation.  Mutation redraws the placement gene or moves the
threshold gene a few grid steps.  While mutation is enabled, an offspring
that repeats a chromosome evaluated earlier is mutated again until it is
new, so every generation spends its evaluations on unseen candidates.
The best individual always survives to the next generation.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from common.artifacts import provenance, write_json_report
from common.errors import InvalidInput
from common.logger import logger
from .objective import Chromosome, FitnessLandscape, FitnessScore, MetricsTable, ObjectiveWeights

MAX_THRESHOLD_STEP = 3
LOCAL_ATTEMPTS = 4


@dataclass(frozen=True)
class GAConfig:
    population_size: int = 20
    generations: int = 50
    crossover_prob: float = 0.8
    mutation_prob: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise InvalidInput(f"population_size must be at least 2, got {self.population_size}")
        if self.generations < 1:
            raise InvalidInput(f"generations must be at least 1, got {self.generations}")
        for name in ("crossover_prob", "mutation_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInput(f"{name} must lie in [0, 1], got {value}")


@dataclass(frozen=True)
class GenerationLog:
    generation: int
    best: float
    mean: float


@dataclass(frozen=True)
class OptimizationResult:
    best: Chromosome
    score: FitnessScore
    log: Tuple[GenerationLog, ...] = field(default_factory=tuple)


def _rank(population: Sequence[Chromosome], landscape: FitnessLandscape) -> List[Tuple[Chromosome, float]]:
    scored = [(c, landscape.score(c).of_value) for c in population]
    return sorted(scored, key=lambda item: (-item[1], item[0]))


def _selection_probs(values: np.ndarray) -> np.ndarray:
    """Selection probability proportional to rank: worst gets 1, ties share a rank."""
    scaled = 1.0 + np.searchsorted(np.sort(values), values, side="left")
    return scaled / scaled.sum()


class _Archive:
    """Chromosomes evaluated so far, plus the unseen rest of the universe for uniform draws."""

    def __init__(self, universe: Iterable[Chromosome], seen: Iterable[Chromosome]):
        self.seen = set(seen)
        self.pending = [c for c in dict.fromkeys(universe) if c not in self.seen]
        self.position = {c: i for i, c in enumerate(self.pending)}

    def __contains__(self, candidate: Chromosome) -> bool:
        return candidate in self.seen

    def add(self, candidate: Chromosome):
        if candidate in self.seen:
            return
        self.seen.add(candidate)
        i = self.position.pop(candidate, None)
        if i is None:
            return
        last = self.pending.pop()
        if i < len(self.pending):
            self.pending[i] = last
            self.position[last] = i

    def draw(self, rng: np.random.Generator) -> Optional[Chromosome]:
        if not self.pending:
            return None
        return self.pending[int(rng.integers(len(self.pending)))]


def optimize(universe: Sequence[Chromosome], table: MetricsTable, weights: ObjectiveWeights,
             config: GAConfig = GAConfig(),
             initial_population: Optional[Sequence[Chromosome]] = None) -> OptimizationResult:
    landscape = FitnessLandscape(universe, table, weights)
    rng = np.random.default_rng(config.seed)
    placement_genes = sorted({c.placement_index for c in landscape.universe})
    threshold_genes = sorted({c.threshold_index for c in landscape.universe})
    threshold_position = {gene: i for i, gene in enumerate(threshold_genes)}

    if initial_population is not None:
        population = list(initial_population)
        for c in population:
            landscape.score(c)
    else:
        picks = rng.integers(len(landscape.universe), size=config.population_size)
        population = [landscape.universe[i] for i in picks]
    archive = _Archive(landscape.universe, population)

    def admit(child: Chromosome, fallback: Chromosome) -> Chromosome:
        return child if child in landscape.members else fallback

    def step(child: Chromosome) -> Chromosome:
        if rng.integers(2) == 0:
            gene = placement_genes[rng.integers(len(placement_genes))]
            mutant = Chromosome(int(gene), child.threshold_index)
        else:
            offset = int(rng.integers(1, MAX_THRESHOLD_STEP + 1)) * (1 if rng.integers(2) == 0 else -1)
            i = min(max(threshold_position[child.threshold_index] + offset, 0), len(threshold_genes) - 1)
            mutant = Chromosome(child.placement_index, int(threshold_genes[i]))
        return admit(mutant, child)

    def explore(child: Chromosome) -> Chromosome:
        for _ in range(LOCAL_ATTEMPTS):
            mutant = step(child)
            if mutant not in archive:
                return mutant
        drawn = archive.draw(rng)
        return child if drawn is None else drawn

    def mutate(child: Chromosome) -> Chromosome:
        if config.mutation_prob == 0.0:
            return child
        if rng.random() < config.mutation_prob:
            child = step(child)
        if child in archive:
            child = explore(child)
        archive.add(child)
        return child

    log: List[GenerationLog] = []
    for generation in range(config.generations):
        ranked = _rank(population, landscape)
        values = np.array([v for _, v in ranked])
        log.append(GenerationLog(generation, float(values[0]), float(values.mean())))
        logger.debug(f"Generation {generation}: best {values[0]:.6f}, mean {values.mean():.6f}, "
                     f"{len(archive.seen)} of {len(landscape.members)} candidates evaluated")

        members = [c for c, _ in ranked]
        probs = _selection_probs(values)
        offspring = [members[0]]
        while len(offspring) < config.population_size:
            i, j = rng.choice(len(members), size=2, p=probs)
            a, b = members[i], members[j]
            if rng.random() < config.crossover_prob:
                a, b = (admit(Chromosome(a.placement_index, b.threshold_index), a),
                        admit(Chromosome(b.placement_index, a.threshold_index), b))
            offspring.append(mutate(a))
            if len(offspring) < config.population_size:
                offspring.append(mutate(b))
        population = offspring

    ranked = _rank(population, landscape)
    values = np.array([v for _, v in ranked])
    log.append(GenerationLog(config.generations, float(values[0]), float(values.mean())))
    best = ranked[0][0]
    score = landscape.score(best)
    logger.info(
        f"GA best {table.describe(best)} with OF {score.of_value:.6f} after {config.generations} generations"
    )
    return OptimizationResult(best, score, tuple(log))


def exhaustive(universe: Sequence[Chromosome], table: MetricsTable, weights: ObjectiveWeights) -> OptimizationResult:
    """Full scan; ties go to the earlier placement, then the lower threshold index."""
    landscape = FitnessLandscape(universe, table, weights)
    best, best_value = None, -np.inf
    for candidate in sorted(landscape.universe):
        value = landscape.score(candidate).of_value
        if value > best_value:
            best, best_value = candidate, value
    return OptimizationResult(best, landscape.score(best))


def argmax_set(universe: Sequence[Chromosome], table: MetricsTable, weights: ObjectiveWeights,
               tolerance: float = 1e-12) -> List[Chromosome]:
    landscape = FitnessLandscape(universe, table, weights)
    values = {c: landscape.score(c).of_value for c in landscape.universe}
    top = max(values.values())
    return sorted(c for c, v in values.items() if v >= top - tolerance * max(1.0, abs(top)))


def _winner(table: MetricsTable, result: OptimizationResult) -> Dict[str, Any]:
    winner = table.describe(result.best)
    s = result.score
    winner.update({
        "of_value": s.of_value,
        "accuracy": s.accuracy,
        "sensitivity": s.sensitivity,
        "flops": s.flops,
        "normalized": {"accuracy": s.accuracy_norm, "sensitivity": s.sensitivity_norm, "flops": s.flops_norm},
    })
    return winner


def write_optimizer_report(path: Union[str, Path], result: OptimizationResult, weights: ObjectiveWeights,
                           config: GAConfig, table: MetricsTable,
                           exhaustive_result: Optional[OptimizationResult] = None,
                           metadata: Optional[Dict[str, Any]] = None) -> Path:
    payload = {
        "weights": {"w_acc": weights.w_acc, "w_sen": weights.w_sen, "w_com": weights.w_com},
        "config": {
            "population_size": config.population_size,
            "generations": config.generations,
            "crossover_prob": config.crossover_prob,
            "mutation_prob": config.mutation_prob,
            "seed": config.seed,
        },
        "universe_size": len(table.placements) * len(table.thresholds),
        "generations": [{"generation": g.generation, "best": g.best, "mean": g.mean} for g in result.log],
        "winner": _winner(table, result),
    }
    if exhaustive_result is not None:
        payload["exhaustive"] = _winner(table, exhaustive_result)
    path = write_json_report(path, payload, metadata if metadata is not None else provenance())
    logger.info(f"Optimizer report written to {path}")
    return path
