"""
Unit tests for the placement/threshold objective and the genetic search.
"""
import json
from types import SimpleNamespace

import numpy as np
import pytest

from common.errors import InvalidInput
from exit_graph import ExitPlacement
from ga_optimizer import (
    Chromosome, FitnessLandscape, GAConfig, MetricsTable, ObjectiveWeights, argmax_set, exhaustive, fitness,
    full_universe, optimize, write_optimizer_report
)
from ga_optimizer.genetic import _selection_probs


def make_table(accuracy, sensitivity=None, flops=None, thresholds=None):
    """Helper to build a metrics table from an accuracy grid (placements x thresholds)."""
    accuracy = np.asarray(accuracy, dtype=np.float64)
    rows, cols = accuracy.shape
    placements = tuple(ExitPlacement((p + 1,)) for p in range(rows))
    thresholds = tuple(thresholds or np.linspace(0.0, 1.0, cols))
    return MetricsTable(
        placements, thresholds, accuracy,
        accuracy if sensitivity is None else np.asarray(sensitivity, dtype=np.float64),
        np.full(accuracy.shape, 100.0) if flops is None else np.asarray(flops, dtype=np.float64),
    )


def make_separable_table():
    """Three placements by six thresholds whose score rises along both genes; optimum at (2, 5)."""
    placement_score = np.array([0.0, 0.15, 0.3])
    threshold_score = np.array([0.0, 0.04, 0.08, 0.12, 0.16, 0.2])
    return make_table(0.5 + placement_score[:, None] + threshold_score[None, :])


def make_smooth_table(noise=0.0):
    """Five single-exit placements by 101 thresholds with a smooth trade-off and optional accuracy jitter."""
    p = np.arange(5, dtype=np.float64)[:, None]
    t = np.linspace(0.0, 1.0, 101)[None, :]
    accuracy = 0.80 + 0.03 * p + 0.1 * t ** 4
    accuracy = accuracy + np.random.default_rng(7).uniform(-noise, noise, size=accuracy.shape)
    flops = (1.0 + p) * 1e5 + 4e5 * t ** 6
    return make_table(accuracy, sensitivity=accuracy - 0.05, flops=flops)


def make_report(placement, thresholds, accuracy=0.9):
    """Helper to fake a sweep report with constant metrics."""
    points = [SimpleNamespace(system_accuracy=accuracy, system_sensitivity=accuracy, total_flops=1000.0)
              for _ in thresholds]
    return SimpleNamespace(placement=ExitPlacement(placement), thresholds=list(thresholds), points=points)


class TestObjectiveWeights:
    @pytest.mark.parametrize("values", [(-1.0, 1.0, 1.0), (0.0, 0.0, 0.0), (float("nan"), 1.0, 1.0)])
    def test_invalid_weights(self, values):
        """Weights must be finite, non-negative and not all zero."""
        with pytest.raises(InvalidInput):
            ObjectiveWeights(*values)

    def test_scaling_preserves_ranking(self):
        """Scaling every weight by a positive factor keeps the argmax."""
        table = make_separable_table()
        universe = full_universe(table)
        weights = ObjectiveWeights(1.0, 0.5, 0.2)
        assert argmax_set(universe, table, weights) == argmax_set(universe, table, weights.scaled(7.0))


class TestFitness:
    def test_weighted_sum_of_normalized_metrics(self):
        """OF adds normalized accuracy and sensitivity and subtracts normalized FLOPs."""
        table = make_table([[0.8, 0.9], [0.7, 0.95]], sensitivity=[[0.6, 0.9], [0.5, 0.7]],
                           flops=[[300.0, 100.0], [200.0, 400.0]])
        weights = ObjectiveWeights()
        assert fitness(Chromosome(0, 1), table, weights).of_value == pytest.approx(0.8 + 1.0 - 0.0)
        score = fitness(Chromosome(1, 1), table, weights)
        assert score.accuracy_norm == 1.0
        assert score.flops_norm == 1.0

    def test_normalization_endpoints(self):
        """The candidate that is best on every metric scores exactly 2."""
        table = make_table([[0.5, 0.9]], flops=[[500.0, 100.0]])
        assert fitness(Chromosome(0, 1), table, ObjectiveWeights()).of_value == 2.0
        assert fitness(Chromosome(0, 0), table, ObjectiveWeights()).of_value == -1.0

    def test_flat_metrics_normalize_to_zero(self):
        """A metric that never varies contributes nothing."""
        score = fitness(Chromosome(0, 0), make_table([[0.9, 0.9]]), ObjectiveWeights())
        assert score.of_value == 0.0

    def test_normalization_follows_the_universe(self):
        """Min-max bounds come from the universe, not the whole table."""
        table = make_table([[0.5, 0.7, 0.9]])
        universe = [Chromosome(0, 0), Chromosome(0, 1)]
        assert fitness(Chromosome(0, 1), table, ObjectiveWeights(1.0, 0.0, 0.0), universe).of_value == 1.0
        assert fitness(Chromosome(0, 1), table, ObjectiveWeights(1.0, 0.0, 0.0)).of_value == pytest.approx(0.5)

    def test_candidate_outside_table(self):
        """Chromosomes must index into the table."""
        with pytest.raises(InvalidInput):
            fitness(Chromosome(3, 0), make_table([[0.5, 0.6]]), ObjectiveWeights())

    def test_landscape_rejects_foreign_candidates(self):
        """A landscape only scores members of its universe."""
        table = make_table([[0.5, 0.6]])
        landscape = FitnessLandscape([Chromosome(0, 0)], table, ObjectiveWeights())
        with pytest.raises(InvalidInput):
            landscape.score(Chromosome(0, 1))


class TestMetricsTable:
    def test_from_reports(self):
        """Reports become one row per placement."""
        table = MetricsTable.from_reports([make_report((1,), [0.0, 0.5]), make_report((2, 4), [0.0, 0.5], 0.8)])
        assert table.placements == (ExitPlacement((1,)), ExitPlacement((2, 4)))
        assert table.thresholds == (0.0, 0.5)
        assert table.accuracy.shape == (2, 2)
        assert table.metrics(Chromosome(1, 0)) == (0.8, 0.8, 1000.0)

    def test_threshold_grids_must_match(self):
        """Every report must use the same threshold grid."""
        with pytest.raises(InvalidInput):
            MetricsTable.from_reports([make_report((1,), [0.0, 0.5]), make_report((2,), [0.0, 0.6])])

    def test_duplicate_placements(self):
        """A placement may appear only once."""
        with pytest.raises(InvalidInput):
            MetricsTable.from_reports([make_report((1,), [0.5]), make_report((1,), [0.5])])

    def test_grid_shape_checked(self):
        """Metric grids must match placements by thresholds."""
        with pytest.raises(InvalidInput):
            MetricsTable((ExitPlacement((1,)),), (0.5,), np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((1, 1)))


class TestExhaustive:
    def test_finds_the_maximum(self):
        """The full scan returns the unique optimum."""
        table = make_separable_table()
        result = exhaustive(full_universe(table), table, ObjectiveWeights())
        assert result.best == Chromosome(2, 5)
        assert result.score.of_value == 2.0

    def test_ties_go_to_lowest_index(self):
        """Equal scores resolve to the earliest placement, then the lowest threshold."""
        table = make_table([[0.5, 0.5, 0.9], [0.9, 0.5, 0.5]])
        universe = full_universe(table)
        assert exhaustive(universe, table, ObjectiveWeights()).best == Chromosome(0, 2)
        assert argmax_set(universe, table, ObjectiveWeights()) == [Chromosome(0, 2), Chromosome(1, 0)]

    def test_flat_table(self):
        """With nothing to choose between, the first candidate wins."""
        table = make_table([[0.7, 0.7], [0.7, 0.7]])
        assert exhaustive(full_universe(table), table, ObjectiveWeights()).best == Chromosome(0, 0)


class TestGenetic:
    @pytest.mark.parametrize("kwargs", [
        {"population_size": 1}, {"generations": 0}, {"crossover_prob": 1.5}, {"mutation_prob": -0.1},
    ])
    def test_invalid_config(self, kwargs):
        """Population, generations and probabilities are validated."""
        with pytest.raises(InvalidInput):
            GAConfig(**kwargs)

    def test_log_has_one_entry_per_generation(self):
        """G generations log G + 1 entries whose best never decreases."""
        table = make_separable_table()
        result = optimize(full_universe(table), table, ObjectiveWeights(), GAConfig(generations=15, seed=2))
        assert [g.generation for g in result.log] == list(range(16))
        bests = [g.best for g in result.log]
        assert all(b >= a for a, b in zip(bests, bests[1:]))
        assert all(g.mean <= g.best + 1e-12 for g in result.log)

    def test_never_beats_exhaustive(self):
        """The GA optimum is bounded by the full scan for every seed."""
        table = make_table(np.random.default_rng(0).uniform(0.5, 1.0, size=(4, 7)),
                           sensitivity=np.random.default_rng(1).uniform(0.5, 1.0, size=(4, 7)),
                           flops=np.random.default_rng(2).uniform(100, 500, size=(4, 7)))
        universe = full_universe(table)
        best = exhaustive(universe, table, ObjectiveWeights()).score.of_value
        for seed in range(10):
            result = optimize(universe, table, ObjectiveWeights(), GAConfig(generations=10, seed=seed))
            assert result.score.of_value <= best + 1e-12

    @pytest.mark.slow
    @pytest.mark.parametrize("noise", [0.0, 0.002])
    def test_single_exit_universe_matches_exhaustive(self, noise):
        """Over 5 placements x 101 thresholds, at least 95 of 100 seeds reach the full-scan optimum."""
        table = make_smooth_table(noise)
        universe = full_universe(table)
        assert len(universe) == 505
        best = exhaustive(universe, table, ObjectiveWeights()).score.of_value
        values = [optimize(universe, table, ObjectiveWeights(), GAConfig(seed=seed)).score.of_value
                  for seed in range(100)]
        assert all(v <= best + 1e-12 for v in values)
        assert sum(abs(v - best) <= 1e-12 for v in values) >= 95

    def test_separable_optimum_for_every_seed(self):
        """A small separable landscape is solved by every seed."""
        table = make_separable_table()
        universe = full_universe(table)
        optimum = exhaustive(universe, table, ObjectiveWeights()).best
        assert all(optimize(universe, table, ObjectiveWeights(), GAConfig(seed=seed)).best == optimum
                   for seed in range(20))

    def test_dominant_candidate_without_cost_weight(self):
        """With w_com = 0, the candidate best on accuracy and sensitivity wins for any seed."""
        table = make_separable_table()
        universe = full_universe(table)
        weights = ObjectiveWeights(1.0, 1.0, 0.0)
        config = dict(population_size=10, generations=10)
        for seed in range(10):
            assert optimize(universe, table, weights, GAConfig(seed=seed, **config)).best == Chromosome(2, 5)

    def test_no_variation_keeps_the_population(self):
        """Without crossover or mutation a population of copies never changes."""
        table = make_separable_table()
        start = Chromosome(1, 2)
        config = GAConfig(crossover_prob=0.0, mutation_prob=0.0, generations=10, seed=3)
        result = optimize(full_universe(table), table, ObjectiveWeights(), config, initial_population=[start] * 20)
        assert result.best == start
        assert {g.best for g in result.log} == {result.score.of_value}

    def test_single_candidate_universe(self):
        """A universe of one chromosome returns it."""
        table = make_separable_table()
        result = optimize([Chromosome(0, 4)], table, ObjectiveWeights(), GAConfig(generations=5))
        assert result.best == Chromosome(0, 4)

    def test_rank_scaled_selection(self):
        """Parents are drawn in proportion to rank; equal fitness gives equal odds."""
        probs = _selection_probs(np.array([0.9, 0.5, 0.5, -1.0]))
        assert probs == pytest.approx([4 / 9, 2 / 9, 2 / 9, 1 / 9])

    def test_seed_reproducibility(self):
        """The same seed gives the same result and log."""
        table = make_separable_table()
        universe = full_universe(table)
        config = GAConfig(generations=8, seed=5)
        assert optimize(universe, table, ObjectiveWeights(), config) == optimize(universe, table,
                                                                                 ObjectiveWeights(), config)

    def test_restricted_universe(self):
        """Offspring never leave the universe they were bred in."""
        table = make_separable_table()
        universe = [Chromosome(p, t) for p in range(3) for t in range(3)]
        result = optimize(universe, table, ObjectiveWeights(), GAConfig(generations=20, seed=1))
        assert result.best in universe

    def test_initial_population_outside_universe(self):
        """Seeded populations must come from the universe."""
        table = make_separable_table()
        with pytest.raises(InvalidInput):
            optimize([Chromosome(0, 0)], table, ObjectiveWeights(), initial_population=[Chromosome(1, 1)])


class TestOptimizerReport:
    def test_report_contents(self, tmp_path):
        """The JSON report carries weights, config, generation log, winner and exhaustive check."""
        table = make_separable_table()
        universe = full_universe(table)
        weights = ObjectiveWeights(1.0, 1.0, 0.5)
        config = GAConfig(generations=5, seed=0)
        result = optimize(universe, table, weights, config)
        path = write_optimizer_report(tmp_path / "optimizer.json", result, weights, config, table,
                                      exhaustive(universe, table, weights))
        with open(path) as f:
            document = json.load(f)
        assert {"weights", "config", "universe_size", "generations", "winner", "exhaustive", "metadata"} <= set(document)
        assert document["universe_size"] == 18
        assert len(document["generations"]) == 6
        assert document["weights"]["w_com"] == 0.5
        assert document["exhaustive"]["placement"] == [3]
        assert document["winner"]["threshold"] == pytest.approx(table.thresholds[result.best.threshold_index])
