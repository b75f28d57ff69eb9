"""
Unit tests for threshold sweeps and the system metrics they report.
"""
import pytest

from beatset import AamiClass
from cascade import ExitDecision
from common.artifacts import read_csv_report
from common.errors import FormatError, InvalidInput
from deploy_sim import LinkProfile, beat_latency
from evaluator import (
    RAW_BEAT_BYTES, SweepPoint, read_sweep, recount, sensitivity, sweep, threshold_grid, transmission_savings,
    write_sweep
)

SWEEP_THRESHOLDS = [0.0, 0.3, 0.5, 0.8, 0.95, 1.0]


def make_decision(exit_stage, predicted, truth, flops, bytes_sent=0, index=0):
    """Helper to create a decision with explicit costs."""
    return ExitDecision(f"rec:{index}", exit_stage, 0.9, AamiClass(predicted), flops, bytes_sent, AamiClass(truth))


def make_decisions():
    """Four beats: two leave at the edge, two reach the cloud; half are correct."""
    return [
        make_decision(0, AamiClass.N, AamiClass.N, 100, 0, 0),
        make_decision(0, AamiClass.SVEB, AamiClass.N, 100, 0, 1),
        make_decision(1, AamiClass.VEB, AamiClass.VEB, 300, 64, 2),
        make_decision(1, AamiClass.VEB, AamiClass.F, 300, 64, 3),
    ]


class TestThresholdGrid:
    def test_default_grid(self):
        """The default grid runs from 0 to 1 in steps of 0.01."""
        grid = threshold_grid()
        assert len(grid) == 101
        assert grid[0] == 0.0 and grid[-1] == 1.0
        assert grid[80] == 0.8


class TestRecount:
    def test_handcrafted_decisions(self):
        """Accuracy, rates, FLOPs and bytes follow directly from the decisions."""
        point = recount(make_decisions(), baseline_flops=400, num_stages=2, threshold=0.5)
        assert point.threshold == 0.5
        assert point.system_accuracy == 0.5
        assert point.system_sensitivity == pytest.approx(0.5)
        assert point.exit_rate == (0.5,)
        assert point.dtc == 0.5
        assert point.total_flops == 200.0
        assert point.efficiency_rate == 0.5
        assert point.bytes_per_beat == 32.0
        assert point.transmission_savings == pytest.approx(1 - 32 / RAW_BEAT_BYTES)
        assert point.exit_counts == (2, 2)
        assert point.rate_sum == 1.0
        assert point.mean_latency_s is None

    def test_explicit_labels_override_ground_truth(self):
        """Labels passed in replace each decision's true class."""
        labels = [AamiClass.N, AamiClass.SVEB, AamiClass.VEB, AamiClass.VEB]
        point = recount(make_decisions(), 400, 2, labels=labels)
        assert point.system_accuracy == 1.0

    def test_latencies_are_averaged(self):
        """Per-beat latencies fold into their mean."""
        point = recount(make_decisions(), 400, 2, latencies=[0.1, 0.1, 0.3, 0.3])
        assert point.mean_latency_s == pytest.approx(0.2)

    def test_missing_ground_truth(self):
        """Decisions without a true class need explicit labels."""
        decision = ExitDecision("rec:0", 0, 0.9, AamiClass.N, 100, 0)
        with pytest.raises(InvalidInput):
            recount([decision], 400, 2)

    def test_empty_decisions(self):
        """An empty decision list cannot be summarized."""
        with pytest.raises(InvalidInput):
            recount([], 400, 2)


class TestSensitivity:
    def test_macro_average_over_present_classes(self):
        """Absent classes do not drag the average down."""
        predicted = [AamiClass.N, AamiClass.N, AamiClass.N, AamiClass.VEB]
        labels = [AamiClass.N, AamiClass.N, AamiClass.VEB, AamiClass.VEB]
        assert sensitivity(predicted, labels) == pytest.approx((1.0 + 0.5) / 2)

    def test_accepts_class_names(self):
        """Labels may be AAMI class names."""
        assert sensitivity(["N", "Q"], ["N", "Q"]) == 1.0

    def test_length_mismatch(self):
        """Predictions and labels must pair up."""
        with pytest.raises(InvalidInput):
            sensitivity([AamiClass.N], [AamiClass.N, AamiClass.F])


class TestTransmissionSavings:
    def test_bottleneck_payload(self):
        """A 64-byte payload saves the rest of a 1040-byte raw beat."""
        assert transmission_savings(64) == pytest.approx(1 - 64 / 1040)

    def test_nothing_sent(self):
        """Beats that never leave the edge save everything."""
        assert transmission_savings(0.0) == 1.0

    def test_positive_raw_size(self):
        """The raw beat size must be positive."""
        with pytest.raises(InvalidInput):
            transmission_savings(10, raw_beat_bytes=0)


class TestSweep:
    @pytest.fixture(scope="class")
    def dual_report(self, dual_plan, dual_exit, beats):
        _, params = dual_exit
        return sweep(dual_plan, params, beats, SWEEP_THRESHOLDS)

    def test_rates_sum_to_one(self, dual_report):
        """Exit rates plus the data-to-cloud rate account for every beat."""
        for point in dual_report.points:
            assert point.rate_sum == pytest.approx(1.0)
            assert sum(point.exit_counts) == dual_report.num_beats

    def test_endpoints(self, dual_report, dual_plan):
        """At t=0 every beat exits first; at t=1 every beat reaches the final stage."""
        first, last = dual_report.point_at(0.0), dual_report.point_at(1.0)
        assert first.exit_rate[0] == 1.0
        assert first.total_flops == dual_plan.stages[0].exit_flops
        assert first.bytes_per_beat == 0.0
        assert first.transmission_savings == 1.0
        assert last.dtc == 1.0
        assert last.bytes_per_beat == 2 * 64

    def test_monotone_in_threshold(self, dual_report):
        """Raising the threshold never lowers the cloud share, FLOPs or bytes."""
        points = dual_report.points
        for a, b in zip(points, points[1:]):
            assert b.dtc >= a.dtc
            assert b.exit_rate[0] <= a.exit_rate[0]
            assert b.total_flops >= a.total_flops
            assert b.bytes_per_beat >= a.bytes_per_beat

    def test_baseline_is_full_cascade(self, dual_report, dual_plan):
        """Baseline accuracy is the t=1 accuracy; baseline FLOPs count the backbone only."""
        assert dual_report.baseline_accuracy == dual_report.point_at(1.0).system_accuracy
        assert dual_report.baseline_flops == sum(s.backbone_flops for s in dual_plan.stages)
        assert dual_report.thresholds == SWEEP_THRESHOLDS

    def test_workers_do_not_change_points(self, dual_report, dual_plan, dual_exit, beats):
        """A threaded sweep reports the same points."""
        _, params = dual_exit
        assert sweep(dual_plan, params, beats, SWEEP_THRESHOLDS, workers=3).points == dual_report.points

    def test_unknown_threshold(self, dual_report):
        """Looking up a threshold outside the sweep is an error."""
        with pytest.raises(InvalidInput):
            dual_report.point_at(0.42)

    @pytest.mark.parametrize("thresholds", [[0.5, 0.2], [0.0, 1.5], [-0.1]])
    def test_invalid_thresholds(self, single_plan, single_exit, beats, thresholds):
        """Thresholds must be strictly increasing probabilities."""
        _, params = single_exit
        with pytest.raises(InvalidInput):
            sweep(single_plan, params, beats, thresholds)

    def test_empty_beats(self, single_plan, single_exit):
        """Sweeping no beats is an error."""
        _, params = single_exit
        with pytest.raises(InvalidInput):
            sweep(single_plan, params, [], [0.5])


class TestLatency:
    def test_edge_exit_is_compute_only(self, single_plan, single_exit, beats):
        """A beat leaving at the edge costs only the edge's exit FLOPs."""
        _, params = single_exit
        report = sweep(single_plan, params, beats, [0.0], links=LinkProfile())
        edge = single_plan.stages[0]
        assert report.points[0].mean_latency_s == pytest.approx(edge.exit_flops / 64e6)

    def test_forwarded_beat_pays_the_link(self, single_plan):
        """Forwarding adds the link delay and the payload transfer time."""
        links = LinkProfile(delay_s=(0.02,), bandwidth_bps=(1e6,))
        decision = make_decision(1, AamiClass.N, AamiClass.N, 0)
        edge, cloud = single_plan.stages
        expected = edge.forward_flops / 64e6 + 0.02 + 8 * 64 / 1e6 + cloud.exit_flops / 50e9
        assert beat_latency(decision, single_plan, links) == pytest.approx(expected)

    def test_transfer_time(self):
        """Transfer time is delay plus bits over bandwidth; later hops reuse the last entry."""
        links = LinkProfile(delay_s=(0.01,), bandwidth_bps=(8e3,))
        assert links.transfer_time(0, 100) == pytest.approx(0.11)
        assert links.transfer_time(3, 100) == pytest.approx(0.11)

    @pytest.mark.parametrize("kwargs", [{"delay_s": (-1.0,)}, {"bandwidth_bps": (0.0,)}, {"delay_s": ()}])
    def test_invalid_profiles(self, kwargs):
        """Delays must be non-negative and bandwidths positive."""
        with pytest.raises(InvalidInput):
            LinkProfile(**kwargs)


class TestSweepFiles:
    def test_write_and_read(self, tmp_path, single_plan, single_exit, beats):
        """The JSON sweep reads back the same points up to nine significant digits."""
        _, params = single_exit
        report = sweep(single_plan, params, beats, [0.0, 0.5, 1.0])
        csv_path, json_path = write_sweep(report, tmp_path / "sweep_2")
        assert csv_path.suffix == ".csv" and json_path.suffix == ".json"
        loaded = read_sweep(json_path)
        assert loaded.placement == report.placement
        assert loaded.baseline_flops == report.baseline_flops
        assert loaded.thresholds == report.thresholds
        for a, b in zip(loaded.points, report.points):
            assert a.system_accuracy == pytest.approx(b.system_accuracy, rel=1e-8)
            assert a.exit_counts == b.exit_counts

    def test_csv_columns(self, tmp_path, single_plan, single_exit, beats):
        """The CSV lists thresholds with one exit-rate column per early exit."""
        _, params = single_exit
        csv_path, _ = write_sweep(sweep(single_plan, params, beats, [0.5]), tmp_path / "sweep")
        _, frame = read_csv_report(csv_path)
        assert {"threshold", "system_accuracy", "dtc", "exit_rate_1", "efficiency_rate"} <= set(frame.columns)
        assert len(frame) == 1

    def test_incomplete_json(self, tmp_path):
        """Reports missing fields are a FormatError."""
        path = tmp_path / "broken.json"
        path.write_text('{"points": []}')
        with pytest.raises(FormatError):
            read_sweep(path)

    def test_point_fields(self):
        """SweepPoint exposes the rate sum."""
        point = SweepPoint(0.5, 0.9, 0.8, 0.25, (0.75,), 10.0, 0.5, 16.0, 0.98)
        assert point.rate_sum == 1.0
