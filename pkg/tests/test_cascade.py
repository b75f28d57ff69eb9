"""
Unit tests for confidence gating and cascade execution.
"""
import numpy as np
import pytest

from beatset import AamiClass
from cascade import (
    Cascade, GateConfig, StageOutcome, classify, decisions_from_trace, exit_counts, export_trace, gate,
    trace_frame
)
from common.artifacts import read_csv_report
from common.errors import InvalidInput
from exit_graph import ForwardMode


def make_outcome(stage_index, top, top_class=0, exit_flops=100, forward_flops=150, forward_bytes=64):
    """Helper to build a stage outcome whose maximum probability is ``top``."""
    probs = np.full(5, (1.0 - top) / 4)
    probs[top_class] = top
    return StageOutcome(stage_index, probs, exit_flops, forward_flops, forward_bytes)


class TestGate:
    def test_exits_when_confidence_exceeds_threshold(self):
        """A head above its threshold stops the cascade at that stage."""
        decision = gate([make_outcome(0, 0.9, top_class=2), make_outcome(1, 0.6)], (0.8,))
        assert decision.exit_stage == 0
        assert decision.predicted_class == AamiClass.VEB
        assert decision.flops_spent == 100
        assert decision.bytes_transmitted == 0

    def test_equal_confidence_forwards(self):
        """The comparison is strict: pred == threshold does not exit."""
        decision = gate([make_outcome(0, 0.8), make_outcome(1, 0.5)], (0.8,))
        assert decision.exit_stage == 1

    def test_final_stage_always_emits(self):
        """The last stage exits whatever its confidence."""
        decision = gate([make_outcome(0, 0.3), make_outcome(1, 0.25, exit_flops=400)], (0.99,))
        assert decision.exit_stage == 1
        assert decision.flops_spent == 150 + 400
        assert decision.bytes_transmitted == 64

    def test_dual_exit_costs_accumulate(self):
        """Forwarded stages charge their forward FLOPs and payload bytes."""
        outcomes = [make_outcome(0, 0.5, forward_flops=10, forward_bytes=64),
                    make_outcome(1, 0.5, forward_flops=20, forward_bytes=64),
                    make_outcome(2, 0.5, exit_flops=30)]
        decision = gate(outcomes, (0.9, 0.9))
        assert decision.exit_stage == 2
        assert decision.flops_spent == 10 + 20 + 30
        assert decision.bytes_transmitted == 128

    def test_per_exit_thresholds(self):
        """Each exit uses its own threshold."""
        outcomes = [make_outcome(0, 0.7), make_outcome(1, 0.7), make_outcome(2, 0.7)]
        assert gate(outcomes, (0.9, 0.6)).exit_stage == 1

    def test_later_stages_are_not_evaluated(self):
        """Outcomes after the exit stage are never pulled from the iterator."""
        def outcomes():
            yield make_outcome(0, 0.95)
            raise AssertionError("stage 1 should not run")

        assert gate(outcomes(), (0.5,)).exit_stage == 0

    def test_short_outcome_list(self):
        """Running out of stages before the final one is an error."""
        with pytest.raises(InvalidInput):
            gate([make_outcome(0, 0.1)], (0.5,), num_stages=2)


class TestGateConfig:
    @pytest.mark.parametrize("threshold", [-0.01, 1.01, float("nan")])
    def test_thresholds_must_be_probabilities(self, threshold):
        """Thresholds outside [0, 1] are rejected."""
        with pytest.raises(InvalidInput):
            GateConfig((threshold,))

    def test_threshold_count_must_match_plan(self, dual_plan):
        """A dual-exit plan needs two thresholds."""
        with pytest.raises(InvalidInput):
            GateConfig((0.5,)).check_for(dual_plan)
        GateConfig.uniform(0.5, 2).check_for(dual_plan)

    def test_mode_parsed_from_text(self):
        """Forward modes may be given as strings."""
        assert GateConfig((0.5,), "pass-through").mode == ForwardMode.PASS_THROUGH


class TestCascade:
    def test_zero_threshold_exits_everything_early(self, single_plan, single_exit, beats):
        """Any softmax maximum exceeds 0, so every beat leaves at the edge."""
        _, params = single_exit
        result = Cascade(single_plan, params).classify_batch(beats, GateConfig.uniform(0.0, 1))
        assert result.exit_counts == (len(beats), 0)
        edge = single_plan.stages[0]
        assert all(d.flops_spent == edge.exit_flops for d in result.decisions)
        assert all(d.bytes_transmitted == 0 for d in result.decisions)

    def test_unit_threshold_forwards_everything(self, single_plan, single_exit, beats):
        """No probability exceeds 1, so every beat reaches the cloud."""
        _, params = single_exit
        result = Cascade(single_plan, params).classify_batch(beats, GateConfig.uniform(1.0, 1))
        assert result.exit_counts == (0, len(beats))
        edge, cloud = single_plan.stages
        assert all(d.flops_spent == edge.forward_flops + cloud.exit_flops for d in result.decisions)
        assert all(d.bytes_transmitted == 64 for d in result.decisions)

    def test_pass_through_charges_raw_features(self, single_plan, single_exit, beats):
        """Pass-through mode sends raw feature maps and skips the codec FLOPs."""
        _, params = single_exit
        config = GateConfig.uniform(1.0, 1, ForwardMode.PASS_THROUGH)
        decision = Cascade(single_plan, params).classify(beats[0], config)
        edge, cloud = single_plan.stages
        assert decision.bytes_transmitted == 16 * 65 * 4
        assert decision.flops_spent == edge.exit_flops + cloud.backbone_flops

    def test_stage_outcomes_are_lazy(self, dual_plan, dual_exit, beats):
        """Consuming one outcome runs only the first stage."""
        _, params = dual_exit
        outcomes = Cascade(dual_plan, params).stage_outcomes(beats[0])
        first = next(outcomes)
        assert first.stage_index == 0
        assert first.probs.shape == (5,)
        assert [o.stage_index for o in outcomes] == [1, 2]

    def test_decision_carries_ground_truth(self, single_plan, single_exit, beats):
        """Decisions record the beat id and its true class."""
        _, params = single_exit
        decision = classify(single_plan, params, GateConfig.uniform(0.5, 1), beats[3])
        assert decision.beat_id == beats[3].beat_id
        assert decision.true_class == beats[3].label
        assert 0.0 < decision.pred <= 1.0

    def test_workers_do_not_change_results(self, dual_plan, dual_exit, beats):
        """Threaded batches give the same decisions in the same order."""
        _, params = dual_exit
        cascade = Cascade(dual_plan, params)
        config = GateConfig.uniform(0.3, 2)
        assert (cascade.classify_batch(beats, config, workers=4).decisions
                == cascade.classify_batch(beats, config).decisions)

    def test_exit_counts_sum_to_beats(self, dual_plan, dual_exit, beats):
        """Every beat exits exactly once."""
        _, params = dual_exit
        result = Cascade(dual_plan, params).classify_batch(beats, GateConfig.uniform(0.3, 2))
        assert sum(result.exit_counts) == result.num_beats == len(beats)
        assert result.exit_counts == exit_counts(result.decisions, 3)


class TestTrace:
    def test_trace_round_trip(self, tmp_path, dual_plan, dual_exit, beats):
        """Decisions exported to CSV read back unchanged apart from float rounding."""
        _, params = dual_exit
        decisions = Cascade(dual_plan, params).classify_batch(beats, GateConfig.uniform(0.3, 2)).decisions
        path = export_trace(tmp_path / "trace.csv", decisions, {"threshold": 0.3})
        metadata, frame = read_csv_report(path)
        assert metadata["threshold"] == "0.3"
        restored = decisions_from_trace(frame)
        assert [d.beat_id for d in restored] == [d.beat_id for d in decisions]
        for a, b in zip(restored, decisions):
            assert (a.exit_stage, a.predicted_class, a.true_class) == (b.exit_stage, b.predicted_class, b.true_class)
            assert (a.flops_spent, a.bytes_transmitted) == (b.flops_spent, b.bytes_transmitted)
            assert a.pred == pytest.approx(b.pred, rel=1e-8)

    def test_trace_columns(self):
        """The trace has one row per beat with class names."""
        frame = trace_frame([gate([make_outcome(0, 0.9, top_class=4)], (), num_stages=1)])
        assert list(frame.columns) == ["beat_id", "exit_stage", "pred", "predicted_class",
                                       "true_class", "flops", "bytes"]
        assert frame.loc[0, "predicted_class"] == "Q"
        assert frame.loc[0, "true_class"] == ""

    def test_missing_columns_rejected(self):
        """Traces without the decision columns cannot be rebuilt."""
        with pytest.raises(InvalidInput):
            decisions_from_trace(trace_frame([]).drop(columns=["flops"]))
