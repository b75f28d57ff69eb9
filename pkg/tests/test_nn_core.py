"""
Unit tests for the 1-D network engine: shapes, forward pass, gradients,
FLOP counts and the .dcn container.
"""
import numpy as np
import pytest

from common.errors import FormatError, InvalidInput, ShapeError
from nn_core import (
    DEFAULT_INPUT_SHAPE, LayerKind, LayerSpec, ModelSpec, Segment, SegmentKind, backward,
    container_size, decode_segments, default_model, deserialize, encode_segments, flops_of_layer,
    forward, init_params, model_flops, serialize
)

GRAD_TOLERANCE = 1e-4
FD_STEP = 1e-6


def make_micro_model(seed):
    """Helper to build a small conv net whose size varies with the seed."""
    rng = np.random.default_rng(seed)
    channels = int(rng.integers(1, 3))
    filters = int(rng.integers(2, 4))
    length = int(rng.integers(8, 13))
    conv = LayerSpec.conv1d(channels, filters, 3, 1, 1)
    pool = LayerSpec.maxpool1d(2)
    pooled = length // 2
    layers = (conv, LayerSpec.relu(), pool, LayerSpec.flatten(),
              LayerSpec.dense(filters * pooled, 4), LayerSpec.relu(),
              LayerSpec.dense(4, 3), LayerSpec.softmax())
    return ModelSpec(layers, (channels, length), 3)


def mean_cross_entropy(model, params, x, targets):
    probs = forward(model, params, x, dtype=np.float64)
    return float(-np.log(probs[np.arange(len(targets)), targets]).mean())


class TestModelSpec:
    def test_default_model_shapes(self):
        """Six conv blocks halve 260 samples down to 4 before the dense head."""
        model = default_model()
        assert model.input_shape == DEFAULT_INPUT_SHAPE
        assert model.num_conv_layers == 6
        assert model.output_shape == (5,)
        assert model.shapes[model.layers.index(LayerSpec.flatten()) + 1] == (256,)

    def test_boundary_shape_after_second_block(self):
        """Boundary 2 sits after two pooled blocks: 16 channels of 65 samples."""
        assert default_model().boundary_shape(2) == (16, 65)

    @pytest.mark.parametrize("boundary", [0, 6])
    def test_boundary_outside_model(self, boundary):
        """Boundaries must leave at least one conv block on each side."""
        with pytest.raises(InvalidInput):
            default_model().boundary_index(boundary)

    def test_dense_size_mismatch(self):
        """A dense layer that does not match its input is a ShapeError."""
        with pytest.raises(ShapeError):
            ModelSpec((LayerSpec.flatten(), LayerSpec.dense(7, 5), LayerSpec.softmax()), (1, 8), 5)

    def test_softmax_width_must_match_classes(self):
        """The final softmax width must equal num_classes."""
        with pytest.raises(ShapeError):
            ModelSpec((LayerSpec.flatten(), LayerSpec.dense(8, 4), LayerSpec.softmax()), (1, 8), 5)

    def test_invalid_conv_parameters(self):
        """Conv layers need positive channels, kernel and stride."""
        with pytest.raises(InvalidInput):
            LayerSpec.conv1d(1, 0, 3)


class TestForward:
    def test_single_beat_probabilities(self, backbone):
        """A (1, 260) input yields five float32 probabilities summing to one."""
        model, params = backbone
        x = np.random.default_rng(0).normal(size=(1, 260)).astype(np.float32)
        probs = forward(model, params, x)
        assert probs.shape == (5,)
        assert probs.dtype == np.float32
        assert abs(float(probs.sum()) - 1.0) < 1e-5

    def test_batch_matches_single(self, backbone):
        """Batched rows equal the per-beat outputs."""
        model, params = backbone
        x = np.random.default_rng(1).normal(size=(3, 1, 260)).astype(np.float32)
        batch = forward(model, params, x)
        assert batch.shape == (3, 5)
        for i in range(3):
            assert np.allclose(batch[i], forward(model, params, x[i]), atol=1e-6)

    def test_upto_layer_returns_intermediate(self, backbone):
        """upto_layer stops after the given layer."""
        model, params = backbone
        x = np.zeros((1, 260), dtype=np.float32)
        out = forward(model, params, x, upto_layer=2)
        assert out.shape == (8, 130)

    def test_return_activations(self, backbone):
        """Every layer's activation is returned in order."""
        model, params = backbone
        out, activations = forward(model, params, np.zeros((1, 260)), return_activations=True)
        assert len(activations) == len(model.layers)
        assert np.array_equal(activations[-1], out)

    def test_wrong_input_shape(self, backbone):
        """Inputs that match neither (C, L) nor (N, C, L) are rejected."""
        model, params = backbone
        with pytest.raises(ShapeError):
            forward(model, params, np.zeros((2, 100)))

    def test_deterministic(self, backbone):
        """Repeated forward passes are bitwise identical."""
        model, params = backbone
        x = np.random.default_rng(2).normal(size=(4, 1, 260)).astype(np.float32)
        assert forward(model, params, x).tobytes() == forward(model, params, x).tobytes()


class TestInitParams:
    def test_seeded_initialization(self):
        """Equal seeds give equal parameters; different seeds differ."""
        model = default_model()
        assert init_params(model, seed=4).to_bytes() == init_params(model, seed=4).to_bytes()
        assert init_params(model, seed=4).to_bytes() != init_params(model, seed=5).to_bytes()

    def test_only_parameterized_layers(self):
        """Only conv and dense layers own parameters; biases start at zero."""
        model = default_model()
        params = init_params(model)
        kinds = {model.layers[i].kind for i in params}
        assert kinds == {LayerKind.CONV1D, LayerKind.DENSE}
        assert all(not np.any(params[i][1]) for i in params)
        params.validate(model)


class TestGradients:
    @pytest.mark.parametrize("seed", range(20))
    def test_gradients_match_finite_differences(self, seed):
        """Every parameter gradient matches central differences in float64."""
        model = make_micro_model(seed)
        params = init_params(model, seed=seed, dtype=np.float64)
        rng = np.random.default_rng(100 + seed)
        x = rng.normal(size=(3,) + model.input_shape)
        targets = rng.integers(0, 3, size=3)
        grads = backward(model, params, x, targets, dtype=np.float64)

        for i in params:
            for array, grad in zip(params[i], grads[i]):
                for idx in np.ndindex(array.shape):
                    original = array[idx]
                    array[idx] = original + FD_STEP
                    plus = mean_cross_entropy(model, params, x, targets)
                    array[idx] = original - FD_STEP
                    minus = mean_cross_entropy(model, params, x, targets)
                    array[idx] = original
                    numeric = (plus - minus) / (2 * FD_STEP)
                    analytic = grad[idx]
                    assert abs(numeric - analytic) <= GRAD_TOLERANCE * max(1.0, abs(numeric) + abs(analytic))

    def test_return_loss(self):
        """The reported loss is the mean cross-entropy."""
        model = make_micro_model(0)
        params = init_params(model, seed=0, dtype=np.float64)
        x = np.random.default_rng(0).normal(size=(2,) + model.input_shape)
        targets = np.array([0, 2])
        _, loss = backward(model, params, x, targets, dtype=np.float64, return_loss=True)
        assert loss == pytest.approx(mean_cross_entropy(model, params, x, targets), rel=1e-12)

    def test_targets_out_of_range(self):
        """Targets must be class indices of the model."""
        model = make_micro_model(0)
        params = init_params(model, dtype=np.float64)
        with pytest.raises(InvalidInput):
            backward(model, params, np.zeros((1,) + model.input_shape), [3])

    def test_requires_softmax(self):
        """Models that do not end in softmax cannot be trained."""
        model = ModelSpec((LayerSpec.flatten(), LayerSpec.dense(8, 2)), (1, 8), None)
        with pytest.raises(InvalidInput):
            backward(model, init_params(model), np.zeros((1, 1, 8)), [0])


class TestFlops:
    def test_conv_flops(self):
        """A conv layer costs 2 * C_out * L_out * C_in * K."""
        layer = LayerSpec.conv1d(1, 8, 5, 1, 2)
        assert flops_of_layer(layer, (1, 260)) == 2 * 8 * 260 * 1 * 5

    def test_dense_and_elementwise_flops(self):
        """Dense costs 2 * in * out; ReLU and pooling cost one per output; flatten is free."""
        assert flops_of_layer(LayerSpec.dense(256, 32), (256,)) == 2 * 256 * 32
        assert flops_of_layer(LayerSpec.relu(), (8, 260)) == 8 * 260
        assert flops_of_layer(LayerSpec.maxpool1d(2), (8, 260)) == 8 * 130
        assert flops_of_layer(LayerSpec.flatten(), (64, 4)) == 0

    def test_model_total_is_sum_of_layers(self):
        """model_flops returns per-layer counts and their sum."""
        per_layer, total = model_flops(default_model())
        assert len(per_layer) == len(default_model().layers)
        assert total == sum(per_layer)
        assert per_layer[0] == 20800


class TestModelFile:
    def test_round_trip_is_bitwise(self, backbone):
        """Serialized models decode and re-encode to the same bytes."""
        model, params = backbone
        data = serialize(model, params)
        loaded_model, loaded_params = deserialize(data)
        assert loaded_model == model
        assert serialize(loaded_model, loaded_params) == data

    def test_size_prediction(self, backbone):
        """container_size predicts the encoded length exactly."""
        model, params = backbone
        assert len(serialize(model, params)) == container_size([model])

    def test_metadata_trailer(self, backbone):
        """Metadata is appended after the segments and read back."""
        model, params = backbone
        segments, metadata = decode_segments(serialize(model, params, {"seed": 0, "tool": "edgecascade"}))
        assert metadata == {"seed": 0, "tool": "edgecascade"}
        assert segments[0].kind == SegmentKind.BACKBONE

    def test_bad_magic(self, backbone):
        """Files must start with DCN1."""
        model, params = backbone
        data = b"XXXX" + serialize(model, params)[4:]
        with pytest.raises(FormatError):
            deserialize(data)

    def test_truncated_payload(self, backbone):
        """A truncated weight payload reports the failing offset."""
        model, params = backbone
        data = serialize(model, params)
        with pytest.raises(FormatError) as excinfo:
            deserialize(data[:-100])
        assert excinfo.value.offset is not None

    def test_multi_segment_files_need_decode_segments(self, backbone):
        """deserialize refuses exit-augmented containers."""
        model, params = backbone
        segment = Segment(SegmentKind.BACKBONE, 0, model, params)
        data = encode_segments([segment, segment])
        with pytest.raises(FormatError):
            deserialize(data)
        assert len(decode_segments(data)[0]) == 2

    def test_empty_container_rejected(self):
        """Encoding no segments is an error."""
        with pytest.raises(InvalidInput):
            encode_segments([])
