# Minimal 1-D neural network engine

from .layers import LayerKind, LayerSpec, ModelSpec, Shape, default_model, DEFAULT_INPUT_SHAPE
from .params import ParamStore, init_params, init_layer
from .engine import forward, backward, forward_layers, backward_layers, layer_forward, layer_backward
from .flops import flops_of_layer, layers_flops, model_flops
from .model_file import (
    Segment, SegmentKind, serialize, deserialize, encode_segments, decode_segments,
    segment_size, container_size
)

__all__ = [
    "LayerKind", "LayerSpec", "ModelSpec", "Shape", "default_model", "DEFAULT_INPUT_SHAPE",
    "ParamStore", "init_params", "init_layer",
    "forward", "backward", "forward_layers", "backward_layers", "layer_forward", "layer_backward",
    "flops_of_layer", "layers_flops", "model_flops",
    "Segment", "SegmentKind", "serialize", "deserialize", "encode_segments", "decode_segments",
    "segment_size", "container_size"
]
