"""FLOPs accounting.

One multiply-accumulate counts as 2 FLOPs; activations, comparisons and
additions count 1 FLOP per element.  Flatten is free.
"""
from typing import List, Sequence, Tuple

from .layers import LayerKind, LayerSpec, ModelSpec, Shape


def _elements(shape: Shape) -> int:
    total = 1
    for dim in shape:
        total *= dim
    return total


def flops_of_layer(layer: LayerSpec, input_shape: Shape) -> int:
    out_shape = layer.output_shape(tuple(input_shape))
    kind = layer.kind
    if kind == LayerKind.CONV1D:
        return 2 * layer.out_channels * out_shape[1] * layer.in_channels * layer.kernel_size
    if kind == LayerKind.DENSE:
        return 2 * layer.in_features * layer.out_features
    if kind in (LayerKind.RELU, LayerKind.MAXPOOL1D):
        return _elements(out_shape)
    if kind == LayerKind.GLOBAL_AVG_POOL1D:
        return _elements(input_shape)
    if kind == LayerKind.SOFTMAX:
        return 3 * out_shape[0]
    return 0


def layers_flops(layers: Sequence[LayerSpec], input_shape: Shape) -> List[int]:
    counts = []
    shape = tuple(input_shape)
    for layer in layers:
        counts.append(flops_of_layer(layer, shape))
        shape = layer.output_shape(shape)
    return counts


def model_flops(model: ModelSpec) -> Tuple[List[int], int]:
    per_layer = layers_flops(model.layers, model.input_shape)
    return per_layer, sum(per_layer)
