from dataclasses import dataclass, field
from enum import IntEnum
from typing import List, Optional, Tuple

from common.errors import FormatError, InvalidInput, ShapeError

Shape = Tuple[int, ...]

DEFAULT_INPUT_SHAPE: Shape = (1, 260)
DEFAULT_NUM_CLASSES = 5


class LayerKind(IntEnum):
    CONV1D = 1
    RELU = 2
    MAXPOOL1D = 3
    FLATTEN = 4
    DENSE = 5
    SOFTMAX = 6
    GLOBAL_AVG_POOL1D = 7


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 0
    padding: int = 0
    window: int = 0
    in_features: int = 0
    out_features: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", LayerKind(self.kind))
        if self.kind == LayerKind.CONV1D:
            dims = (self.in_channels, self.out_channels, self.kernel_size, self.stride)
            if min(dims) <= 0 or self.padding < 0:
                raise InvalidInput(f"Invalid Conv1d parameters: {self}")
        elif self.kind == LayerKind.MAXPOOL1D:
            if self.window <= 0 or self.stride <= 0:
                raise InvalidInput(f"Invalid MaxPool1d parameters: {self}")
        elif self.kind == LayerKind.DENSE:
            if self.in_features <= 0 or self.out_features <= 0:
                raise InvalidInput(f"Invalid Dense parameters: {self}")

    @classmethod
    def conv1d(cls, in_channels: int, out_channels: int, kernel_size: int,
               stride: int = 1, padding: int = 0) -> "LayerSpec":
        return cls(LayerKind.CONV1D, in_channels=in_channels, out_channels=out_channels,
                   kernel_size=kernel_size, stride=stride, padding=padding)

    @classmethod
    def relu(cls) -> "LayerSpec":
        return cls(LayerKind.RELU)

    @classmethod
    def maxpool1d(cls, window: int, stride: Optional[int] = None) -> "LayerSpec":
        return cls(LayerKind.MAXPOOL1D, window=window, stride=stride or window)

    @classmethod
    def flatten(cls) -> "LayerSpec":
        return cls(LayerKind.FLATTEN)

    @classmethod
    def dense(cls, in_features: int, out_features: int) -> "LayerSpec":
        return cls(LayerKind.DENSE, in_features=in_features, out_features=out_features)

    @classmethod
    def softmax(cls) -> "LayerSpec":
        return cls(LayerKind.SOFTMAX)

    @classmethod
    def global_avg_pool1d(cls) -> "LayerSpec":
        return cls(LayerKind.GLOBAL_AVG_POOL1D)

    @property
    def has_params(self) -> bool:
        return self.kind in (LayerKind.CONV1D, LayerKind.DENSE)

    @property
    def weight_shape(self) -> Shape:
        if self.kind == LayerKind.CONV1D:
            return (self.out_channels, self.in_channels, self.kernel_size)
        if self.kind == LayerKind.DENSE:
            return (self.out_features, self.in_features)
        return ()

    @property
    def bias_shape(self) -> Shape:
        if self.kind == LayerKind.CONV1D:
            return (self.out_channels,)
        if self.kind == LayerKind.DENSE:
            return (self.out_features,)
        return ()

    def encode_params(self) -> Tuple[int, ...]:
        if self.kind == LayerKind.CONV1D:
            return (self.in_channels, self.out_channels, self.kernel_size, self.stride, self.padding)
        if self.kind == LayerKind.MAXPOOL1D:
            return (self.window, self.stride)
        if self.kind == LayerKind.DENSE:
            return (self.in_features, self.out_features)
        return ()

    @classmethod
    def decode_params(cls, kind: int, values: Tuple[int, ...]) -> "LayerSpec":
        try:
            kind = LayerKind(kind)
        except ValueError:
            raise FormatError(f"Unknown layer kind byte {kind}")
        expected = {LayerKind.CONV1D: 5, LayerKind.MAXPOOL1D: 2, LayerKind.DENSE: 2}.get(kind, 0)
        if len(values) != expected:
            raise FormatError(f"{kind.name} expects {expected} parameters, got {len(values)}")
        if kind == LayerKind.CONV1D:
            return cls.conv1d(*values)
        if kind == LayerKind.MAXPOOL1D:
            return cls.maxpool1d(*values)
        if kind == LayerKind.DENSE:
            return cls.dense(*values)
        return cls(kind)

    def output_shape(self, input_shape: Shape) -> Shape:
        kind = self.kind
        if kind == LayerKind.CONV1D:
            if len(input_shape) != 2 or input_shape[0] != self.in_channels:
                raise ShapeError(f"Conv1d expects ({self.in_channels}, L), got {input_shape}")
            length = (input_shape[1] + 2 * self.padding - self.kernel_size) // self.stride + 1
            if length <= 0:
                raise ShapeError(f"Conv1d kernel {self.kernel_size} does not fit input {input_shape}")
            return (self.out_channels, length)
        if kind == LayerKind.MAXPOOL1D:
            if len(input_shape) != 2:
                raise ShapeError(f"MaxPool1d expects (C, L), got {input_shape}")
            length = (input_shape[1] - self.window) // self.stride + 1
            if length <= 0:
                raise ShapeError(f"MaxPool1d window {self.window} does not fit input {input_shape}")
            return (input_shape[0], length)
        if kind == LayerKind.GLOBAL_AVG_POOL1D:
            if len(input_shape) != 2:
                raise ShapeError(f"GlobalAvgPool1d expects (C, L), got {input_shape}")
            return (input_shape[0],)
        if kind == LayerKind.FLATTEN:
            size = 1
            for dim in input_shape:
                size *= dim
            return (size,)
        if kind == LayerKind.DENSE:
            if tuple(input_shape) != (self.in_features,):
                raise ShapeError(f"Dense expects ({self.in_features},), got {input_shape}")
            return (self.out_features,)
        if kind == LayerKind.SOFTMAX:
            if len(input_shape) != 1:
                raise ShapeError(f"Softmax expects a flat vector, got {input_shape}")
            return tuple(input_shape)
        return tuple(input_shape)


@dataclass(frozen=True)
class ModelSpec:
    layers: Tuple[LayerSpec, ...]
    input_shape: Shape = DEFAULT_INPUT_SHAPE
    num_classes: Optional[int] = DEFAULT_NUM_CLASSES
    shapes: Tuple[Shape, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise FormatError("A model must contain at least one layer")
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))

        shapes: List[Shape] = [self.input_shape]
        for i, layer in enumerate(layers):
            try:
                shapes.append(layer.output_shape(shapes[-1]))
            except ShapeError as e:
                raise ShapeError(f"Layer {i} ({layer.kind.name}): {e}")
        object.__setattr__(self, "shapes", tuple(shapes))

        if layers[-1].kind == LayerKind.SOFTMAX and self.num_classes is not None:
            if shapes[-1] != (self.num_classes,):
                raise ShapeError(f"Model output {shapes[-1]} does not match {self.num_classes} classes")

    @property
    def output_shape(self) -> Shape:
        return self.shapes[-1]

    @property
    def conv_indices(self) -> List[int]:
        return [i for i, layer in enumerate(self.layers) if layer.kind == LayerKind.CONV1D]

    @property
    def num_conv_layers(self) -> int:
        return len(self.conv_indices)

    def boundary_index(self, boundary: int) -> int:
        """Layer index where conv block ``boundary + 1`` starts."""
        convs = self.conv_indices
        if not 1 <= boundary <= len(convs) - 1:
            raise InvalidInput(f"Boundary {boundary} outside [1, {len(convs) - 1}]")
        return convs[boundary]

    def boundary_shape(self, boundary: int) -> Shape:
        return self.shapes[self.boundary_index(boundary)]


def default_model(input_length: int = DEFAULT_INPUT_SHAPE[1],
                  channels: Tuple[int, ...] = (8, 16, 16, 32, 32, 64),
                  hidden: int = 32, num_classes: int = DEFAULT_NUM_CLASSES,
                  kernel_size: int = 5) -> ModelSpec:
    """Six Conv1d-ReLU-MaxPool blocks followed by a two-layer dense classifier."""
    layers: List[LayerSpec] = []
    in_channels = 1
    length = input_length
    for out_channels in channels:
        layers.append(LayerSpec.conv1d(in_channels, out_channels, kernel_size, 1, kernel_size // 2))
        layers.append(LayerSpec.relu())
        layers.append(LayerSpec.maxpool1d(2, 2))
        in_channels = out_channels
        length = length // 2
    layers.extend([
        LayerSpec.flatten(),
        LayerSpec.dense(in_channels * length, hidden),
        LayerSpec.relu(),
        LayerSpec.dense(hidden, num_classes),
        LayerSpec.softmax(),
    ])
    return ModelSpec(tuple(layers), (1, input_length), num_classes)
