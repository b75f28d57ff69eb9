from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from common.errors import ShapeError
from .layers import LayerKind, LayerSpec, ModelSpec

LayerParams = Tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class ParamStore:
    """Weight and bias arrays keyed by the owning layer's index."""
    arrays: Dict[int, LayerParams] = field(default_factory=dict)

    def __getitem__(self, index: int) -> LayerParams:
        return self.arrays[index]

    def __contains__(self, index: int) -> bool:
        return index in self.arrays

    def __iter__(self) -> Iterator[int]:
        return iter(sorted(self.arrays))

    def __len__(self) -> int:
        return len(self.arrays)

    def aligned(self, model: ModelSpec) -> List[Optional[LayerParams]]:
        return [self.arrays.get(i) for i in range(len(model.layers))]

    def validate(self, model: ModelSpec) -> None:
        for i, layer in enumerate(model.layers):
            if not layer.has_params:
                if i in self.arrays:
                    raise ShapeError(f"Layer {i} ({layer.kind.name}) has no parameters but the store holds some")
                continue
            if i not in self.arrays:
                raise ShapeError(f"Missing parameters for layer {i} ({layer.kind.name})")
            weight, bias = self.arrays[i]
            if weight.shape != layer.weight_shape or bias.shape != layer.bias_shape:
                raise ShapeError(
                    f"Layer {i}: parameter shapes {weight.shape}/{bias.shape} do not match "
                    f"{layer.weight_shape}/{layer.bias_shape}"
                )

    def astype(self, dtype) -> "ParamStore":
        return ParamStore({i: (w.astype(dtype), b.astype(dtype)) for i, (w, b) in self.arrays.items()})

    def copy(self) -> "ParamStore":
        return ParamStore({i: (w.copy(), b.copy()) for i, (w, b) in self.arrays.items()})

    def to_bytes(self) -> bytes:
        chunks = []
        for i in self:
            weight, bias = self.arrays[i]
            chunks.append(np.asarray(weight, dtype="<f4").tobytes())
            chunks.append(np.asarray(bias, dtype="<f4").tobytes())
        return b"".join(chunks)

    @property
    def num_values(self) -> int:
        return sum(w.size + b.size for w, b in self.arrays.values())


def _fans(layer: LayerSpec) -> Tuple[int, int]:
    if layer.kind == LayerKind.CONV1D:
        return layer.in_channels * layer.kernel_size, layer.out_channels * layer.kernel_size
    return layer.in_features, layer.out_features


def init_layer(layer: LayerSpec, rng: np.random.Generator, dtype=np.float32) -> LayerParams:
    fan_in, fan_out = _fans(layer)
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    weight = rng.uniform(-limit, limit, size=layer.weight_shape).astype(dtype)
    bias = np.zeros(layer.bias_shape, dtype=dtype)
    return weight, bias


def init_params(model: ModelSpec, seed: Union[int, Sequence[int]] = 0, dtype=np.float32) -> ParamStore:
    """Glorot-uniform weights and zero biases, drawn in layer order from one seeded stream."""
    rng = np.random.default_rng(seed)
    arrays = {}
    for i, layer in enumerate(model.layers):
        if layer.has_params:
            arrays[i] = init_layer(layer, rng, dtype)
    return ParamStore(arrays)
