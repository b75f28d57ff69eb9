"""Forward and backward passes over LayerSpec sequences.

Tensors travel as batches: ``(N, C, L)`` for feature maps and ``(N, F)`` for
flat vectors.  Every layer accumulates in float64 and rounds its output to
the working dtype (float32 by default).
"""
from typing import Any, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from common.errors import InvalidInput, ShapeError
from .layers import LayerKind, LayerSpec, ModelSpec, Shape
from .params import LayerParams, ParamStore

Cache = Tuple[Any, ...]


def _windows(x: np.ndarray, size: int, stride: int) -> np.ndarray:
    return sliding_window_view(x, size, axis=2)[:, :, ::stride, :]


def layer_forward(layer: LayerSpec, params: Optional[LayerParams], x: np.ndarray,
                  dtype=np.float32) -> Tuple[np.ndarray, Cache]:
    x64 = np.asarray(x, dtype=np.float64)
    kind = layer.kind

    if kind == LayerKind.CONV1D:
        weight, bias = params
        w64 = weight.astype(np.float64)
        padded = np.pad(x64, ((0, 0), (0, 0), (layer.padding, layer.padding)))
        windows = _windows(padded, layer.kernel_size, layer.stride)
        n, c, out_len, k = windows.shape
        cols = windows.transpose(0, 2, 1, 3).reshape(n, out_len, c * k)
        out = cols @ w64.reshape(layer.out_channels, c * k).T + bias.astype(np.float64)
        return out.transpose(0, 2, 1).astype(dtype), (cols, padded.shape)

    if kind == LayerKind.RELU:
        return np.maximum(x64, 0.0).astype(dtype), (x64 > 0.0,)

    if kind == LayerKind.MAXPOOL1D:
        windows = _windows(x64, layer.window, layer.stride)
        argmax = windows.argmax(axis=3)
        out = np.take_along_axis(windows, argmax[..., None], axis=3)[..., 0]
        return out.astype(dtype), (argmax, x64.shape)

    if kind == LayerKind.GLOBAL_AVG_POOL1D:
        return x64.mean(axis=2).astype(dtype), (x64.shape,)

    if kind == LayerKind.FLATTEN:
        return x64.reshape(x64.shape[0], -1).astype(dtype), (x64.shape,)

    if kind == LayerKind.DENSE:
        weight, bias = params
        out = x64 @ weight.astype(np.float64).T + bias.astype(np.float64)
        return out.astype(dtype), (x64,)

    if kind == LayerKind.SOFTMAX:
        shifted = x64 - x64.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        return probs.astype(dtype), (probs,)

    raise ShapeError(f"Unsupported layer kind {kind}")


def layer_backward(layer: LayerSpec, params: Optional[LayerParams], cache: Cache,
                   grad_out: np.ndarray) -> Tuple[np.ndarray, Optional[np.ndarray], Optional[np.ndarray]]:
    """Return (grad wrt input, grad wrt weight, grad wrt bias) in float64."""
    g = np.asarray(grad_out, dtype=np.float64)
    kind = layer.kind

    if kind == LayerKind.CONV1D:
        weight, _ = params
        cols, padded_shape = cache
        n, out_len, ck = cols.shape
        g_t = g.transpose(0, 2, 1)
        grad_w = np.einsum("nlo,nlk->ok", g_t, cols).reshape(weight.shape)
        grad_b = g_t.sum(axis=(0, 1))
        grad_cols = (g_t @ weight.astype(np.float64).reshape(layer.out_channels, ck))
        grad_cols = grad_cols.reshape(n, out_len, layer.in_channels, layer.kernel_size)
        grad_padded = np.zeros(padded_shape, dtype=np.float64)
        span = layer.stride * (out_len - 1) + 1
        for j in range(layer.kernel_size):
            grad_padded[:, :, j:j + span:layer.stride] += grad_cols[:, :, :, j].transpose(0, 2, 1)
        length = padded_shape[2] - 2 * layer.padding
        return grad_padded[:, :, layer.padding:layer.padding + length], grad_w, grad_b

    if kind == LayerKind.RELU:
        (mask,) = cache
        return g * mask, None, None

    if kind == LayerKind.MAXPOOL1D:
        argmax, in_shape = cache
        n, c, out_len = argmax.shape
        grad_in = np.zeros(in_shape, dtype=np.float64)
        positions = argmax + layer.stride * np.arange(out_len)[None, None, :]
        n_idx = np.arange(n)[:, None, None]
        c_idx = np.arange(c)[None, :, None]
        np.add.at(grad_in, (n_idx, c_idx, positions), g)
        return grad_in, None, None

    if kind == LayerKind.GLOBAL_AVG_POOL1D:
        (in_shape,) = cache
        return np.broadcast_to(g[:, :, None] / in_shape[2], in_shape).copy(), None, None

    if kind == LayerKind.FLATTEN:
        (in_shape,) = cache
        return g.reshape(in_shape), None, None

    if kind == LayerKind.DENSE:
        weight, _ = params
        (x64,) = cache
        return g @ weight.astype(np.float64), g.T @ x64, g.sum(axis=0)

    if kind == LayerKind.SOFTMAX:
        (probs,) = cache
        return probs * (g - (g * probs).sum(axis=1, keepdims=True)), None, None

    raise ShapeError(f"Unsupported layer kind {kind}")


def as_batch(x: np.ndarray, input_shape: Shape) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x)
    if tuple(x.shape) == tuple(input_shape):
        return x[None, ...], True
    if tuple(x.shape[1:]) != tuple(input_shape):
        raise ShapeError(f"Input shape {x.shape} does not match model input {input_shape}")
    return x, False


def forward_layers(layers: Sequence[LayerSpec], params: Sequence[Optional[LayerParams]],
                   x: np.ndarray, dtype=np.float32, keep_caches: bool = False
                   ) -> Tuple[np.ndarray, List[np.ndarray], List[Cache]]:
    activations: List[np.ndarray] = []
    caches: List[Cache] = []
    out = np.asarray(x, dtype=dtype)
    for layer, layer_params in zip(layers, params):
        out, cache = layer_forward(layer, layer_params, out, dtype)
        if not np.all(np.isfinite(out)):
            raise InvalidInput(f"{layer.kind.name} produced non-finite activations")
        activations.append(out)
        if keep_caches:
            caches.append(cache)
    return out, activations, caches


def backward_layers(layers: Sequence[LayerSpec], params: Sequence[Optional[LayerParams]],
                    caches: Sequence[Cache], grad: np.ndarray
                    ) -> Tuple[np.ndarray, List[Optional[Tuple[np.ndarray, np.ndarray]]]]:
    grads: List[Optional[Tuple[np.ndarray, np.ndarray]]] = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        grad, grad_w, grad_b = layer_backward(layers[i], params[i], caches[i], grad)
        if grad_w is not None:
            grads[i] = (grad_w, grad_b)
    return grad, grads


def forward(model: ModelSpec, params: ParamStore, x: np.ndarray, upto_layer: Optional[int] = None,
            return_activations: bool = False, dtype=np.float32
            ) -> Union[np.ndarray, Tuple[np.ndarray, List[np.ndarray]]]:
    """Run ``model`` on one tensor ``(C, L)`` or a batch ``(N, C, L)``.

    With ``upto_layer`` the output of that layer (inclusive) is returned.
    """
    batch, single = as_batch(x, model.input_shape)
    stop = len(model.layers) if upto_layer is None else upto_layer + 1
    if not 0 < stop <= len(model.layers):
        raise InvalidInput(f"upto_layer {upto_layer} outside the model's {len(model.layers)} layers")
    aligned = params.aligned(model)
    out, activations, _ = forward_layers(model.layers[:stop], aligned[:stop], batch, dtype)
    if single:
        out = out[0]
        activations = [a[0] for a in activations]
    if return_activations:
        return out, activations
    return out


def softmax_cross_entropy_grad(probs: np.ndarray, targets: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient wrt the softmax input."""
    n = probs.shape[0]
    picked = probs[np.arange(n), targets]
    loss = float(-np.log(np.maximum(picked, 1e-300)).mean())
    grad = probs.copy()
    grad[np.arange(n), targets] -= 1.0
    return loss, grad / n


def check_targets(targets, num_classes: int) -> np.ndarray:
    targets = np.atleast_1d(np.asarray(targets))
    if targets.dtype.kind not in "iu" or np.any(targets < 0) or np.any(targets >= num_classes):
        raise InvalidInput(f"Target classes must be integers in [0, {num_classes - 1}], got {targets.tolist()}")
    return targets.astype(np.int64)


def backward(model: ModelSpec, params: ParamStore, x: np.ndarray, target_class,
             dtype=np.float32, return_loss: bool = False
             ) -> Union[ParamStore, Tuple[ParamStore, float]]:
    """Gradients of the mean cross-entropy loss wrt every parameter.

    The model must end in Softmax; the gradient enters the network at the
    softmax input as ``probs - onehot``.
    """
    if model.layers[-1].kind != LayerKind.SOFTMAX:
        raise InvalidInput("backward requires a model that ends in Softmax")
    batch, _ = as_batch(x, model.input_shape)
    targets = check_targets(target_class, model.output_shape[0])
    if targets.size != batch.shape[0]:
        raise InvalidInput(f"{targets.size} targets for a batch of {batch.shape[0]}")

    aligned = params.aligned(model)
    _, _, caches = forward_layers(model.layers, aligned, batch, dtype, keep_caches=True)
    (probs,) = caches[-1]
    loss, grad = softmax_cross_entropy_grad(probs, targets)
    _, grads = backward_layers(model.layers[:-1], aligned[:-1], caches[:-1], grad)

    store = ParamStore({i: g for i, g in enumerate(grads) if g is not None})
    if return_loss:
        return store, loss
    return store
