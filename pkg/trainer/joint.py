"""Joint forward and backward pass through every head of an exit model.

The forward path follows the deployed cascade: each stage's features feed
its exit head and, through encoder and decoder, the next stage.  The joint
loss is the weighted sum of the per-head cross-entropies.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from common.errors import InvalidInput
from exit_graph.branches import BranchParams, ExitModel, ExitParams
from nn_core.engine import Cache, backward_layers, forward_layers, softmax_cross_entropy_grad
from nn_core.layers import LayerKind
from nn_core.params import ParamStore


@dataclass
class StagePass:
    start: int
    end: int
    decoder_caches: Optional[List[Cache]] = None
    backbone_caches: List[Cache] = field(default_factory=list)
    head_caches: Optional[List[Cache]] = None
    encoder_caches: Optional[List[Cache]] = None


@dataclass
class JointPass:
    probs: List[np.ndarray]
    stages: List[StagePass]


def stage_cuts(exit_model: ExitModel) -> List[int]:
    backbone = exit_model.backbone
    return ([0] + [backbone.boundary_index(b) for b in exit_model.placement.boundaries]
            + [len(backbone.layers)])


def joint_forward(exit_model: ExitModel, params: ExitParams, x: np.ndarray, dtype=np.float32,
                  keep_caches: bool = False) -> JointPass:
    """Head probabilities (float64) for a batch ``(N, C, L)``, earliest head first."""
    backbone = exit_model.backbone
    if backbone.layers[-1].kind != LayerKind.SOFTMAX:
        raise InvalidInput("The backbone must end in Softmax")
    aligned = params.backbone.aligned(backbone)
    cuts = stage_cuts(exit_model)
    n = x.shape[0]
    probs: List[np.ndarray] = []
    stages: List[StagePass] = []
    payload = x
    for i in range(len(cuts) - 1):
        record = StagePass(cuts[i], cuts[i + 1])
        if i > 0:
            branch, bp = exit_model.branches[i - 1], params.branches[i - 1]
            decoded, _, record.decoder_caches = forward_layers(
                branch.decoder.layers, bp.decoder.aligned(branch.decoder), payload, dtype, True)
            payload = decoded.reshape((n,) + tuple(branch.feature_shape))
        features, _, caches = forward_layers(backbone.layers[record.start:record.end],
                                             aligned[record.start:record.end], payload, dtype, True)
        record.backbone_caches = caches if keep_caches else []
        if i < len(exit_model.branches):
            branch, bp = exit_model.branches[i], params.branches[i]
            _, _, head_caches = forward_layers(branch.head.layers, bp.head.aligned(branch.head),
                                               features, dtype, True)
            probs.append(head_caches[-1][0])
            record.head_caches = head_caches if keep_caches else None
            payload, _, record.encoder_caches = forward_layers(
                branch.encoder.layers, bp.encoder.aligned(branch.encoder), features, dtype, True)
        else:
            probs.append(caches[-1][0])
        if not keep_caches:
            record.decoder_caches = record.encoder_caches = None
        stages.append(record)
    return JointPass(probs, stages)


def joint_backward(exit_model: ExitModel, params: ExitParams, joint: JointPass, targets: np.ndarray,
                   weights: Sequence[float]) -> Tuple[float, List[float], ExitParams]:
    """Weighted joint loss, per-head losses and float64 gradients for every parameter."""
    backbone = exit_model.backbone
    aligned = params.backbone.aligned(backbone)
    num_branches = len(exit_model.branches)
    backbone_grads = {}
    head_grads: List[ParamStore] = [ParamStore()] * num_branches
    encoder_grads: List[ParamStore] = [ParamStore()] * num_branches
    decoder_grads: List[ParamStore] = [ParamStore()] * num_branches
    losses = [0.0] * len(joint.stages)
    grad_next: Optional[np.ndarray] = None

    for i in range(len(joint.stages) - 1, -1, -1):
        record = joint.stages[i]
        layers = backbone.layers[record.start:record.end]
        stage_params = aligned[record.start:record.end]
        if i == num_branches:
            loss, grad = softmax_cross_entropy_grad(joint.probs[i], targets)
            losses[i] = loss
            grad_x, grads = backward_layers(layers[:-1], stage_params[:-1], record.backbone_caches[:-1],
                                            grad * weights[i])
        else:
            branch, bp = exit_model.branches[i], params.branches[i]
            loss, grad = softmax_cross_entropy_grad(joint.probs[i], targets)
            losses[i] = loss
            grad_head, hg = backward_layers(branch.head.layers[:-1], bp.head.aligned(branch.head)[:-1],
                                            record.head_caches[:-1], grad * weights[i])
            head_grads[i] = ParamStore({j: g for j, g in enumerate(hg) if g is not None})

            following = joint.stages[i + 1]
            grad_code, dg = backward_layers(branch.decoder.layers, bp.decoder.aligned(branch.decoder),
                                            following.decoder_caches, grad_next.reshape(grad_next.shape[0], -1))
            decoder_grads[i] = ParamStore({j: g for j, g in enumerate(dg) if g is not None})
            grad_enc, eg = backward_layers(branch.encoder.layers, bp.encoder.aligned(branch.encoder),
                                           record.encoder_caches, grad_code)
            encoder_grads[i] = ParamStore({j: g for j, g in enumerate(eg) if g is not None})
            grad_x, grads = backward_layers(layers, stage_params, record.backbone_caches, grad_head + grad_enc)
        for j, g in enumerate(grads):
            if g is not None:
                backbone_grads[record.start + j] = g
        grad_next = grad_x

    total = float(sum(w * l for w, l in zip(weights, losses)))
    grads = ExitParams(ParamStore(backbone_grads), tuple(
        BranchParams(head_grads[i], encoder_grads[i], decoder_grads[i]) for i in range(num_branches)
    ))
    return total, losses, grads


def joint_loss_and_grads(exit_model: ExitModel, params: ExitParams, x: np.ndarray, targets: np.ndarray,
                         weights: Sequence[float], dtype=np.float32) -> Tuple[float, List[float], ExitParams]:
    joint = joint_forward(exit_model, params, x, dtype, keep_caches=True)
    return joint_backward(exit_model, params, joint, targets, weights)


def _step(store: ParamStore, grads: ParamStore, learning_rate: float) -> ParamStore:
    updated = {}
    for i in store:
        weight, bias = store[i]
        grad_w, grad_b = grads[i]
        updated[i] = (
            (weight.astype(np.float64) - learning_rate * grad_w).astype(weight.dtype),
            (bias.astype(np.float64) - learning_rate * grad_b).astype(bias.dtype),
        )
    return ParamStore(updated)


def sgd_step(params: ExitParams, grads: ExitParams, learning_rate: float) -> ExitParams:
    return ExitParams(
        _step(params.backbone, grads.backbone, learning_rate),
        tuple(BranchParams(_step(p.head, g.head, learning_rate), _step(p.encoder, g.encoder, learning_rate),
                           _step(p.decoder, g.decoder, learning_rate))
              for p, g in zip(params.branches, grads.branches)),
    )


def exit_params_bytes(params: ExitParams) -> bytes:
    chunks = [params.backbone.to_bytes()]
    for bp in params.branches:
        chunks.extend([bp.head.to_bytes(), bp.encoder.to_bytes(), bp.decoder.to_bytes()])
    return b"".join(chunks)
