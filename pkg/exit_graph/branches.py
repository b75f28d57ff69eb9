from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from common.errors import FormatError, InvalidInput
from common.logger import logger
from nn_core.layers import LayerSpec, ModelSpec, Shape, DEFAULT_NUM_CLASSES
from nn_core.model_file import Segment, SegmentKind, decode_segments, encode_segments
from nn_core.params import ParamStore, init_params
from .placements import ExitPlacement

DEFAULT_BOTTLENECK = 16
FLOAT_BYTES = 4


@dataclass(frozen=True)
class ExitBranch:
    """Classifier head plus encoder/decoder pair hanging off one boundary."""
    boundary: int
    feature_shape: Shape
    bottleneck_size: int
    head: ModelSpec
    encoder: ModelSpec
    decoder: ModelSpec

    @property
    def feature_size(self) -> int:
        return self.feature_shape[0] * self.feature_shape[1]

    @property
    def payload_bytes(self) -> int:
        return FLOAT_BYTES * self.bottleneck_size

    @property
    def raw_feature_bytes(self) -> int:
        return FLOAT_BYTES * self.feature_size

    @property
    def compression_ratio(self) -> float:
        return self.raw_feature_bytes / self.payload_bytes


def build_branch(boundary: int, feature_shape: Shape, bottleneck_size: int,
                 num_classes: int = DEFAULT_NUM_CLASSES) -> ExitBranch:
    channels, length = feature_shape
    feature_size = channels * length
    if bottleneck_size < 1 or bottleneck_size > feature_size:
        raise InvalidInput(
            f"Bottleneck {bottleneck_size} must lie in [1, {feature_size}] at boundary {boundary}"
        )
    head = ModelSpec((LayerSpec.global_avg_pool1d(), LayerSpec.dense(channels, num_classes),
                      LayerSpec.softmax()), feature_shape, num_classes)
    encoder = ModelSpec((LayerSpec.flatten(), LayerSpec.dense(feature_size, bottleneck_size)),
                        feature_shape, None)
    decoder = ModelSpec((LayerSpec.dense(bottleneck_size, feature_size),), (bottleneck_size,), None)
    return ExitBranch(boundary, tuple(feature_shape), bottleneck_size, head, encoder, decoder)


@dataclass(frozen=True)
class BranchParams:
    head: ParamStore
    encoder: ParamStore
    decoder: ParamStore


@dataclass(frozen=True)
class ExitModel:
    backbone: ModelSpec
    placement: ExitPlacement
    branches: Tuple[ExitBranch, ...]

    @property
    def bottleneck_size(self) -> int:
        return self.branches[0].bottleneck_size

    @property
    def num_heads(self) -> int:
        return len(self.branches) + 1


@dataclass(frozen=True)
class ExitParams:
    backbone: ParamStore
    branches: Tuple[BranchParams, ...]


def attach_exits(model: ModelSpec, params: ParamStore, placement: ExitPlacement,
                 bottleneck_size: int = DEFAULT_BOTTLENECK, seed: int = 0) -> Tuple[ExitModel, ExitParams]:
    """Hang exit branches on ``model`` at ``placement``.

    Branch parameters are drawn from a stream seeded by (seed, boundary);
    the backbone store is passed through untouched.
    """
    placement.validate_for(model.num_conv_layers)
    params.validate(model)
    branches: List[ExitBranch] = []
    branch_params: List[BranchParams] = []
    for boundary in placement.boundaries:
        branch = build_branch(boundary, model.boundary_shape(boundary), bottleneck_size,
                              model.num_classes or DEFAULT_NUM_CLASSES)
        branches.append(branch)
        branch_params.append(BranchParams(
            head=init_params(branch.head, seed=(seed, boundary, 0)),
            encoder=init_params(branch.encoder, seed=(seed, boundary, 1)),
            decoder=init_params(branch.decoder, seed=(seed, boundary, 2)),
        ))
        logger.debug(
            f"Exit at boundary {boundary}: features {branch.feature_shape}, "
            f"bottleneck {bottleneck_size}, compression {branch.compression_ratio:.1f}x"
        )
    return ExitModel(model, placement, tuple(branches)), ExitParams(params, tuple(branch_params))


def strip_exits(exit_model: ExitModel, exit_params: ExitParams) -> Tuple[ModelSpec, ParamStore]:
    return exit_model.backbone, exit_params.backbone


def exit_model_segments(exit_model: ExitModel, exit_params: ExitParams) -> List[Segment]:
    segments = [Segment(SegmentKind.BACKBONE, 0, exit_model.backbone, exit_params.backbone)]
    for branch, bp in zip(exit_model.branches, exit_params.branches):
        segments.append(Segment(SegmentKind.HEAD, branch.boundary, branch.head, bp.head))
        segments.append(Segment(SegmentKind.ENCODER, branch.boundary, branch.encoder, bp.encoder))
        segments.append(Segment(SegmentKind.DECODER, branch.boundary, branch.decoder, bp.decoder))
    return segments


def save_exit_model(path: Union[str, Path], exit_model: ExitModel, exit_params: ExitParams,
                    metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_segments(exit_model_segments(exit_model, exit_params), metadata)
    with open(path, "wb") as f:
        f.write(data)
    logger.info(f"Exit model saved to {path} ({len(data)} bytes)")
    return path


def exit_model_from_segments(segments: List[Segment]) -> Tuple[ExitModel, ExitParams]:
    backbones = [s for s in segments if s.kind == SegmentKind.BACKBONE]
    if len(backbones) != 1:
        raise FormatError(f"Exit model file needs exactly one backbone segment, found {len(backbones)}")
    backbone = backbones[0]
    by_boundary: Dict[int, Dict[SegmentKind, Segment]] = {}
    for segment in segments:
        if segment.kind != SegmentKind.BACKBONE:
            by_boundary.setdefault(segment.tag, {})[segment.kind] = segment
    if not by_boundary:
        raise FormatError("Exit model file holds no exit branches")

    branches: List[ExitBranch] = []
    branch_params: List[BranchParams] = []
    for boundary in sorted(by_boundary):
        parts = by_boundary[boundary]
        missing = {SegmentKind.HEAD, SegmentKind.ENCODER, SegmentKind.DECODER} - set(parts)
        if missing:
            raise FormatError(f"Boundary {boundary} is missing {sorted(m.name for m in missing)}")
        bottleneck = parts[SegmentKind.DECODER].model.input_shape[0]
        branch = build_branch(boundary, backbone.model.boundary_shape(boundary), bottleneck,
                              backbone.model.num_classes or DEFAULT_NUM_CLASSES)
        for kind, spec in ((SegmentKind.HEAD, branch.head), (SegmentKind.ENCODER, branch.encoder),
                           (SegmentKind.DECODER, branch.decoder)):
            if parts[kind].model != spec:
                raise FormatError(f"{kind.name} segment at boundary {boundary} does not match the backbone")
        branches.append(branch)
        branch_params.append(BranchParams(parts[SegmentKind.HEAD].params, parts[SegmentKind.ENCODER].params,
                                          parts[SegmentKind.DECODER].params))
    placement = ExitPlacement(tuple(b.boundary for b in branches))
    return ExitModel(backbone.model, placement, tuple(branches)), ExitParams(backbone.params, tuple(branch_params))


def load_exit_model(path: Union[str, Path]) -> Tuple[ExitModel, ExitParams, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file {path} not found")
    with open(path, "rb") as f:
        segments, metadata = decode_segments(f.read())
    exit_model, exit_params = exit_model_from_segments(segments)
    logger.debug(f"Loaded exit model from {path} with placement {exit_model.placement.label}")
    return exit_model, exit_params, metadata
