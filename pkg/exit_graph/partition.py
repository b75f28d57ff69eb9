"""Cut an exit-augmented model into node-assigned stages.

Stage ``i`` ends at the i-th exit boundary; the last stage runs to the
final head.  A stage that receives a bottleneck vector runs the previous
exit's decoder first, and a stage that may forward runs its own encoder
last.  The ``.plan.json`` manifest lists one ``.dcn`` file per stage.
"""
from dataclasses import dataclass
from enum import Enum, IntEnum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from common.artifacts import provenance, read_json_report, write_json_report
from common.errors import FormatError, InvalidInput
from common.logger import logger
from nn_core.engine import forward_layers
from nn_core.flops import layers_flops
from nn_core.layers import LayerKind, ModelSpec
from nn_core.model_file import Segment, SegmentKind, container_size, decode_segments, encode_segments
from nn_core.params import ParamStore
from .branches import ExitBranch, ExitModel, ExitParams, exit_model_from_segments
from .placements import ExitPlacement

DEFAULT_EDGE_BUDGET_BYTES = 256 * 1024
PLAN_SUFFIX = ".plan.json"


class NodeRole(IntEnum):
    EDGE = 0
    FOG = 1
    CLOUD = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: Union[str, int, "NodeRole"]) -> "NodeRole":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise InvalidInput(f"Unknown node role '{value}'; expected edge, fog or cloud")
        try:
            return cls(int(value))
        except ValueError:
            raise InvalidInput(f"Unknown node role {value!r}")


DEFAULT_ROLES = {
    2: (NodeRole.EDGE, NodeRole.CLOUD),
    3: (NodeRole.EDGE, NodeRole.FOG, NodeRole.CLOUD),
}


class ForwardMode(Enum):
    GATED = "gated"
    PASS_THROUGH = "pass_through"

    @classmethod
    def parse(cls, value: Union[str, "ForwardMode"]) -> "ForwardMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower().replace("-", "_"))
        except ValueError:
            raise InvalidInput(f"Unknown forward mode '{value}'; expected gated or pass_through")


@dataclass(frozen=True)
class Stage:
    index: int
    role: NodeRole
    layer_start: int
    layer_end: int
    exit_branch: Optional[ExitBranch]
    incoming_branch: Optional[ExitBranch]
    serialized_bytes: int
    backbone_flops: int
    head_flops: int
    encoder_flops: int
    decoder_flops: int

    @property
    def is_final(self) -> bool:
        return self.exit_branch is None

    @property
    def layer_range(self) -> range:
        return range(self.layer_start, self.layer_end)

    @property
    def exit_flops(self) -> int:
        """FLOPs spent when a beat leaves the cascade at this stage."""
        return self.decoder_flops + self.backbone_flops + self.head_flops

    @property
    def forward_flops(self) -> int:
        """FLOPs spent when the stage hands the beat on to the next one."""
        return self.exit_flops + self.encoder_flops

    @property
    def flops(self) -> int:
        return self.forward_flops

    @property
    def payload_bytes(self) -> int:
        return self.exit_branch.payload_bytes if self.exit_branch else 0


@dataclass(frozen=True)
class PartitionPlan:
    exit_model: ExitModel
    stages: Tuple[Stage, ...]

    @property
    def backbone(self) -> ModelSpec:
        return self.exit_model.backbone

    @property
    def placement(self) -> ExitPlacement:
        return self.exit_model.placement

    @property
    def roles(self) -> Tuple[NodeRole, ...]:
        return tuple(stage.role for stage in self.stages)

    @property
    def baseline_flops(self) -> int:
        """Backbone-only FLOPs of one monolithic forward pass."""
        return sum(stage.backbone_flops for stage in self.stages)

    @property
    def full_pipeline_flops(self) -> int:
        return sum(stage.flops for stage in self.stages)

    def conv_blocks(self, stage: Stage) -> List[int]:
        convs = self.backbone.conv_indices
        return [n + 1 for n, i in enumerate(convs) if stage.layer_start <= i < stage.layer_end]

    def stage_backbone(self, stage: Stage) -> ModelSpec:
        backbone = self.backbone
        final = stage.layer_end == len(backbone.layers)
        return ModelSpec(backbone.layers[stage.layer_start:stage.layer_end],
                         backbone.shapes[stage.layer_start],
                         backbone.num_classes if final else None)


def _stage_models(stage_backbone: ModelSpec, exit_branch: Optional[ExitBranch],
                  incoming: Optional[ExitBranch]) -> List[ModelSpec]:
    models = []
    if incoming is not None:
        models.append(incoming.decoder)
    models.append(stage_backbone)
    if exit_branch is not None:
        models.extend([exit_branch.head, exit_branch.encoder])
    return models


def partition(exit_model: ExitModel, placement: Optional[ExitPlacement] = None,
              roles: Optional[Sequence[Union[str, NodeRole]]] = None) -> PartitionPlan:
    placement = placement or exit_model.placement
    if placement != exit_model.placement:
        raise InvalidInput(
            f"Placement {placement.label} does not match the model's exits at {exit_model.placement.label}"
        )
    num_stages = placement.num_exits + 1
    roles = tuple(NodeRole.parse(r) for r in (roles if roles is not None else DEFAULT_ROLES[num_stages]))
    if len(roles) != num_stages:
        raise InvalidInput(f"{placement.num_exits} exit(s) make {num_stages} stages but {len(roles)} roles were given")
    if any(a >= b for a, b in zip(roles, roles[1:])):
        raise InvalidInput(f"Roles must run edge before fog before cloud, got {[r.label for r in roles]}")

    backbone = exit_model.backbone
    cuts = [0] + [backbone.boundary_index(b) for b in placement.boundaries] + [len(backbone.layers)]
    stages: List[Stage] = []
    for i, role in enumerate(roles):
        start, end = cuts[i], cuts[i + 1]
        exit_branch = exit_model.branches[i] if i < len(exit_model.branches) else None
        incoming = exit_model.branches[i - 1] if i > 0 else None
        sliced = ModelSpec(backbone.layers[start:end], backbone.shapes[start],
                           backbone.num_classes if end == len(backbone.layers) else None)
        stages.append(Stage(
            index=i,
            role=role,
            layer_start=start,
            layer_end=end,
            exit_branch=exit_branch,
            incoming_branch=incoming,
            serialized_bytes=container_size(_stage_models(sliced, exit_branch, incoming)),
            backbone_flops=sum(layers_flops(sliced.layers, sliced.input_shape)),
            head_flops=sum(layers_flops(exit_branch.head.layers, exit_branch.head.input_shape)) if exit_branch else 0,
            encoder_flops=sum(layers_flops(exit_branch.encoder.layers, exit_branch.encoder.input_shape)) if exit_branch else 0,
            decoder_flops=sum(layers_flops(incoming.decoder.layers, incoming.decoder.input_shape)) if incoming else 0,
        ))
    plan = PartitionPlan(exit_model, tuple(stages))
    for stage in plan.stages:
        logger.debug(
            f"Stage {stage.index} ({stage.role.label}): blocks {plan.conv_blocks(stage)}, "
            f"{stage.serialized_bytes} bytes, {stage.flops} FLOPs"
        )
    return plan


@dataclass(frozen=True)
class StageParams:
    backbone: ParamStore
    head: Optional[ParamStore]
    encoder: Optional[ParamStore]
    decoder: Optional[ParamStore]


def _shift(params: ParamStore, start: int, end: int) -> ParamStore:
    return ParamStore({i - start: params[i] for i in params if start <= i < end})


def split_params(plan: PartitionPlan, exit_params: ExitParams) -> List[StageParams]:
    out = []
    for stage in plan.stages:
        branch = exit_params.branches[stage.index] if not stage.is_final else None
        incoming = exit_params.branches[stage.index - 1] if stage.index > 0 else None
        out.append(StageParams(
            backbone=_shift(exit_params.backbone, stage.layer_start, stage.layer_end),
            head=branch.head if branch else None,
            encoder=branch.encoder if branch else None,
            decoder=incoming.decoder if incoming else None,
        ))
    return out


def stage_segments(plan: PartitionPlan, stage: Stage, params: StageParams) -> List[Segment]:
    segments = []
    if stage.incoming_branch is not None:
        segments.append(Segment(SegmentKind.DECODER, stage.incoming_branch.boundary,
                                stage.incoming_branch.decoder, params.decoder))
    segments.append(Segment(SegmentKind.BACKBONE, stage.layer_start, plan.stage_backbone(stage), params.backbone))
    if stage.exit_branch is not None:
        segments.append(Segment(SegmentKind.HEAD, stage.exit_branch.boundary, stage.exit_branch.head, params.head))
        segments.append(Segment(SegmentKind.ENCODER, stage.exit_branch.boundary,
                                stage.exit_branch.encoder, params.encoder))
    return segments


@dataclass(frozen=True)
class StageOutput:
    features: np.ndarray
    probs: np.ndarray


class StageExecutor:
    """Runs one stage of a plan on a batch, holding its own parameters."""

    def __init__(self, plan: PartitionPlan, stage: Stage, params: StageParams, dtype=np.float32):
        self.plan = plan
        self.stage = stage
        self.dtype = dtype
        self.backbone = plan.stage_backbone(stage)
        self._backbone_params = params.backbone.aligned(self.backbone)
        branch, incoming = stage.exit_branch, stage.incoming_branch
        self._head_params = params.head.aligned(branch.head) if branch else None
        self._encoder_params = params.encoder.aligned(branch.encoder) if branch else None
        self._decoder_params = params.decoder.aligned(incoming.decoder) if incoming else None

    def receive(self, payload: np.ndarray, mode: ForwardMode) -> np.ndarray:
        incoming = self.stage.incoming_branch
        if incoming is None or mode == ForwardMode.PASS_THROUGH:
            return payload
        decoded, _, _ = forward_layers(incoming.decoder.layers, self._decoder_params, payload, self.dtype)
        return decoded.reshape((decoded.shape[0],) + tuple(incoming.feature_shape))

    def compute(self, x: np.ndarray) -> np.ndarray:
        out, _, _ = forward_layers(self.backbone.layers, self._backbone_params, x, self.dtype)
        return out

    def exit_probs(self, features: np.ndarray) -> np.ndarray:
        branch = self.stage.exit_branch
        if branch is None:
            if self.backbone.layers[-1].kind != LayerKind.SOFTMAX:
                raise InvalidInput("The final stage must end in Softmax")
            return features
        probs, _, _ = forward_layers(branch.head.layers, self._head_params, features, self.dtype)
        return probs

    def transmit(self, features: np.ndarray, mode: ForwardMode) -> np.ndarray:
        if self.stage.is_final:
            raise InvalidInput("The final stage has nothing to forward")
        if mode == ForwardMode.PASS_THROUGH:
            return features
        encoded, _, _ = forward_layers(self.stage.exit_branch.encoder.layers, self._encoder_params,
                                       features, self.dtype)
        return encoded

    def run(self, payload: np.ndarray, mode: ForwardMode = ForwardMode.GATED) -> StageOutput:
        features = self.compute(self.receive(payload, mode))
        return StageOutput(features, self.exit_probs(features))


def build_executors(plan: PartitionPlan, exit_params: ExitParams, dtype=np.float32) -> List[StageExecutor]:
    return [StageExecutor(plan, stage, params, dtype)
            for stage, params in zip(plan.stages, split_params(plan, exit_params))]


def run_plan(plan: PartitionPlan, exit_params: ExitParams, x: np.ndarray,
             mode: ForwardMode = ForwardMode.PASS_THROUGH, dtype=np.float32) -> np.ndarray:
    """Run every stage in order with no gating; returns the final head output."""
    payload = np.asarray(x)
    single = tuple(payload.shape) == tuple(plan.backbone.input_shape)
    if single:
        payload = payload[None, ...]
    executors = build_executors(plan, exit_params, dtype)
    for executor in executors[:-1]:
        features = executor.compute(executor.receive(payload, mode))
        payload = executor.transmit(features, mode)
    last = executors[-1]
    out = last.compute(last.receive(payload, mode))
    return out[0] if single else out


@dataclass(frozen=True)
class StageBudget:
    stage_index: int
    role: NodeRole
    serialized_bytes: int
    budget_bytes: int

    @property
    def exceeded(self) -> bool:
        return self.serialized_bytes > self.budget_bytes


@dataclass(frozen=True)
class MemoryBudgetReport:
    budget_bytes: int
    checked: Tuple[StageBudget, ...]

    @property
    def flagged(self) -> List[StageBudget]:
        return [entry for entry in self.checked if entry.exceeded]

    @property
    def passed(self) -> bool:
        return not self.flagged


def check_memory_budget(plan: PartitionPlan, edge_budget_bytes: int = DEFAULT_EDGE_BUDGET_BYTES,
                        roles: Sequence[NodeRole] = (NodeRole.EDGE,)) -> MemoryBudgetReport:
    """Compare the serialized size of every stage on ``roles`` with the budget.

    Only edge stages are checked by default since the budget models the
    edge device's RAM. Pass ``roles=tuple(NodeRole)`` to hold every stage
    to the same limit; with a budget of 0 that flags each non-empty stage.
    """
    checked = tuple(
        StageBudget(stage.index, stage.role, stage.serialized_bytes, int(edge_budget_bytes))
        for stage in plan.stages if stage.role in roles
    )
    report = MemoryBudgetReport(int(edge_budget_bytes), checked)
    for entry in report.flagged:
        logger.warning(
            f"Stage {entry.stage_index} ({entry.role.label}) needs {entry.serialized_bytes} bytes, "
            f"budget is {entry.budget_bytes}"
        )
    return report


def stage_file_name(stage: Stage) -> str:
    return f"stage{stage.index}_{stage.role.label}.dcn"


def write_plan(plan: PartitionPlan, exit_params: ExitParams, out_dir: Union[str, Path],
               name: str = "model", metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write one ``.dcn`` per stage plus the ``<name>.plan.json`` manifest."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metadata = metadata if metadata is not None else provenance()
    entries = []
    for stage, params in zip(plan.stages, split_params(plan, exit_params)):
        path = out_dir / stage_file_name(stage)
        data = encode_segments(stage_segments(plan, stage, params))
        with open(path, "wb") as f:
            f.write(data)
        entries.append({
            "index": stage.index,
            "role": stage.role.label,
            "layers": [stage.layer_start, stage.layer_end],
            "conv_blocks": plan.conv_blocks(stage),
            "file": path.name,
            "serialized_bytes": stage.serialized_bytes,
            "flops": stage.flops,
            "exit_boundary": stage.exit_branch.boundary if stage.exit_branch else None,
            "payload_bytes": stage.payload_bytes,
            "raw_feature_bytes": stage.exit_branch.raw_feature_bytes if stage.exit_branch else 0,
        })
    manifest = {
        "placement": list(plan.placement.boundaries),
        "bottleneck_size": plan.exit_model.bottleneck_size,
        "baseline_flops": plan.baseline_flops,
        "stages": entries,
    }
    path = out_dir / f"{name}{PLAN_SUFFIX}"
    write_json_report(path, manifest, metadata)
    logger.info(f"Partition plan with {len(entries)} stages written to {path}")
    return path


def read_plan(manifest_path: Union[str, Path]) -> Tuple[PartitionPlan, ExitParams]:
    """Rebuild a plan and its parameters from a manifest and its stage files."""
    manifest_path = Path(manifest_path)
    manifest = read_json_report(manifest_path)
    try:
        entries = sorted(manifest["stages"], key=lambda e: e["index"])
        roles = [NodeRole.parse(e["role"]) for e in entries]
    except (KeyError, TypeError) as e:
        raise FormatError(f"Manifest {manifest_path} is missing stage fields: {e}") from e

    backbone_parts: List[Segment] = []
    branch_parts: List[Segment] = []
    for entry in entries:
        with open(manifest_path.parent / entry["file"], "rb") as f:
            segments, _ = decode_segments(f.read())
        for segment in segments:
            (backbone_parts if segment.kind == SegmentKind.BACKBONE else branch_parts).append(segment)
    if len(backbone_parts) != len(entries):
        raise FormatError(f"Expected one backbone segment per stage, found {len(backbone_parts)}")

    layers, arrays, offset = [], {}, 0
    for part in sorted(backbone_parts, key=lambda s: s.tag):
        if part.tag != offset:
            raise FormatError(f"Stage backbone starting at layer {part.tag} leaves a gap at layer {offset}")
        layers.extend(part.model.layers)
        arrays.update({i + offset: part.params[i] for i in part.params})
        offset += len(part.model.layers)
    first = min(backbone_parts, key=lambda s: s.tag)
    last = max(backbone_parts, key=lambda s: s.tag)
    backbone = Segment(SegmentKind.BACKBONE, 0,
                       ModelSpec(tuple(layers), first.model.input_shape, last.model.num_classes),
                       ParamStore(arrays))
    exit_model, exit_params = exit_model_from_segments([backbone] + branch_parts)
    plan = partition(exit_model, exit_model.placement, roles)
    for stage, entry in zip(plan.stages, entries):
        if stage.serialized_bytes != entry.get("serialized_bytes"):
            raise FormatError(
                f"Stage {stage.index} is {stage.serialized_bytes} bytes but the manifest says "
                f"{entry.get('serialized_bytes')}"
            )
    return plan, exit_params


def stage_model_bytes(plan: PartitionPlan, stage: Stage, exit_params: ExitParams) -> int:
    """Length of the stage's actual ``.dcn`` encoding, counted by serializing it."""
    params = split_params(plan, exit_params)[stage.index]
    return len(encode_segments(stage_segments(plan, stage, params)))
