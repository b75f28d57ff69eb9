"""The ``.dcn`` model container.

Layout (little-endian)::

    b"DCN1" | u32 segment count
    per segment:
        u8 segment kind | u32 tag | u32 input rank | rank x u32 dims
        | u32 num_classes (0 = none) | u32 layer count
        | per layer: u8 kind | u8 n | n x u32 parameters
        | payload: weight then bias of every parameterized layer, f32
    optional trailer: b"META" | u32 length | provenance JSON

A plain model is a file with a single backbone segment.  Exit-augmented
models and partition stages add head, encoder and decoder segments whose
tag is the boundary they belong to.
"""
import json
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from common.artifacts import dumps_canonical
from common.errors import FormatError, InvalidInput
from .layers import LayerSpec, ModelSpec
from .params import ParamStore

MAGIC = b"DCN1"
META_TAG = b"META"


class SegmentKind(IntEnum):
    BACKBONE = 0
    HEAD = 1
    ENCODER = 2
    DECODER = 3


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    tag: int
    model: ModelSpec
    params: ParamStore


def _segment_header_bytes(model: ModelSpec) -> int:
    size = 1 + 4 + 4 + 4 * len(model.input_shape) + 4 + 4
    for layer in model.layers:
        size += 2 + 4 * len(layer.encode_params())
    return size


def segment_size(model: ModelSpec) -> int:
    """Bytes a segment occupies: header plus f32 payload."""
    payload = 0
    for layer in model.layers:
        if layer.has_params:
            payload += 4 * (int(np.prod(layer.weight_shape)) + int(np.prod(layer.bias_shape)))
    return _segment_header_bytes(model) + payload


def container_size(models: Sequence[ModelSpec]) -> int:
    return len(MAGIC) + 4 + sum(segment_size(m) for m in models)


def _encode_segment(segment: Segment) -> bytes:
    model, params = segment.model, segment.params
    params.validate(model)
    chunks = [struct.pack("<BII", int(segment.kind), segment.tag, len(model.input_shape))]
    chunks.append(struct.pack(f"<{len(model.input_shape)}I", *model.input_shape))
    chunks.append(struct.pack("<II", model.num_classes or 0, len(model.layers)))
    for layer in model.layers:
        values = layer.encode_params()
        chunks.append(struct.pack("<BB", int(layer.kind), len(values)))
        if values:
            chunks.append(struct.pack(f"<{len(values)}I", *values))
    chunks.append(params.to_bytes())
    return b"".join(chunks)


def encode_segments(segments: Sequence[Segment], metadata: Optional[Dict[str, Any]] = None) -> bytes:
    if not segments:
        raise InvalidInput("A model file needs at least one segment")
    chunks = [MAGIC, struct.pack("<I", len(segments))]
    chunks.extend(_encode_segment(s) for s in segments)
    if metadata:
        blob = dumps_canonical(metadata).encode("utf-8")
        chunks.append(META_TAG + struct.pack("<I", len(blob)) + blob)
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def unpack(self, fmt: str, what: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise FormatError(f"Truncated model file while reading {what}", self.offset)
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def floats(self, count: int, what: str) -> np.ndarray:
        size = 4 * count
        if self.offset + size > len(self.data):
            raise FormatError(f"Truncated model file while reading {what}", self.offset)
        values = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.offset).astype(np.float32)
        self.offset += size
        return values


def _decode_segment(reader: _Reader, index: int) -> Segment:
    start = reader.offset
    kind, tag, rank = reader.unpack("<BII", f"segment {index} header")
    try:
        kind = SegmentKind(kind)
    except ValueError:
        raise FormatError(f"Unknown segment kind {kind}", start)
    if not 1 <= rank <= 2:
        raise FormatError(f"Unsupported input rank {rank}", start + 5)
    input_shape = reader.unpack(f"<{rank}I", "input shape")
    num_classes, layer_count = reader.unpack("<II", "layer count")

    layers: List[LayerSpec] = []
    for i in range(layer_count):
        layer_offset = reader.offset
        layer_kind, n = reader.unpack("<BB", f"layer {i} kind")
        values = reader.unpack(f"<{n}I", f"layer {i} parameters") if n else ()
        try:
            layers.append(LayerSpec.decode_params(layer_kind, tuple(values)))
        except (FormatError, InvalidInput) as e:
            raise FormatError(f"Layer {i}: {e}", layer_offset)

    try:
        model = ModelSpec(tuple(layers), tuple(input_shape), num_classes or None)
    except (FormatError, InvalidInput) as e:
        raise FormatError(f"Segment {index}: {e}", start)

    arrays = {}
    for i, layer in enumerate(model.layers):
        if layer.has_params:
            weight = reader.floats(int(np.prod(layer.weight_shape)), f"layer {i} weight")
            bias = reader.floats(int(np.prod(layer.bias_shape)), f"layer {i} bias")
            arrays[i] = (weight.reshape(layer.weight_shape), bias)
    return Segment(kind, tag, model, ParamStore(arrays))


def decode_segments(data: bytes) -> Tuple[List[Segment], Dict[str, Any]]:
    reader = _Reader(data)
    (magic,) = reader.unpack("<4s", "magic")
    if magic != MAGIC:
        raise FormatError(f"Bad model file magic {magic!r}", 0)
    (count,) = reader.unpack("<I", "segment count")
    if count == 0:
        raise FormatError("Model file holds no segments", 4)
    segments = [_decode_segment(reader, i) for i in range(count)]

    metadata: Dict[str, Any] = {}
    if reader.offset < len(data):
        if data[reader.offset:reader.offset + 4] != META_TAG:
            raise FormatError("Unexpected trailing bytes after the last segment", reader.offset)
        reader.offset += 4
        (length,) = reader.unpack("<I", "metadata length")
        if reader.offset + length != len(data):
            raise FormatError("Metadata block length does not match file size", reader.offset - 4)
        try:
            metadata = json.loads(data[reader.offset:].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"Malformed metadata block: {e}", reader.offset)
    return segments, metadata


def serialize(model: ModelSpec, params: ParamStore, metadata: Optional[Dict[str, Any]] = None) -> bytes:
    return encode_segments([Segment(SegmentKind.BACKBONE, 0, model, params)], metadata)


def deserialize(data: bytes) -> Tuple[ModelSpec, ParamStore]:
    segments, _ = decode_segments(data)
    if len(segments) != 1 or segments[0].kind != SegmentKind.BACKBONE:
        raise FormatError("Expected a single backbone segment; use decode_segments for exit models", 4)
    return segments[0].model, segments[0].params
