"""Reader and writer for the ``.beats`` container.

Layout (little-endian)::

    16-byte header   magic b"ECGBEATS" | u16 version | u16 flags | u32 reserved
    u32              beat count
    per beat         u8 class | u32 id length | id bytes (utf-8) | u32 beat_index
                     | 260 x f32 samples
    optional trailer b"META" | u32 length | provenance JSON (utf-8)

Flag bit 0 marks beats that were already z-score normalized.
"""
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from common.artifacts import dumps_canonical, write_csv_report
from common.errors import FormatError
from common.logger import logger
from .records import AamiClass, BEAT_LENGTH, BeatRecord, normalize_beats

MAGIC = b"ECGBEATS"
VERSION = 1
FLAG_NORMALIZED = 0x0001
HEADER = struct.Struct("<8sHHI")
META_TAG = b"META"
_SAMPLE_BYTES = BEAT_LENGTH * 4


@dataclass
class BeatFileHeader:
    version: int = VERSION
    flags: int = 0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def normalized(self) -> bool:
        return bool(self.flags & FLAG_NORMALIZED)


def encode_beats(beats: Sequence[BeatRecord], normalized: bool = True,
                 metadata: Optional[Dict[str, Any]] = None) -> bytes:
    flags = FLAG_NORMALIZED if normalized else 0
    chunks = [HEADER.pack(MAGIC, VERSION, flags, 0), struct.pack("<I", len(beats))]
    for beat in beats:
        source = beat.source_id.encode("utf-8")
        chunks.append(struct.pack("<BI", int(beat.label), len(source)))
        chunks.append(source)
        chunks.append(struct.pack("<I", beat.beat_index))
        chunks.append(np.asarray(beat.samples, dtype="<f4").tobytes())
    if metadata:
        blob = dumps_canonical(metadata).encode("utf-8")
        chunks.append(META_TAG + struct.pack("<I", len(blob)) + blob)
    return b"".join(chunks)


def _unpack(fmt: str, data: bytes, offset: int, what: str) -> Tuple[tuple, int]:
    size = struct.calcsize(fmt)
    if offset + size > len(data):
        raise FormatError(f"Truncated beat file while reading {what}", offset)
    return struct.unpack_from(fmt, data, offset), offset + size


def decode_beats(data: bytes) -> Tuple[List[BeatRecord], BeatFileHeader]:
    if len(data) < HEADER.size:
        raise FormatError("Beat file shorter than its header", len(data))
    magic, version, flags, _ = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"Bad beat file magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"Unsupported beat file version {version}", 8)

    (count,), offset = _unpack("<I", data, HEADER.size, "beat count")
    beats: List[BeatRecord] = []
    for i in range(count):
        (label, id_len), offset = _unpack("<BI", data, offset, f"beat {i} header")
        if label >= len(AamiClass):
            raise FormatError(f"Invalid class byte {label} in beat {i}", offset - 5)
        if offset + id_len > len(data):
            raise FormatError(f"Truncated source id in beat {i}", offset)
        try:
            source_id = data[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"Source id of beat {i} is not UTF-8: {e}", offset)
        offset += id_len
        (beat_index,), offset = _unpack("<I", data, offset, f"beat {i} index")
        if offset + _SAMPLE_BYTES > len(data):
            raise FormatError(f"Truncated samples in beat {i}", offset)
        samples = np.frombuffer(data, dtype="<f4", count=BEAT_LENGTH, offset=offset).astype(np.float32)
        offset += _SAMPLE_BYTES
        try:
            beats.append(BeatRecord(samples, AamiClass(label), source_id, beat_index))
        except ValueError as e:
            raise FormatError(f"Invalid beat {i}: {e}", offset - _SAMPLE_BYTES)

    header = BeatFileHeader(version=version, flags=flags)
    if offset < len(data):
        if data[offset:offset + 4] != META_TAG:
            raise FormatError("Unexpected trailing bytes after beats", offset)
        (length,), body = _unpack("<I", data, offset + 4, "metadata length")
        if body + length != len(data):
            raise FormatError("Metadata block length does not match file size", offset + 4)
        try:
            header.metadata = json.loads(data[body:body + length].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise FormatError(f"Malformed metadata block: {e}", body)
    return beats, header


def write_beats(path: Union[str, Path], beats: Sequence[BeatRecord], normalized: bool = True,
                metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_beats(beats, normalized, metadata))
    logger.info(f"Wrote {len(beats)} beats to {path}")
    return path


def read_beats(path: Union[str, Path], normalize: bool = True) -> Tuple[List[BeatRecord], BeatFileHeader]:
    """Load a beat file; z-score the beats unless the header says it was done."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Beat file {path} not found")
    with open(path, "rb") as f:
        beats, header = decode_beats(f.read())
    if normalize and not header.normalized:
        logger.info(f"Applying z-score normalization to {len(beats)} beats from {path}")
        beats = normalize_beats(beats)
        header.flags |= FLAG_NORMALIZED
    logger.debug(f"Loaded {len(beats)} beats from {path}")
    return beats, header


def export_csv(path: Union[str, Path], beats: Sequence[BeatRecord],
               metadata: Optional[Dict[str, Any]] = None) -> Path:
    sample_columns = [f"s{i}" for i in range(BEAT_LENGTH)]
    frame = pd.DataFrame(np.stack([b.samples for b in beats]) if beats else
                         np.zeros((0, BEAT_LENGTH), dtype=np.float32), columns=sample_columns)
    frame.insert(0, "label", [b.label.name for b in beats])
    frame.insert(0, "beat_index", [b.beat_index for b in beats])
    frame.insert(0, "source_id", [b.source_id for b in beats])
    return write_csv_report(path, frame, metadata)
