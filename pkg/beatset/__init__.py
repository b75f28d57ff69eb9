# Beat-level ECG dataset handling

from .records import (
    AamiClass, BeatRecord, DatasetSplit, BEAT_LENGTH, NUM_CLASSES,
    resample, zscore, normalize_beats, split, class_counts
)
from .synthetic import generate_synthetic
from .beat_file import read_beats, write_beats, encode_beats, decode_beats, export_csv

__all__ = [
    "AamiClass", "BeatRecord", "DatasetSplit", "BEAT_LENGTH", "NUM_CLASSES",
    "resample", "zscore", "normalize_beats", "split", "class_counts",
    "generate_synthetic", "read_beats", "write_beats", "encode_beats",
    "decode_beats", "export_csv"
]
