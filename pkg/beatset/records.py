import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from common.errors import InvalidInput
from common.logger import logger

BEAT_LENGTH = 260
MITBIH_RATE_HZ = 360.0


class AamiClass(IntEnum):
    N = 0
    SVEB = 1
    VEB = 2
    F = 3
    Q = 4

    @classmethod
    def parse(cls, value) -> "AamiClass":
        if isinstance(value, AamiClass):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise InvalidInput(f"Unknown AAMI class '{value}'")
        try:
            return cls(int(value))
        except ValueError:
            raise InvalidInput(f"Unknown AAMI class index {value}")


NUM_CLASSES = len(AamiClass)


@dataclass(frozen=True, eq=False)
class BeatRecord:
    samples: np.ndarray
    label: AamiClass
    source_id: str
    beat_index: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float32)
        if samples.ndim != 1 or samples.shape[0] != BEAT_LENGTH:
            raise InvalidInput(
                f"Beat {self.source_id}#{self.beat_index} has {samples.size} samples, expected {BEAT_LENGTH}"
            )
        if not np.all(np.isfinite(samples)):
            raise InvalidInput(f"Beat {self.source_id}#{self.beat_index} contains non-finite samples")
        if self.beat_index < 0:
            raise InvalidInput(f"beat_index must be non-negative, got {self.beat_index}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "label", AamiClass.parse(self.label))

    @property
    def key(self) -> Tuple[str, int]:
        return (self.source_id, self.beat_index)

    @property
    def beat_id(self) -> str:
        return f"{self.source_id}:{self.beat_index}"

    def __eq__(self, other) -> bool:
        if not isinstance(other, BeatRecord):
            return NotImplemented
        return (self.key == other.key and self.label == other.label
                and self.samples.tobytes() == other.samples.tobytes())

    def __hash__(self) -> int:
        return hash(self.key)


@dataclass(frozen=True)
class DatasetSplit:
    train: Tuple[BeatRecord, ...]
    validation: Tuple[BeatRecord, ...]
    test: Tuple[BeatRecord, ...]
    seed: int


def _check_signal(signal: Sequence[float]) -> np.ndarray:
    values = np.asarray(signal, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise InvalidInput("Signal must be a non-empty one-dimensional sequence")
    if not np.all(np.isfinite(values)):
        raise InvalidInput("Signal contains non-finite samples")
    return values


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def resample(signal: Sequence[float], rate_in: float, rate_out: float) -> np.ndarray:
    """Linearly interpolate ``signal`` from ``rate_in`` to ``rate_out`` Hz.

    The output has round(len * rate_out / rate_in) samples spread evenly
    over the input span, so the first and last input samples are kept.
    """
    if rate_in <= 0 or rate_out <= 0:
        raise InvalidInput(f"Sampling rates must be positive, got {rate_in} -> {rate_out}")
    values = _check_signal(signal)

    n_in = values.size
    n_out = _round_half_up(n_in * rate_out / rate_in)
    if n_out < 1:
        raise InvalidInput(f"Resampling {n_in} samples from {rate_in} Hz to {rate_out} Hz leaves no samples")
    if n_out == n_in:
        return values.copy()
    if n_out == 1:
        return values[:1].copy()

    positions = np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))
    positions[-1] = n_in - 1
    return np.interp(positions, np.arange(n_in, dtype=np.float64), values)


def zscore(samples: Sequence[float]) -> np.ndarray:
    values = _check_signal(samples)
    std = values.std()
    if std == 0.0:
        return np.zeros_like(values, dtype=np.float32)
    return ((values - values.mean()) / std).astype(np.float32)


def normalize_beats(beats: Sequence[BeatRecord]) -> List[BeatRecord]:
    return [
        BeatRecord(zscore(b.samples), b.label, b.source_id, b.beat_index)
        for b in beats
    ]


def class_counts(beats: Sequence[BeatRecord]) -> Dict[AamiClass, int]:
    counts = {cls: 0 for cls in AamiClass}
    for beat in beats:
        counts[beat.label] += 1
    return counts


def split(beats: Sequence[BeatRecord], ratios: Tuple[float, float, float] = (0.7, 0.15, 0.15),
          seed: int = 0) -> DatasetSplit:
    """Stratified, seeded train/validation/test split.

    Per class: n_train = round(n * r_train), n_val = round(n * r_val) and
    the test set takes the remainder (half-up rounding).
    """
    if len(ratios) != 3:
        raise InvalidInput(f"Expected three split ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidInput(f"Split ratios must be non-negative and sum to 1, got {tuple(ratios)}")

    keys = [b.key for b in beats]
    if len(set(keys)) != len(keys):
        raise InvalidInput("Beat collection contains duplicate (source_id, beat_index) keys")

    rng = np.random.default_rng(seed)
    train: List[BeatRecord] = []
    validation: List[BeatRecord] = []
    test: List[BeatRecord] = []

    for cls in AamiClass:
        members = [b for b in beats if b.label == cls]
        if not members:
            continue
        order = rng.permutation(len(members))
        n = len(members)
        n_train = min(n, _round_half_up(n * ratios[0]))
        n_val = min(n - n_train, _round_half_up(n * ratios[1]))
        shuffled = [members[i] for i in order]
        train.extend(shuffled[:n_train])
        validation.extend(shuffled[n_train:n_train + n_val])
        test.extend(shuffled[n_train + n_val:])
        logger.debug(f"Split class {cls.name}: {n_train}/{n_val}/{n - n_train - n_val}")

    return DatasetSplit(tuple(train), tuple(validation), tuple(test), seed)
