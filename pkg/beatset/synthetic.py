from typing import List

import numpy as np

from common.errors import InvalidInput
from common.logger import logger
from .records import AamiClass, BeatRecord
from .templates import class_template


def generate_synthetic(count_per_class: int, seed: int = 0, noise_sigma: float = 0.05) -> List[BeatRecord]:
    """Deterministic stand-in for segmented MIT-BIH beats.

    Returns ``5 * count_per_class`` beats, class by class, each the class
    template plus white Gaussian noise of standard deviation ``noise_sigma``.
    """
    if count_per_class < 1:
        raise InvalidInput(f"count_per_class must be at least 1, got {count_per_class}")
    if noise_sigma < 0:
        raise InvalidInput(f"noise_sigma must be non-negative, got {noise_sigma}")

    rng = np.random.default_rng(seed)
    source_id = f"synthetic-{seed}"
    beats: List[BeatRecord] = []

    for cls in AamiClass:
        template = class_template(cls).astype(np.float64)
        noise = rng.normal(0.0, 1.0, size=(count_per_class, template.size)) * noise_sigma
        for row in noise:
            samples = (template + row).astype(np.float32)
            beats.append(BeatRecord(samples, cls, source_id, len(beats)))

    logger.info(f"Generated {len(beats)} synthetic beats ({count_per_class} per class, noise {noise_sigma})")
    return beats
