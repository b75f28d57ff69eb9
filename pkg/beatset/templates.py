"""Parametric class templates for the synthetic beat generator.

Every template is a sum of Gaussian bumps on the 260-sample window with the
R peak at sample 130.  A bump is ``(offset, width, amplitude)`` where
``offset`` is the distance in samples from the R peak and ``width`` the
standard deviation in samples.  The ``rr_prefix`` bump is the tail of the
previous beat's T wave: a short preceding RR interval (premature beats)
pulls it closer to the window centre.

The finished template is z-scored so that it matches the normalization the
model sees at ingestion.

| class | QRS width | T wave      | RR prefix offset |
|-------|-----------|-------------|------------------|
| N     | 4.0       | +0.30 @ +70 | -118             |
| SVEB  | 3.5       | +0.25 @ +58 | -92              |
| VEB   | 12.0      | -0.45 @ +78 | -124             |
| F     | 7.0       | +0.10 @ +72 | -106             |
| Q     | 10.0      | +0.35 @ +84 | -128             |
"""
from typing import Dict, List, Tuple

import numpy as np

from .records import AamiClass, BEAT_LENGTH, zscore

R_PEAK_INDEX = BEAT_LENGTH // 2

Bump = Tuple[float, float, float]

TEMPLATE_PARAMS: Dict[AamiClass, Dict[str, object]] = {
    AamiClass.N: {
        "waves": [(-62.0, 8.0, 0.15), (-9.0, 2.5, -0.15), (0.0, 4.0, 1.00),
                  (9.0, 3.0, -0.25), (70.0, 16.0, 0.30)],
        "rr_prefix": (-118.0, 12.0, 0.20),
    },
    AamiClass.SVEB: {
        "waves": [(-44.0, 6.0, -0.12), (-7.0, 2.0, -0.10), (0.0, 3.5, 1.00),
                  (7.0, 2.5, -0.20), (58.0, 13.0, 0.25)],
        "rr_prefix": (-92.0, 12.0, 0.35),
    },
    AamiClass.VEB: {
        "waves": [(0.0, 12.0, 1.10), (20.0, 10.0, -0.55), (78.0, 20.0, -0.45)],
        "rr_prefix": (-124.0, 14.0, 0.15),
    },
    AamiClass.F: {
        "waves": [(-56.0, 8.0, 0.08), (0.0, 7.0, 0.90), (12.0, 6.0, -0.35),
                  (72.0, 18.0, 0.10)],
        "rr_prefix": (-106.0, 12.0, 0.25),
    },
    AamiClass.Q: {
        "waves": [(-15.0, 1.2, 0.60), (0.0, 10.0, 0.70), (16.0, 8.0, -0.20),
                  (84.0, 22.0, 0.35)],
        "rr_prefix": (-128.0, 16.0, 0.10),
    },
}


def _bumps(cls: AamiClass) -> List[Bump]:
    params = TEMPLATE_PARAMS[cls]
    return list(params["waves"]) + [params["rr_prefix"]]


def class_template(cls: AamiClass) -> np.ndarray:
    t = np.arange(BEAT_LENGTH, dtype=np.float64) - R_PEAK_INDEX
    signal = np.zeros(BEAT_LENGTH, dtype=np.float64)
    for offset, width, amplitude in _bumps(AamiClass(cls)):
        signal += amplitude * np.exp(-0.5 * ((t - offset) / width) ** 2)
    return zscore(signal)
