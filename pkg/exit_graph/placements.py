from dataclasses import dataclass
from itertools import combinations
from typing import List, Tuple

from common.errors import InvalidInput

MAX_EXITS = 2


@dataclass(frozen=True, order=True)
class ExitPlacement:
    """One or two early-exit boundaries; boundary k sits after conv block k."""
    boundaries: Tuple[int, ...]

    def __post_init__(self):
        boundaries = tuple(int(b) for b in self.boundaries)
        if not 1 <= len(boundaries) <= MAX_EXITS:
            raise InvalidInput(f"A placement holds 1 or 2 exits, got {len(boundaries)}")
        if any(b < 1 for b in boundaries) or any(a >= b for a, b in zip(boundaries, boundaries[1:])):
            raise InvalidInput(f"Exit boundaries must be positive and strictly increasing, got {boundaries}")
        object.__setattr__(self, "boundaries", boundaries)

    @property
    def num_exits(self) -> int:
        return len(self.boundaries)

    @property
    def label(self) -> str:
        return ",".join(str(b) for b in self.boundaries)

    def validate_for(self, num_conv_layers: int) -> None:
        if self.boundaries[-1] > num_conv_layers - 1:
            raise InvalidInput(
                f"Placement {self.label} does not fit a model with {num_conv_layers} conv layers"
            )

    @classmethod
    def parse(cls, text: str) -> "ExitPlacement":
        try:
            return cls(tuple(int(part) for part in str(text).split(",") if part.strip()))
        except ValueError:
            raise InvalidInput(f"Cannot parse placement '{text}'; use e.g. '2' or '2,4'")


def enumerate_placements(num_conv_layers: int, num_exits: int) -> List[ExitPlacement]:
    """All placements of ``num_exits`` exits on a model with L conv layers.

    L - 1 single-exit positions and (L - 2)(L - 1) / 2 dual-exit pairs.
    """
    if num_exits not in (1, 2):
        raise InvalidInput(f"num_exits must be 1 or 2, got {num_exits}")
    if num_conv_layers < num_exits + 1:
        raise InvalidInput(f"{num_exits} exit(s) need at least {num_exits + 1} conv layers, got {num_conv_layers}")
    return [ExitPlacement(combo) for combo in combinations(range(1, num_conv_layers), num_exits)]
