from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from common.errors import InvalidInput
from exit_graph.partition import NodeRole, PartitionPlan

DEFAULT_THROUGHPUT = {
    NodeRole.EDGE: 64e6,
    NodeRole.FOG: 2e9,
    NodeRole.CLOUD: 50e9,
}


@dataclass(frozen=True)
class LinkProfile:
    """Fixed delay plus payload/bandwidth per stage boundary, FLOP/s per node role.

    The last delay and bandwidth apply to any boundary beyond the listed ones.
    """
    delay_s: Tuple[float, ...] = (0.02, 0.05)
    bandwidth_bps: Tuple[float, ...] = (1e6, 1e8)
    throughput_flops: Dict[NodeRole, float] = field(default_factory=lambda: dict(DEFAULT_THROUGHPUT))

    def __post_init__(self):
        if not self.delay_s or not self.bandwidth_bps:
            raise InvalidInput("A link profile needs at least one delay and one bandwidth")
        if any(d < 0 for d in self.delay_s) or any(b <= 0 for b in self.bandwidth_bps):
            raise InvalidInput("Delays must be non-negative and bandwidths positive")
        if any(v <= 0 for v in self.throughput_flops.values()):
            raise InvalidInput("Node throughput must be positive")

    def hop(self, boundary: int) -> Tuple[float, float]:
        return (self.delay_s[min(boundary, len(self.delay_s) - 1)],
                self.bandwidth_bps[min(boundary, len(self.bandwidth_bps) - 1)])

    def transfer_time(self, boundary: int, payload_bytes: int) -> float:
        delay, bandwidth = self.hop(boundary)
        return delay + 8.0 * payload_bytes / bandwidth


def beat_latency(decision, plan: PartitionPlan, links: Optional[LinkProfile] = None) -> float:
    """Seconds from beat arrival to its exit: stage compute plus every forwarded payload."""
    links = links or LinkProfile()
    seconds = 0.0
    for stage in plan.stages[:decision.exit_stage + 1]:
        throughput = links.throughput_flops.get(stage.role)
        if throughput is None:
            raise InvalidInput(f"No throughput configured for role {stage.role.label}")
        if stage.index < decision.exit_stage:
            seconds += stage.forward_flops / throughput
            seconds += links.transfer_time(stage.index, stage.payload_bytes)
        else:
            seconds += stage.exit_flops / throughput
    return seconds
