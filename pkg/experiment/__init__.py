# Run configuration and verification checks

from .config import (
    RunConfig, DEFAULT_CONFIG, DEFAULT_CONFIG_PATH, threshold_range, parse_threshold_spec
)
from .verification import CheckResult, verify_plan, check_serialization, check_pass_through, check_sweep

__all__ = [
    "RunConfig", "DEFAULT_CONFIG", "DEFAULT_CONFIG_PATH", "threshold_range", "parse_threshold_spec",
    "CheckResult", "verify_plan", "check_serialization", "check_pass_through", "check_sweep"
]
