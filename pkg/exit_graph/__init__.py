# Early-exit branches and model partitioning

from .placements import ExitPlacement, enumerate_placements
from .branches import (
    ExitBranch, BranchParams, ExitModel, ExitParams, DEFAULT_BOTTLENECK,
    attach_exits, strip_exits, build_branch, save_exit_model, load_exit_model
)
from .partition import (
    NodeRole, ForwardMode, Stage, PartitionPlan, StageParams, StageExecutor, StageOutput,
    MemoryBudgetReport, StageBudget, DEFAULT_EDGE_BUDGET_BYTES, DEFAULT_ROLES,
    partition, split_params, stage_segments, build_executors, run_plan,
    check_memory_budget, stage_model_bytes, write_plan, read_plan
)

__all__ = [
    "ExitPlacement", "enumerate_placements",
    "ExitBranch", "BranchParams", "ExitModel", "ExitParams", "DEFAULT_BOTTLENECK",
    "attach_exits", "strip_exits", "build_branch", "save_exit_model", "load_exit_model",
    "NodeRole", "ForwardMode", "Stage", "PartitionPlan", "StageParams", "StageExecutor", "StageOutput",
    "MemoryBudgetReport", "StageBudget", "DEFAULT_EDGE_BUDGET_BYTES", "DEFAULT_ROLES",
    "partition", "split_params", "stage_segments", "build_executors", "run_plan",
    "check_memory_budget", "stage_model_bytes", "write_plan", "read_plan"
]
