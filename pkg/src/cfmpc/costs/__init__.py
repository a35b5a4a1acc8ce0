from .config import CostConfig
from .terms import (
    COST_REGISTRY,
    ContactForceTerm,
    ContactState,
    ControlTerm,
    CostEval,
    CostTerm,
    ForceCostEval,
    MotionTerm,
    StageKinematics,
    StateLimitTerm,
    build_cost_terms,
    control_cost,
    force_barrier_cost,
    force_regulation_cost,
    motion_cost,
    state_limit_cost,
    total_running_cost,
    total_terminal_cost,
)

__all__ = [
    "COST_REGISTRY",
    "ContactForceTerm",
    "ContactState",
    "ControlTerm",
    "CostConfig",
    "CostEval",
    "CostTerm",
    "ForceCostEval",
    "MotionTerm",
    "StageKinematics",
    "StateLimitTerm",
    "build_cost_terms",
    "control_cost",
    "force_barrier_cost",
    "force_regulation_cost",
    "motion_cost",
    "state_limit_cost",
    "total_running_cost",
    "total_terminal_cost",
]
