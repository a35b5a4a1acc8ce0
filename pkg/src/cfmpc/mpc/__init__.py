from .contacts import ContactPolicy, TrackedContact, reconcile_contacts
from .controller import (
    ControllerState,
    FeedbackSnapshot,
    MpcController,
    MpcSettings,
    reset_warm_start,
)
from .handoff import LatestValue
from .ocp import ContactDynamicsAction, build_problem, rollout_step
from .schedule import (
    AnyPhase,
    CirclePhase,
    HoldPhase,
    LinearPhase,
    PhaseBase,
    PhaseSchedule,
    PhaseScheduleSpec,
    run_phase_schedule,
)

__all__ = [
    "AnyPhase",
    "CirclePhase",
    "ContactDynamicsAction",
    "ContactPolicy",
    "ControllerState",
    "FeedbackSnapshot",
    "HoldPhase",
    "LatestValue",
    "LinearPhase",
    "MpcController",
    "MpcSettings",
    "PhaseBase",
    "PhaseSchedule",
    "PhaseScheduleSpec",
    "TrackedContact",
    "build_problem",
    "reconcile_contacts",
    "reset_warm_start",
    "rollout_step",
    "run_phase_schedule",
]
