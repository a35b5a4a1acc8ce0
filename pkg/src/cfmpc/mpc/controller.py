from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from cfmpc.contact import ContactFeedback, ContactParams, spring_force
from cfmpc.costs import CostConfig
from cfmpc.dynamics import JointState, RobotModel, gravity_torque
from cfmpc.errors import InvalidArgumentError
from cfmpc.mpc.contacts import ContactPolicy, TrackedContact, reconcile_contacts
from cfmpc.mpc.ocp import build_problem
from cfmpc.mpc.schedule import PhaseSchedule
from cfmpc.solver import BoxFDDP, SolverSettings, SolverStats, Trajectory

logger = logging.getLogger(__name__)


class MpcSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon: int = Field(default=5, ge=1)
    dt_s: float = Field(default=0.025, gt=0.0)
    rate_hz: float = Field(default=250.0, gt=0.0)
    max_iters: int = Field(default=5, ge=1)
    staleness_periods: int = Field(default=4, ge=1)
    contact_feedback: bool = Field(default=True, description="false drops lambda and the contact costs from the OCP")
    solver: SolverSettings = Field(default_factory=SolverSettings)
    contacts: ContactPolicy = Field(default_factory=ContactPolicy)

    @property
    def period_s(self) -> float:
        return 1.0 / self.rate_hz


@dataclass(frozen=True, eq=False)
class FeedbackSnapshot:
    timestamp: float
    state: JointState
    contacts: tuple[ContactFeedback, ...] = ()


@dataclass(frozen=True, eq=False)
class ControllerState:
    warm_start: Trajectory | None = None
    contacts: tuple[TrackedContact, ...] = ()
    cost: CostConfig | None = None
    phase: int = -1
    cycle: int = 0
    command: np.ndarray | None = None
    last_timestamp: float | None = None
    fault: bool = False
    stalls: int = 0
    # spring-model force of each active contact at the first predicted state
    predicted_forces: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def active_contacts(self) -> tuple[ContactParams, ...]:
        return tuple(c.params for c in self.contacts)


def reset_warm_start(model: RobotModel, x: np.ndarray, horizon: int) -> Trajectory:
    """States pinned at x, controls at the (bounded) gravity compensation of x."""
    q = np.asarray(x, dtype=float)[: model.n]
    u = np.clip(gravity_torque(model, q), model.u_min, model.u_max)
    return Trajectory.constant(x, u, horizon)


class MpcController:
    """Receding-horizon loop: one `step` per control tick, state carried in immutable `ControllerState`s."""

    def __init__(self, model: RobotModel, schedule: PhaseSchedule, settings: MpcSettings):
        self.model = model
        self.schedule = schedule
        self.settings = settings
        self.solver = BoxFDDP(settings.solver)

    def initial_state(self) -> ControllerState:
        return ControllerState()

    def reset_warm_start(self, x: np.ndarray) -> Trajectory:
        return reset_warm_start(self.model, x, self.settings.horizon)

    def step(
        self, state: ControllerState, snapshot: FeedbackSnapshot, now: float | None = None
    ) -> tuple[np.ndarray, ControllerState, SolverStats | None]:
        """Solve the OCP for one snapshot; returns the command, the next controller state and the solver stats."""
        if state.last_timestamp is not None and snapshot.timestamp < state.last_timestamp:
            raise InvalidArgumentError(
                f"snapshot at t={snapshot.timestamp} is older than the previous one at t={state.last_timestamp}"
            )
        settings = self.settings
        now = snapshot.timestamp if now is None else now
        x = snapshot.state.as_vector()
        q = snapshot.state.q
        gravity = np.clip(gravity_torque(self.model, q), self.model.u_min, self.model.u_max)

        if now - snapshot.timestamp > settings.staleness_periods * settings.period_s:
            if not state.fault:
                logger.warning(f"⚠️ feedback is {now - snapshot.timestamp:.3f}s old; holding the last command")
            command = state.command if state.command is not None else gravity
            return command, replace(state, fault=True, cycle=state.cycle + 1), None

        phase = self.schedule.phase_index(snapshot.timestamp)
        if phase != state.phase:
            logger.info(f"🔀 phase '{self.schedule.phase_name(phase)}' at t={snapshot.timestamp:.3f}s")
        cost = self.schedule.cost_at(snapshot.timestamp).model_copy(update={"u_ref_nm": tuple(gravity)})

        if settings.contact_feedback:
            tracked, rebuild = reconcile_contacts(
                state.contacts, snapshot.contacts, self.model, q, snapshot.timestamp, settings.contacts
            )
        else:
            tracked, rebuild = (), False
            cost = cost.without_contact_costs()
        contacts = tuple(c.params for c in tracked)

        problem = build_problem(self.model, x, cost, contacts, settings.horizon, settings.dt_s, settings.solver)
        warm_start = state.warm_start
        if rebuild or warm_start is None or not warm_start.matches(problem):
            if rebuild:
                logger.info(f"🔧 OCP rebuilt with {len(contacts)} contact(s) on links {[c.link for c in contacts]}")
            warm_start = self.reset_warm_start(x)

        trajectory, stats = self.solver.solve(problem, warm_start, max_iters=settings.max_iters)
        if stats.stalled:
            command = state.command if state.command is not None else gravity
            next_warm_start = warm_start.shifted()
        else:
            command = np.clip(trajectory.us[0], self.model.u_min, self.model.u_max)
            next_warm_start = trajectory.shifted()

        # a stalled solve keeps predicting from the previously accepted plan
        plan = warm_start if stats.stalled else trajectory
        predicted_q = plan.xs[1, : self.model.n]
        predicted = {c.link: spring_force(c, self.model, predicted_q) for c in contacts}
        next_state = replace(
            state,
            warm_start=next_warm_start,
            contacts=tracked,
            cost=cost,
            phase=phase,
            cycle=state.cycle + 1,
            command=command,
            last_timestamp=snapshot.timestamp,
            fault=False,
            stalls=state.stalls + int(stats.stalled),
            predicted_forces=predicted,
        )
        return command, next_state, stats
