from __future__ import annotations

import bisect
import logging
from abc import ABCMeta, abstractmethod
from typing import Annotated, Any, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from cfmpc.costs import CostConfig
from cfmpc.costs.config import Selector3, Vector3
from cfmpc.errors import ConfigError

logger = logging.getLogger(__name__)

# ############################################################
# Phase kinds
# ############################################################


class PhaseBase(BaseModel, metaclass=ABCMeta):
    model_config = ConfigDict(frozen=True)

    name: str
    start_s: float = Field(ge=0.0)
    rpy_rad: Vector3 | None = Field(default=None, description="None keeps the initial end-effector orientation")
    lambda_des_n: Vector3 | None = None
    position_axes: Selector3 | None = None
    cost_overrides: dict[str, Any] = Field(default_factory=dict, description="other CostConfig fields for this phase")

    @abstractmethod
    def position(self, tau: float, start: np.ndarray) -> np.ndarray:
        """Desired position `tau` seconds into the phase, starting from `start`."""


class HoldPhase(PhaseBase):
    kind: Literal["hold"] = "hold"
    position_m: Vector3 | None = Field(default=None, description="None holds the pose reached by the previous phase")

    def position(self, tau: float, start: np.ndarray) -> np.ndarray:
        return start if self.position_m is None else np.array(self.position_m)


class LinearPhase(PhaseBase):
    """Straight-line interpolation from the previous phase's end pose, then hold at the target."""

    kind: Literal["linear"] = "linear"
    target_m: Vector3
    duration_s: float = Field(gt=0.0)

    def position(self, tau: float, start: np.ndarray) -> np.ndarray:
        s = min(max(tau / self.duration_s, 0.0), 1.0)
        return start + s * (np.array(self.target_m) - start)


class CirclePhase(PhaseBase):
    """Circle in the world yz-plane; x stays at the centre's value."""

    kind: Literal["circle"] = "circle"
    radius_m: float = Field(gt=0.0)
    period_s: float = Field(gt=0.0)
    center_m: Vector3 | None = Field(
        default=None, description="None places the centre so the circle starts at the previous end pose"
    )

    def center(self, start: np.ndarray) -> np.ndarray:
        if self.center_m is not None:
            return np.array(self.center_m)
        return start - np.array([0.0, self.radius_m, 0.0])

    def position(self, tau: float, start: np.ndarray) -> np.ndarray:
        angle = 2.0 * np.pi * tau / self.period_s
        return self.center(start) + self.radius_m * np.array([0.0, np.cos(angle), np.sin(angle)])


AnyPhase = Annotated[HoldPhase | LinearPhase | CirclePhase, Field(discriminator="kind")]


class PhaseScheduleSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    phases: list[AnyPhase] = Field(default_factory=list)

    @field_validator("phases")
    @classmethod
    def _sorted(cls, phases: list[PhaseBase]) -> list[PhaseBase]:
        starts = [p.start_s for p in phases]
        if starts != sorted(starts):
            raise ValueError("phase start times must be sorted")
        if len({p.name for p in phases}) != len(phases):
            raise ValueError("phase names must be unique")
        return phases


# ############################################################
# Resolved schedule
# ############################################################


class PhaseSchedule:
    """Phases resolved against the initial end-effector pose and a base cost configuration.

    Index -1 is the initial hold before the first phase starts.
    """

    def __init__(
        self,
        spec: PhaseScheduleSpec,
        base: CostConfig,
        initial_position: np.ndarray,
        initial_rpy: np.ndarray,
    ):
        self.phases: tuple[PhaseBase, ...] = tuple(spec.phases)
        self.starts = [p.start_s for p in self.phases]
        self.initial_position = np.asarray(initial_position, dtype=float)
        self.initial_rpy = tuple(float(a) for a in initial_rpy)
        self.base = base.model_copy(update={"p_des_m": tuple(self.initial_position), "rpy_des_rad": self.initial_rpy})
        self._configs: list[CostConfig] = []
        self._start_positions: list[np.ndarray] = []
        position = self.initial_position
        for i, phase in enumerate(self.phases):
            self._configs.append(self._phase_config(phase))
            self._start_positions.append(position)
            end = self.starts[i + 1] if i + 1 < len(self.phases) else None
            if end is not None:
                position = phase.position(end - phase.start_s, position)

    def _phase_config(self, phase: PhaseBase) -> CostConfig:
        update: dict[str, Any] = dict(self.base.model_dump())
        update.update(phase.cost_overrides)
        update["rpy_des_rad"] = phase.rpy_rad if phase.rpy_rad is not None else self.initial_rpy
        if phase.lambda_des_n is not None:
            update["lambda_des_n"] = phase.lambda_des_n
        if phase.position_axes is not None:
            update["position_axes"] = phase.position_axes
        try:
            return CostConfig.model_validate(update)
        except ValueError as e:
            raise ConfigError(f"phase '{phase.name}' has an invalid cost configuration:\n{e}") from e

    def phase_index(self, t: float) -> int:
        return bisect.bisect_right(self.starts, t) - 1

    def phase_name(self, index: int) -> str:
        return "initial" if index < 0 else self.phases[index].name

    def phase_config(self, index: int) -> CostConfig:
        """Cost configuration of a phase, before the per-cycle position target is applied."""
        return self.base if index < 0 else self._configs[index]

    def target(self, t: float) -> np.ndarray:
        index = self.phase_index(t)
        if index < 0:
            return self.initial_position
        phase = self.phases[index]
        return phase.position(t - phase.start_s, self._start_positions[index])

    def cost_at(self, t: float) -> CostConfig:
        index = self.phase_index(t)
        if index < 0:
            return self.base
        return self._configs[index].model_copy(update={"p_des_m": tuple(float(p) for p in self.target(t))})


def run_phase_schedule(schedule: PhaseSchedule, times: Sequence[float]) -> list[CostConfig]:
    """Cost configuration applied at each cycle time; logs each phase switch once."""
    configs = []
    current = None
    for t in times:
        index = schedule.phase_index(t)
        if index != current:
            logger.info(f"🔀 phase '{schedule.phase_name(index)}' from t={t:.3f}s")
            current = index
        configs.append(schedule.cost_at(t))
    return configs
