from __future__ import annotations

from pathlib import Path
from typing import Annotated, Iterable, Literal

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter, model_validator

from cfmpc.config import apply_overrides, read_yaml, validate
from cfmpc.costs import CostConfig
from cfmpc.dynamics import RobotSpec
from cfmpc.errors import ConfigError
from cfmpc.mpc import MpcSettings, PhaseScheduleSpec
from cfmpc.sim.environment import EnvironmentObject, PushDisturbance
from cfmpc.sim.metrics import Threshold
from cfmpc.sim.oracle import OracleSettings
from cfmpc.solver import LinearQuadraticAction, OcpProblem, SolverSettings

# ############################################################
# Scenario document
# ############################################################


class PlantSettings(BaseModel):
    dt_s: float = Field(default=0.001, gt=0.0)
    joint_damping_nm_s: float | None = Field(default=None, ge=0.0, description="overrides the robot file's damping")


class ScenarioConfig(BaseModel):
    """Closed-loop run: robot, environment, scripted pushes, phases, costs, solver and oracle settings."""

    kind: Literal["scenario"] = "scenario"
    format_version: Literal[1]
    name: str
    robot: str = Field(description="robot document, relative to this file or the config directory")
    initial_q_rad: list[float]
    duration_s: float = Field(gt=0.0)
    seed: int = 0
    plant: PlantSettings = Field(default_factory=PlantSettings)
    environment: list[EnvironmentObject] = Field(default_factory=list)
    disturbances: list[PushDisturbance] = Field(default_factory=list)
    schedule: PhaseScheduleSpec = Field(default_factory=PhaseScheduleSpec)
    cost: CostConfig
    mpc: MpcSettings = Field(default_factory=MpcSettings)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    thresholds: list[Threshold] = Field(default_factory=list)
    max_stalls: int = Field(default=50, ge=0)

    @model_validator(mode="after")
    def _check_rates(self) -> ScenarioConfig:
        if self.mpc.period_s < self.plant.dt_s:
            raise ValueError("the controller cannot run faster than the plant")
        return self


# ############################################################
# Solver fixture document
# ############################################################


class LqrFixture(BaseModel):
    """Time-invariant linear-quadratic OCP with optional control bounds, checked against Riccati."""

    kind: Literal["lqr"] = "lqr"
    format_version: Literal[1]
    name: str
    A: list[list[float]]
    B: list[list[float]]
    Q: list[list[float]]
    R: list[list[float]]
    Qf: list[list[float]]
    x0: list[float]
    horizon: int = Field(ge=1)
    dt_s: float = Field(gt=0.0)
    u_min: list[float] | None = None
    u_max: list[float] | None = None
    solver: SolverSettings = Field(default_factory=SolverSettings)

    def actions(self) -> tuple[list[LinearQuadraticAction], LinearQuadraticAction]:
        running = [LinearQuadraticAction(self.A, self.B, self.Q, self.R) for _ in range(self.horizon)]
        terminal = LinearQuadraticAction(self.A, self.B, self.Qf, self.R, terminal=True)
        return running, terminal

    def problem(self) -> OcpProblem:
        running, terminal = self.actions()
        nu = running[0].nu
        return OcpProblem(
            x0=np.array(self.x0),
            running=tuple(running),
            terminal=terminal,
            u_min=np.full(nu, -np.inf) if self.u_min is None else np.array(self.u_min),
            u_max=np.full(nu, np.inf) if self.u_max is None else np.array(self.u_max),
            dt=self.dt_s,
        )


AnyDocument = Annotated[RobotSpec | ScenarioConfig | LqrFixture, Field(discriminator="kind")]
_DOCUMENT = TypeAdapter(AnyDocument)


def load_any(path: str | Path, overrides: Iterable[str] = ()) -> RobotSpec | ScenarioConfig | LqrFixture:
    raw = apply_overrides(read_yaml(path), overrides)
    if raw.get("format_version") != 1:
        raise ConfigError(f"{path}: unsupported format_version {raw.get('format_version')!r}")
    return validate(raw, _DOCUMENT, str(path))


def load_scenario(path: str | Path, overrides: Iterable[str] = ()) -> ScenarioConfig:
    document = load_any(path, overrides)
    if not isinstance(document, ScenarioConfig):
        raise ConfigError(f"{path} is a '{document.kind}' document, not a scenario")
    return document
