from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from cfmpc.utils import rotation_from_rpy

Vector3 = tuple[float, float, float]
Selector3 = tuple[Literal[0, 1], Literal[0, 1], Literal[0, 1]]


class CostConfig(BaseModel):
    """Gains, targets and link sets of the OCP cost.

    Gains, sets and limits carry no defaults: every value comes from the scenario file.
    """

    model_config = ConfigDict(frozen=True)

    c_v: float = Field(ge=0.0, description="joint velocity penalty")
    c_p: float = Field(ge=0.0, description="end-effector position gain")
    c_r: float = Field(ge=0.0, description="end-effector orientation gain")
    c_u: float = Field(ge=0.0, description="control regularization gain")
    c_lambda: float = Field(ge=0.0, description="contact force gain (barrier and regulation)")
    # targets are rewritten every cycle by the phase schedule
    p_des_m: Vector3 = (0.0, 0.0, 0.0)
    rpy_des_rad: Vector3 = (0.0, 0.0, 0.0)
    position_axes: Selector3 = (1, 1, 1)
    lambda_des_n: Vector3
    force_axes: Selector3 = Field(description="diagonal of the force direction selector A_d")
    lambda_max_n: float = Field(gt=0.0)
    lambda_max_per_link_n: dict[int, float] = Field(default_factory=dict)
    barrier_scale: float = Field(gt=0.0, lt=1.0, description="b: the barrier activates above b * lambda_max")
    barrier_smoothing: Literal["exact", "hinge"]
    barrier_links: frozenset[int]
    regulation_links: frozenset[int]
    u_ref_nm: tuple[float, ...] | None = Field(
        default=None, description="control reference; the controller sets gravity compensation each cycle"
    )
    w_x: float = Field(ge=0.0, description="state-limit penalty weight")
    limit_margin_rad: float = Field(ge=0.0)
    limit_margin_rad_s: float = Field(ge=0.0)

    @field_validator("lambda_max_per_link_n")
    @classmethod
    def _positive_limits(cls, limits: dict[int, float]) -> dict[int, float]:
        if any(value <= 0.0 for value in limits.values()):
            raise ValueError("per-link force limits must be positive")
        return limits

    @model_validator(mode="after")
    def _links_are_one_based(self) -> CostConfig:
        if any(link < 1 for link in self.barrier_links | self.regulation_links):
            raise ValueError("link indices start at 1")
        return self

    @property
    def R_des(self) -> np.ndarray:
        return rotation_from_rpy(np.array(self.rpy_des_rad))

    @property
    def A_d(self) -> np.ndarray:
        return np.diag(np.array(self.force_axes, dtype=float))

    @property
    def position_selector(self) -> np.ndarray:
        return np.diag(np.array(self.position_axes, dtype=float))

    def force_limit(self, link: int) -> float:
        return self.lambda_max_per_link_n.get(link, self.lambda_max_n)

    def without_contact_costs(self) -> CostConfig:
        return self.model_copy(update={"barrier_links": frozenset(), "regulation_links": frozenset()})
