from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from cfmpc.costs.config import Vector3


class HalfSpace(BaseModel):
    """Solid region {p : normal . p < offset}; the normal points into free space."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["half_space"] = "half_space"
    name: str = "wall"
    normal: Vector3
    offset_m: float
    k_true_n_per_m: float = Field(gt=0.0)
    damping_n_s_per_m: float = Field(default=0.0, ge=0.0)

    @field_validator("normal")
    @classmethod
    def _unit(cls, normal: Vector3) -> Vector3:
        if abs(float(np.linalg.norm(normal)) - 1.0) > 1e-9:
            raise ValueError(f"half-space normal {normal} is not a unit vector")
        return normal

    @property
    def unit_normal(self) -> np.ndarray:
        return np.array(self.normal)

    def penetration(self, points: np.ndarray) -> np.ndarray:
        """Depth of each point below the surface (negative outside)."""
        return self.offset_m - np.atleast_2d(points) @ self.unit_normal

    def force(self, depth: float, normal_velocity: float) -> np.ndarray:
        """Penalty force on the robot: k depth + damping, never pulling."""
        magnitude = self.k_true_n_per_m * depth - self.damping_n_s_per_m * normal_velocity
        return max(magnitude, 0.0) * self.unit_normal


# further object kinds join this alias as a discriminated union on `kind`
EnvironmentObject = HalfSpace


class PushDisturbance(BaseModel):
    """Scripted push on a body point: ramp to `peak_n`, hold, release.

    The push is compliant: a virtual hand spring anchored at onset realizes the nominal profile
    exactly against a stationary link and pushes less if the link gives way.
    """

    model_config = ConfigDict(frozen=True)

    kind: Literal["push"] = "push"
    link: int = Field(ge=1)
    offset_m: Vector3 = Field(description="application point in the link frame")
    direction: Vector3 = Field(description="unit direction of the force acting on the robot")
    peak_n: float = Field(gt=0.0)
    start_s: float = Field(ge=0.0)
    ramp_s: float = Field(gt=0.0)
    hold_s: float = Field(ge=0.0)
    release_s: float = Field(gt=0.0)
    stiffness_n_per_m: float = Field(gt=0.0)

    @field_validator("direction")
    @classmethod
    def _unit(cls, direction: Vector3) -> Vector3:
        if abs(float(np.linalg.norm(direction)) - 1.0) > 1e-9:
            raise ValueError(f"push direction {direction} is not a unit vector")
        return direction

    @property
    def end_s(self) -> float:
        return self.start_s + self.ramp_s + self.hold_s + self.release_s

    def nominal_force(self, t: float) -> float:
        tau = t - self.start_s
        if tau < 0.0 or t >= self.end_s:
            return 0.0
        if tau < self.ramp_s:
            return self.peak_n * tau / self.ramp_s
        tau -= self.ramp_s
        if tau < self.hold_s:
            return self.peak_n
        tau -= self.hold_s
        return self.peak_n * (1.0 - tau / self.release_s)

    def is_active(self, t: float) -> bool:
        return self.start_s <= t < self.end_s

    def force(self, t: float, anchor: np.ndarray, point: np.ndarray) -> np.ndarray:
        """Hand-spring force for a push anchored at `anchor` acting on the current point position."""
        d = np.array(self.direction)
        hand = anchor + d * (self.nominal_force(t) / self.stiffness_n_per_m)
        return max(self.stiffness_n_per_m * float(d @ (hand - point)), 0.0) * d
