from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator

from cfmpc.errors import InvalidArgumentError
from cfmpc.utils import rotation_from_rpy, skew

# ############################################################
# File schema
# ############################################################

Vector3 = tuple[float, float, float]
Matrix3 = tuple[Vector3, Vector3, Vector3]

PROBE_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)


class LinkSpec(BaseModel):
    mass_kg: float
    com_m: Vector3
    inertia_kg_m2: Matrix3
    probes_m: list[Vector3] | None = None


class JointSpec(BaseModel):
    name: str
    xyz_m: Vector3
    rpy_rad: Vector3 = (0.0, 0.0, 0.0)
    axis: Vector3
    q_min_rad: float
    q_max_rad: float
    v_max_rad_s: float
    u_min_nm: float
    u_max_nm: float
    damping_nm_s: float = 0.0
    link: LinkSpec


class FrameSpec(BaseModel):
    xyz_m: Vector3
    rpy_rad: Vector3 = (0.0, 0.0, 0.0)


class RobotSpec(BaseModel):
    """Robot document: a revolute serial chain, joints listed from the base outwards."""

    kind: Literal["robot"] = "robot"
    format_version: Literal[1]
    name: str
    gravity_m_s2: Vector3 = (0.0, 0.0, -9.81)
    joints: list[JointSpec] = Field(min_length=1)
    end_effector: FrameSpec

    @field_validator("joints")
    @classmethod
    def _unique_names(cls, joints: list[JointSpec]) -> list[JointSpec]:
        names = [joint.name for joint in joints]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate joint names in {names}")
        return joints


# ############################################################
# Runtime model
# ############################################################


@dataclass(frozen=True, eq=False)
class BodyPoint:
    """A point fixed on link `link` (1-based), `offset` in that link's frame."""

    link: int
    offset: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "offset", _frozen(np.asarray(self.offset, dtype=float).reshape(3)))


@dataclass(frozen=True, eq=False)
class JointState:
    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float).ravel()
        v = np.asarray(self.v, dtype=float).ravel()
        if q.shape != v.shape:
            raise InvalidArgumentError(f"q has {q.size} entries but v has {v.size}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise InvalidArgumentError("joint state has non-finite entries")
        object.__setattr__(self, "q", _frozen(q))
        object.__setattr__(self, "v", _frozen(v))

    @classmethod
    def from_vector(cls, x: np.ndarray) -> JointState:
        n = x.size // 2
        return cls(q=x[:n], v=x[n:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.v])


@dataclass(frozen=True, eq=False)
class RobotModel:
    name: str
    origin_xyz: np.ndarray  # (n, 3) joint origin in the parent link frame
    origin_rot: np.ndarray  # (n, 3, 3)
    axes: np.ndarray  # (n, 3) joint axis in the joint frame
    masses: np.ndarray  # (n,)
    coms: np.ndarray  # (n, 3) link frame
    inertias: np.ndarray  # (n, 3, 3) about the COM, link frame
    q_min: np.ndarray
    q_max: np.ndarray
    v_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    gravity: np.ndarray
    ee_xyz: np.ndarray
    ee_rot: np.ndarray
    damping: np.ndarray = field(default=None)  # type: ignore[assignment]
    probes: tuple[BodyPoint, ...] = ()
    # [a]x and [a]x^2 per joint for Rodrigues' formula
    axis_skew: np.ndarray = field(init=False, repr=False)
    axis_skew_sq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = len(self.masses)
        if self.damping is None:
            object.__setattr__(self, "damping", np.zeros(n))
        for name in (
            "origin_xyz", "origin_rot", "axes", "masses", "coms", "inertias", "q_min", "q_max",
            "v_max", "u_min", "u_max", "gravity", "ee_xyz", "ee_rot", "damping",
        ):
            object.__setattr__(self, name, _frozen(np.asarray(getattr(self, name), dtype=float)))
        self._validate()
        K = np.stack([skew(axis) for axis in self.axes])
        object.__setattr__(self, "axis_skew", _frozen(K))
        object.__setattr__(self, "axis_skew_sq", _frozen(K @ K))
        if not self.probes:
            object.__setattr__(self, "probes", probe_points(self))

    def _validate(self) -> None:
        n = self.n
        shapes = {
            "origin_xyz": (n, 3), "origin_rot": (n, 3, 3), "axes": (n, 3), "coms": (n, 3),
            "inertias": (n, 3, 3), "q_min": (n,), "q_max": (n,), "v_max": (n,), "u_min": (n,),
            "u_max": (n,), "damping": (n,), "gravity": (3,), "ee_xyz": (3,), "ee_rot": (3, 3),
        }
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise InvalidArgumentError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        if np.any(self.masses <= 0.0):
            raise InvalidArgumentError("link masses must be positive")
        for i, inertia in enumerate(self.inertias):
            if not np.allclose(inertia, inertia.T, atol=1e-12):
                raise InvalidArgumentError(f"inertia of link {i + 1} is not symmetric")
            if np.linalg.eigvalsh(inertia).min() <= 0.0:
                raise InvalidArgumentError(f"inertia of link {i + 1} is not positive-definite")
        if np.any(np.abs(np.linalg.norm(self.axes, axis=1) - 1.0) > 1e-12):
            raise InvalidArgumentError("joint axes must have unit norm")
        if np.any(self.q_min >= self.q_max) or np.any(self.u_min >= self.u_max):
            raise InvalidArgumentError("lower limits must be strictly below upper limits")
        if np.any(self.v_max <= 0.0):
            raise InvalidArgumentError("velocity limits must be positive")
        if np.any(self.damping < 0.0):
            raise InvalidArgumentError("joint damping must be non-negative")

    @property
    def n(self) -> int:
        return len(self.masses)

    @property
    def end_effector(self) -> BodyPoint:
        return BodyPoint(link=self.n, offset=self.ee_xyz)

    def with_damping(self, damping: np.ndarray | float) -> RobotModel:
        return replace(self, damping=np.broadcast_to(np.asarray(damping, dtype=float), (self.n,)).copy())

    def check_point(self, point: BodyPoint) -> None:
        if not 1 <= point.link <= self.n:
            raise InvalidArgumentError(f"link index {point.link} outside 1..{self.n}")

    def check_configuration(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float).ravel()
        if q.size != self.n:
            raise InvalidArgumentError(f"expected {self.n} joint values, got {q.size}")
        return q

    @classmethod
    def from_spec(cls, spec: RobotSpec) -> RobotModel:
        joints = spec.joints
        model = cls(
            name=spec.name,
            origin_xyz=np.array([j.xyz_m for j in joints]),
            origin_rot=np.stack([rotation_from_rpy(np.array(j.rpy_rad)) for j in joints]),
            axes=np.array([j.axis for j in joints]) / np.linalg.norm(np.array([j.axis for j in joints]), axis=1)[:, None],
            masses=np.array([j.link.mass_kg for j in joints]),
            coms=np.array([j.link.com_m for j in joints]),
            inertias=np.array([j.link.inertia_kg_m2 for j in joints]),
            q_min=np.array([j.q_min_rad for j in joints]),
            q_max=np.array([j.q_max_rad for j in joints]),
            v_max=np.array([j.v_max_rad_s for j in joints]),
            u_min=np.array([j.u_min_nm for j in joints]),
            u_max=np.array([j.u_max_nm for j in joints]),
            damping=np.array([j.damping_nm_s for j in joints]),
            gravity=np.array(spec.gravity_m_s2),
            ee_xyz=np.array(spec.end_effector.xyz_m),
            ee_rot=rotation_from_rpy(np.array(spec.end_effector.rpy_rad)),
        )
        explicit = [
            BodyPoint(link=i + 1, offset=np.array(p))
            for i, j in enumerate(joints)
            for p in (j.link.probes_m or [])
        ]
        if explicit:
            # links without explicit probes keep their defaults
            covered = {p.link for p in explicit}
            defaults = [p for p in probe_points(model) if p.link not in covered]
            model = replace(model, probes=tuple(sorted(explicit + defaults, key=lambda p: p.link)))
        return model


def probe_points(model: RobotModel) -> tuple[BodyPoint, ...]:
    """Five points per link on the segment towards the child joint; the last link ends at the tool tip."""
    probes: list[BodyPoint] = []
    for i in range(model.n):
        tip = model.origin_xyz[i + 1] if i + 1 < model.n else model.ee_xyz
        probes.extend(BodyPoint(link=i + 1, offset=s * tip) for s in PROBE_FRACTIONS)
    return tuple(probes)


def load_robot(path: str | Path) -> RobotModel:
    from cfmpc.config import load_document

    return RobotModel.from_spec(load_document(path, RobotSpec))


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float)
    array.setflags(write=False)
    return array
