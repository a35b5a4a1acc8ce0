from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from cfmpc.dynamics import BodyPoint, LinkFrames, RobotModel, attach_point, link_frames, point_jacobian
from cfmpc.errors import DegenerateFrameError, InvalidArgumentError

# Below this force magnitude a report does not define a contact frame.
FORCE_THRESHOLD_N = 0.5


@dataclass(frozen=True, eq=False)
class ContactFeedback:
    """Estimated contact on link `link`: world location and the force acting on the robot."""

    timestamp: float
    link: int
    position: np.ndarray
    force: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "force", np.asarray(self.force, dtype=float).reshape(3))
        if self.link < 1:
            raise InvalidArgumentError(f"link index {self.link} must be >= 1")

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.force))


@dataclass(frozen=True, eq=False)
class ContactParams:
    """Spring parameters of one active contact: lambda = K_env (r_env - r_c(q))."""

    K_env: np.ndarray
    r_env: np.ndarray
    attachment: BodyPoint
    k_env: float
    rotation: np.ndarray

    @property
    def link(self) -> int:
        return self.attachment.link

    @property
    def normal(self) -> np.ndarray:
        """Contact-frame z-axis (direction of the force on the robot)."""
        return self.rotation[:, 2]


def build_contact_frame(force: np.ndarray, threshold: float = FORCE_THRESHOLD_N) -> np.ndarray:
    """Rotation whose third column is force/|force|; x/y completed from the least parallel world axis."""
    force = np.asarray(force, dtype=float).reshape(3)
    magnitude = float(np.linalg.norm(force))
    if not magnitude > threshold:
        raise DegenerateFrameError(f"contact force {magnitude:.3g} N is below {threshold} N")
    z = force / magnitude
    helper = np.eye(3)[int(np.argmin(np.abs(z)))]
    y = np.cross(z, helper)
    y /= np.linalg.norm(y)
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def compute_theta(
    feedback: ContactFeedback,
    model: RobotModel,
    q: np.ndarray,
    k_env: float,
    threshold: float = FORCE_THRESHOLD_N,
) -> ContactParams:
    if k_env <= 0.0:
        raise InvalidArgumentError(f"k_env must be positive, got {k_env}")
    rotation = build_contact_frame(feedback.force, threshold)
    attachment = attach_point(model, q, feedback.link, feedback.position)
    return _params(rotation, feedback.position, feedback.magnitude, attachment, k_env)


def refresh_theta(
    params: ContactParams,
    feedback: ContactFeedback,
    model: RobotModel,
    q: np.ndarray,
    k_env: float,
    threshold: float = FORCE_THRESHOLD_N,
) -> ContactParams:
    """New stiffness and rest location from fresh feedback, keeping the body-fixed attachment.

    The rest location is anchored at the attachment's current position, so the model force at q
    equals the reported force.
    """
    rotation = build_contact_frame(feedback.force, threshold)
    anchor = link_frames(model, q).point(params.attachment)
    return _params(rotation, anchor, feedback.magnitude, params.attachment, k_env)


def _params(
    rotation: np.ndarray, anchor: np.ndarray, magnitude: float, attachment: BodyPoint, k_env: float
) -> ContactParams:
    z = rotation[:, 2]
    # rest offset lives on the stiffness range space: (0, 0, |lambda| / k) in the contact frame
    r_env = anchor + z * (magnitude / k_env)
    K_env = k_env * np.outer(z, z)
    return ContactParams(K_env=K_env, r_env=r_env, attachment=attachment, k_env=float(k_env), rotation=rotation)


def _frames(model: RobotModel, q: np.ndarray, frames: LinkFrames | None) -> LinkFrames:
    return frames if frames is not None else link_frames(model, q)


def spring_force(
    params: ContactParams, model: RobotModel, q: np.ndarray, frames: LinkFrames | None = None
) -> np.ndarray:
    r_c = _frames(model, q, frames).point(params.attachment)
    return params.K_env @ (params.r_env - r_c)


def contact_deformation(
    params: ContactParams, model: RobotModel, q: np.ndarray, frames: LinkFrames | None = None
) -> float:
    """Signed compression along the contact normal; negative means the model predicts separation."""
    r_c = _frames(model, q, frames).point(params.attachment)
    return float(params.normal @ (params.r_env - r_c))


def spring_force_jacobian(
    params: ContactParams, model: RobotModel, q: np.ndarray, frames: LinkFrames | None = None
) -> np.ndarray:
    """d lambda / dq = -K_env J(q, r_c); velocity and torque partials are zero."""
    return -params.K_env @ point_jacobian(model, q, params.attachment, _frames(model, q, frames))


def external_torque(
    contacts: Sequence[ContactParams], model: RobotModel, q: np.ndarray, frames: LinkFrames | None = None
) -> np.ndarray:
    frames = _frames(model, q, frames)
    tau = np.zeros(model.n)
    for params in contacts:
        J = point_jacobian(model, q, params.attachment, frames)
        tau += J.T @ spring_force(params, model, q, frames)
    return tau
