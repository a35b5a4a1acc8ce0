from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cfmpc.dynamics.model import BodyPoint, RobotModel


@dataclass(frozen=True, eq=False)
class LinkFrames:
    """World pose of every link frame at one configuration."""

    rotations: np.ndarray  # (n, 3, 3)
    origins: np.ndarray  # (n, 3)
    axes: np.ndarray  # (n, 3) joint axes in world coordinates

    def point(self, p: BodyPoint) -> np.ndarray:
        k = p.link - 1
        return self.origins[k] + self.rotations[k] @ p.offset


def joint_rotation(model: RobotModel, i: int, angle: float) -> np.ndarray:
    return np.eye(3) + np.sin(angle) * model.axis_skew[i] + (1.0 - np.cos(angle)) * model.axis_skew_sq[i]


def link_frames(model: RobotModel, q: np.ndarray) -> LinkFrames:
    q = model.check_configuration(q)
    n = model.n
    rotations = np.empty((n, 3, 3))
    origins = np.empty((n, 3))
    R_prev = np.eye(3)
    o_prev = np.zeros(3)
    for i in range(n):
        origins[i] = o_prev + R_prev @ model.origin_xyz[i]
        rotations[i] = R_prev @ model.origin_rot[i] @ joint_rotation(model, i, q[i])
        R_prev, o_prev = rotations[i], origins[i]
    axes = np.einsum("nij,nj->ni", rotations, model.axes)
    return LinkFrames(rotations=rotations, origins=origins, axes=axes)


def forward_kinematics(
    model: RobotModel, q: np.ndarray, p: BodyPoint, frames: LinkFrames | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """World position of `p` and world orientation of its link."""
    model.check_point(p)
    frames = frames or link_frames(model, q)
    return frames.point(p), frames.rotations[p.link - 1]


def point_jacobian(
    model: RobotModel, q: np.ndarray, p: BodyPoint, frames: LinkFrames | None = None
) -> np.ndarray:
    """3xn positional Jacobian; columns of joints distal to p's link are zero."""
    model.check_point(p)
    frames = frames or link_frames(model, q)
    k = p.link
    position = frames.point(p)
    J = np.zeros((3, model.n))
    J[:, :k] = np.cross(frames.axes[:k], position - frames.origins[:k]).T
    return J


def frame_jacobian(
    model: RobotModel, q: np.ndarray, p: BodyPoint, frames: LinkFrames | None = None
) -> np.ndarray:
    """6xn Jacobian: linear velocity of `p` on top, angular velocity of its link below."""
    frames = frames or link_frames(model, q)
    J = np.zeros((6, model.n))
    J[:3] = point_jacobian(model, q, p, frames)
    J[3:, : p.link] = frames.axes[: p.link].T
    return J


def end_effector_pose(
    model: RobotModel, q: np.ndarray, frames: LinkFrames | None = None
) -> tuple[np.ndarray, np.ndarray]:
    frames = frames or link_frames(model, q)
    position, R_link = forward_kinematics(model, q, model.end_effector, frames)
    return position, R_link @ model.ee_rot


def attach_point(model: RobotModel, q: np.ndarray, link: int, world_position: np.ndarray) -> BodyPoint:
    """Body-fixed point on `link` whose forward kinematics at q is `world_position`."""
    frames = link_frames(model, q)
    model.check_point(BodyPoint(link=link, offset=np.zeros(3)))
    k = link - 1
    offset = frames.rotations[k].T @ (np.asarray(world_position, dtype=float) - frames.origins[k])
    return BodyPoint(link=link, offset=offset)
