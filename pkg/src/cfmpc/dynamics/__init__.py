from .dynamics import (
    ForwardDynamicsDerivatives,
    PointForce,
    SpringAttachment,
    bias_forces,
    external_torque_from_forces,
    forward_dynamics,
    forward_dynamics_derivatives,
    forward_dynamics_derivatives_fd,
    gravity_torque,
    inverse_dynamics,
    inverse_dynamics_derivatives,
    mass_matrix,
    mechanical_energy,
    spring_forces,
)
from .kinematics import (
    LinkFrames,
    attach_point,
    end_effector_pose,
    forward_kinematics,
    frame_jacobian,
    link_frames,
    point_jacobian,
)
from .model import BodyPoint, JointState, RobotModel, RobotSpec, load_robot, probe_points

__all__ = [
    "BodyPoint",
    "ForwardDynamicsDerivatives",
    "JointState",
    "LinkFrames",
    "PointForce",
    "RobotModel",
    "RobotSpec",
    "SpringAttachment",
    "attach_point",
    "bias_forces",
    "end_effector_pose",
    "external_torque_from_forces",
    "forward_dynamics",
    "forward_dynamics_derivatives",
    "forward_dynamics_derivatives_fd",
    "forward_kinematics",
    "frame_jacobian",
    "gravity_torque",
    "inverse_dynamics",
    "inverse_dynamics_derivatives",
    "link_frames",
    "load_robot",
    "mass_matrix",
    "mechanical_energy",
    "point_jacobian",
    "probe_points",
    "spring_forces",
]
