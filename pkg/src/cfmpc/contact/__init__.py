from .spring import (
    FORCE_THRESHOLD_N,
    ContactFeedback,
    ContactParams,
    build_contact_frame,
    compute_theta,
    contact_deformation,
    external_torque,
    refresh_theta,
    spring_force,
    spring_force_jacobian,
)

__all__ = [
    "FORCE_THRESHOLD_N",
    "ContactFeedback",
    "ContactParams",
    "build_contact_frame",
    "compute_theta",
    "contact_deformation",
    "external_torque",
    "refresh_theta",
    "spring_force",
    "spring_force_jacobian",
]
