from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from cfmpc.dynamics.kinematics import LinkFrames, link_frames, point_jacobian
from cfmpc.dynamics.model import BodyPoint, JointState, RobotModel
from cfmpc.errors import InvalidArgumentError, NumericalFailureError
from cfmpc.utils import central_difference

PointForce = tuple[BodyPoint, np.ndarray]


@runtime_checkable
class SpringAttachment(Protocol):
    """A body-fixed point pulled by a linear spring: force = K_env (r_env - r_c(q))."""

    attachment: BodyPoint
    K_env: np.ndarray
    r_env: np.ndarray


@dataclass(frozen=True, eq=False)
class ForwardDynamicsDerivatives:
    qdd: np.ndarray
    dq: np.ndarray
    dv: np.ndarray
    du: np.ndarray


# ############################################################
# Mass matrix and Newton-Euler recursion
# ############################################################


def mass_matrix(model: RobotModel, q: np.ndarray, frames: LinkFrames | None = None) -> np.ndarray:
    """Joint-space inertia as the sum of per-link Jacobian quadratic forms (CRBA equivalent)."""
    frames = frames or link_frames(model, q)
    R, o, z = frames.rotations, frames.origins, frames.axes
    n = model.n
    coms = o + np.einsum("nij,nj->ni", R, model.coms)
    lower = np.tril(np.ones((n, n)))  # lower[k, j]: joint j moves link k
    lever = coms[:, None, :] - o[None, :, :]
    Jv = np.cross(np.broadcast_to(z, (n, n, 3)), lever) * lower[:, :, None]
    Jw = np.broadcast_to(z, (n, n, 3)) * lower[:, :, None]
    inertia_world = R @ model.inertias @ R.transpose(0, 2, 1)
    M = np.einsum("k,kia,kja->ij", model.masses, Jv, Jv)
    M += np.einsum("kia,kab,kjb->ij", Jw, inertia_world, Jw)
    return 0.5 * (M + M.T)


def _rnea(
    model: RobotModel,
    frames: LinkFrames,
    v: np.ndarray,
    a: np.ndarray,
    gravity: np.ndarray,
    tangents: bool,
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Newton-Euler inverse dynamics in world coordinates.

    With `tangents`, every quantity also carries its derivative along the 2n directions
    (dq_1..dq_n, dv_1..dv_n); a rotation perturbation is a world vector th with dR = [th]x R.
    """
    n = model.n
    R, o, z = frames.rotations, frames.origins, frames.axes
    D = 2 * n
    sel_q = np.vstack([np.eye(n), np.zeros((n, n))])
    sel_v = np.vstack([np.zeros((n, n)), np.eye(n)])

    w_prev = np.zeros(3)
    wd_prev = np.zeros(3)
    acc_prev = -gravity
    o_prev = np.zeros(3)
    th_prev = dw_prev = dwd_prev = dacc_prev = np.zeros((D, 3))

    forces, moments, levers, spans = [], [], [], []
    d_forces, d_moments, d_levers, d_spans, d_axes = [], [], [], [], []
    for i in range(n):
        zi = z[i]
        span = o[i] - o_prev
        w = w_prev + zi * v[i]
        wd = wd_prev + zi * a[i] + np.cross(w_prev, zi * v[i])
        acc = acc_prev + np.cross(wd_prev, span) + np.cross(w_prev, np.cross(w_prev, span))
        lever = R[i] @ model.coms[i]
        acc_com = acc + np.cross(wd, lever) + np.cross(w, np.cross(w, lever))
        inertia = R[i] @ model.inertias[i] @ R[i].T
        Iw = inertia @ w
        Iwd = inertia @ wd
        force = model.masses[i] * acc_com
        moment = Iwd + np.cross(w, Iw)
        forces.append(force)
        moments.append(moment)
        levers.append(lever)
        spans.append(span)

        if tangents:
            d_span = np.cross(th_prev, span)
            d_z = np.cross(th_prev, zi)
            th = th_prev + np.outer(sel_q[:, i], zi)
            d_zv = d_z * v[i] + np.outer(sel_v[:, i], zi)
            dw = dw_prev + d_zv
            dwd = (
                dwd_prev
                + d_z * a[i]
                + np.cross(dw_prev, zi * v[i])
                + np.cross(w_prev, d_zv)
            )
            dacc = (
                dacc_prev
                + np.cross(dwd_prev, span)
                + np.cross(wd_prev, d_span)
                + np.cross(dw_prev, np.cross(w_prev, span))
                + np.cross(w_prev, np.cross(dw_prev, span) + np.cross(w_prev, d_span))
            )
            d_lever = np.cross(th, lever)
            dacc_com = (
                dacc
                + np.cross(dwd, lever)
                + np.cross(wd, d_lever)
                + np.cross(dw, np.cross(w, lever))
                + np.cross(w, np.cross(dw, lever) + np.cross(w, d_lever))
            )
            d_Iwd = np.cross(th, Iwd) - np.cross(th, wd) @ inertia.T
            d_Iw = np.cross(th, Iw) - np.cross(th, w) @ inertia.T
            d_moment = (
                d_Iwd
                + dwd @ inertia.T
                + np.cross(dw, Iw)
                + np.cross(w, d_Iw + dw @ inertia.T)
            )
            d_forces.append(model.masses[i] * dacc_com)
            d_moments.append(d_moment)
            d_levers.append(d_lever)
            d_spans.append(d_span)
            d_axes.append(d_z)
            th_prev, dw_prev, dwd_prev, dacc_prev = th, dw, dwd, dacc

        w_prev, wd_prev, acc_prev, o_prev = w, wd, acc, o[i]

    tau = np.zeros(n)
    dtau = np.zeros((D, n)) if tangents else None
    f_next = np.zeros(3)
    m_next = np.zeros(3)
    span_next = np.zeros(3)
    df_next = dm_next = dspan_next = np.zeros((D, 3))
    for i in reversed(range(n)):
        f = forces[i] + f_next
        m = moments[i] + np.cross(levers[i], forces[i]) + m_next + np.cross(span_next, f_next)
        tau[i] = z[i] @ m
        if tangents:
            df = d_forces[i] + df_next
            dm = (
                d_moments[i]
                + np.cross(d_levers[i], forces[i])
                + np.cross(levers[i], d_forces[i])
                + dm_next
                + np.cross(dspan_next, f_next)
                + np.cross(span_next, df_next)
            )
            dtau[:, i] = d_axes[i] @ m + dm @ z[i]
            df_next, dm_next, dspan_next = df, dm, d_spans[i]
        f_next, m_next, span_next = f, m, spans[i]

    tau += model.damping * v
    if not tangents:
        return tau, None, None
    dtau_dq = dtau[:n].T
    dtau_dv = dtau[n:].T + np.diag(model.damping)
    return tau, dtau_dq, dtau_dv


def external_torque_from_forces(
    model: RobotModel, q: np.ndarray, forces: Sequence[PointForce], frames: LinkFrames | None = None
) -> np.ndarray:
    frames = frames or link_frames(model, q)
    tau = np.zeros(model.n)
    for point, force in forces:
        tau += point_jacobian(model, q, point, frames).T @ force
    return tau


def inverse_dynamics(
    model: RobotModel,
    state: JointState,
    qdd: np.ndarray,
    contacts: Sequence[PointForce] = (),
    frames: LinkFrames | None = None,
) -> np.ndarray:
    """Joint torque realizing qdd: M qdd + b(q, v) + D v - sum J^T f."""
    frames = frames or link_frames(model, state.q)
    tau, _, _ = _rnea(model, frames, state.v, np.asarray(qdd, dtype=float), model.gravity, tangents=False)
    return tau - external_torque_from_forces(model, state.q, contacts, frames)


def inverse_dynamics_derivatives(
    model: RobotModel, state: JointState, qdd: np.ndarray, frames: LinkFrames | None = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contact-free inverse dynamics and its analytic partials w.r.t. q and v."""
    frames = frames or link_frames(model, state.q)
    tau, dq, dv = _rnea(model, frames, state.v, np.asarray(qdd, dtype=float), model.gravity, tangents=True)
    return tau, dq, dv


def bias_forces(model: RobotModel, state: JointState, frames: LinkFrames | None = None) -> np.ndarray:
    """C(q, v) v + g(q), from Newton-Euler at zero joint acceleration (joint damping excluded)."""
    frames = frames or link_frames(model, state.q)
    tau, _, _ = _rnea(model, frames, state.v, np.zeros(model.n), model.gravity, tangents=False)
    return tau - model.damping * state.v


def gravity_torque(model: RobotModel, q: np.ndarray) -> np.ndarray:
    return bias_forces(model, JointState(q=q, v=np.zeros(model.n)))


def mechanical_energy(model: RobotModel, state: JointState) -> float:
    frames = link_frames(model, state.q)
    coms = frames.origins + np.einsum("nij,nj->ni", frames.rotations, model.coms)
    kinetic = 0.5 * state.v @ mass_matrix(model, state.q, frames) @ state.v
    potential = -float(np.sum(model.masses * (coms @ model.gravity)))
    return float(kinetic + potential)


# ############################################################
# Forward dynamics
# ############################################################


def _factor(M: np.ndarray):
    try:
        return cho_factor(M)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"mass matrix is not positive-definite: {e}") from e


def _check_torque(model: RobotModel, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if u.size != model.n:
        raise InvalidArgumentError(f"expected {model.n} joint torques, got {u.size}")
    return u


def forward_dynamics(
    model: RobotModel,
    state: JointState,
    u: np.ndarray,
    contacts: Sequence[PointForce] = (),
    frames: LinkFrames | None = None,
) -> np.ndarray:
    """qdd = M^-1 (u + sum J^T f - b - D v)."""
    u = _check_torque(model, u)
    frames = frames or link_frames(model, state.q)
    for _, force in contacts:
        if not np.all(np.isfinite(force)):
            raise InvalidArgumentError("contact force has non-finite entries")
    M = mass_matrix(model, state.q, frames)
    rhs = u - inverse_dynamics(model, state, np.zeros(model.n), contacts, frames)
    return cho_solve(_factor(M), rhs)


def spring_forces(
    model: RobotModel, q: np.ndarray, springs: Sequence[SpringAttachment], frames: LinkFrames | None = None
) -> list[PointForce]:
    frames = frames or link_frames(model, q)
    return [(s.attachment, s.K_env @ (s.r_env - frames.point(s.attachment))) for s in springs]


def _transpose_jacobian_derivative(
    model: RobotModel, frames: LinkFrames, point: BodyPoint, force: np.ndarray
) -> np.ndarray:
    """d(J^T f)/dq at constant world force f."""
    n = model.n
    k = point.link
    z, o = frames.axes, frames.origins
    p = frames.point(point)
    moved = np.tril(np.ones((n, n)))  # moved[r, j]: frame r rotates with joint j
    # index [r, j]: derivative of torque r along joint j
    dz = np.cross(z[None, :, :], z[:, None, :]) * moved[:, :, None]
    do = np.cross(z[None, :, :], o[:, None, :] - o[None, :, :]) * moved[:, :, None]
    dp = np.zeros((n, 3))
    dp[:k] = np.cross(z[:k], p - o[:k])
    lever = p - o
    term_axis = np.einsum("rja,ra->rj", dz, np.cross(lever, force))
    term_point = np.einsum("ra,rja->rj", z, np.cross(dp[None, :, :] - do, force))
    dtau = term_axis + term_point
    dtau[k:, :] = 0.0
    return dtau


def forward_dynamics_derivatives(
    model: RobotModel, state: JointState, u: np.ndarray, springs: Sequence[SpringAttachment] = ()
) -> ForwardDynamicsDerivatives:
    """Analytic partials of qdd, including the spring contact dependency lambda(q)."""
    u = _check_torque(model, u)
    frames = link_frames(model, state.q)
    M = mass_matrix(model, state.q, frames)
    factor = _factor(M)
    forces = spring_forces(model, state.q, springs, frames)
    tau_ext = external_torque_from_forces(model, state.q, forces, frames)
    bias, _, _ = _rnea(model, frames, state.v, np.zeros(model.n), model.gravity, tangents=False)
    qdd = cho_solve(factor, u + tau_ext - bias)
    _, did_dq, did_dv = _rnea(model, frames, state.v, qdd, model.gravity, tangents=True)
    for spring, (point, force) in zip(springs, forces):
        J = point_jacobian(model, state.q, point, frames)
        did_dq = did_dq - _transpose_jacobian_derivative(model, frames, point, force)
        did_dq = did_dq + J.T @ spring.K_env @ J
    return ForwardDynamicsDerivatives(
        qdd=qdd,
        dq=-cho_solve(factor, did_dq),
        dv=-cho_solve(factor, did_dv),
        du=cho_solve(factor, np.eye(model.n)),
    )


def forward_dynamics_derivatives_fd(
    model: RobotModel,
    state: JointState,
    u: np.ndarray,
    springs: Sequence[SpringAttachment] = (),
    step: float = 1e-6,
) -> ForwardDynamicsDerivatives:
    """Central-difference fallback of `forward_dynamics_derivatives`."""
    u = _check_torque(model, u)

    def qdd_of(q: np.ndarray, v: np.ndarray, tau: np.ndarray) -> np.ndarray:
        s = JointState(q=q, v=v)
        return forward_dynamics(model, s, tau, spring_forces(model, q, springs))

    return ForwardDynamicsDerivatives(
        qdd=qdd_of(state.q, state.v, u),
        dq=central_difference(lambda q: qdd_of(q, state.v, u), state.q, step),
        dv=central_difference(lambda v: qdd_of(state.q, v, u), state.v, step),
        du=central_difference(lambda tau: qdd_of(state.q, state.v, tau), u, step),
    )
