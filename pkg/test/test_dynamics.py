import numpy as np
import pytest
from conftest import PENDULUM_LENGTH_M, PENDULUM_MASS_KG, random_contact, random_state

from cfmpc.dynamics import (
    BodyPoint,
    JointState,
    RobotModel,
    end_effector_pose,
    forward_dynamics,
    forward_dynamics_derivatives,
    forward_dynamics_derivatives_fd,
    frame_jacobian,
    gravity_torque,
    inverse_dynamics,
    inverse_dynamics_derivatives,
    link_frames,
    mass_matrix,
    mechanical_energy,
    point_jacobian,
    spring_forces,
)
from cfmpc.errors import InvalidArgumentError
from cfmpc.utils import central_difference


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    return float(np.max(np.abs(analytic - numeric)) / max(1.0, np.max(np.abs(numeric))))


@pytest.mark.parametrize("robot, samples", [("planar3", 600), ("desk7", 400)])
def test_forward_dynamics_derivatives_match_finite_differences(robot, samples, request, rng):
    model: RobotModel = request.getfixturevalue(robot)
    worst = 0.0
    for _ in range(samples):
        q, v = random_state(model, rng)
        u = rng.normal(0.0, 5.0, model.n)
        contacts = [random_contact(model, q, rng) for _ in range(int(rng.integers(0, 3)))]
        state = JointState(q=q, v=v)
        analytic = forward_dynamics_derivatives(model, state, u, contacts)
        numeric = forward_dynamics_derivatives_fd(model, state, u, contacts)
        np.testing.assert_allclose(analytic.qdd, numeric.qdd, atol=1e-12)
        for name in ("dq", "dv", "du"):
            worst = max(worst, _relative_error(getattr(analytic, name), getattr(numeric, name)))
    assert worst < 1e-5


def test_inverse_dynamics_derivatives_match_finite_differences(desk7, rng):
    for _ in range(50):
        q, v = random_state(desk7, rng)
        qdd = rng.normal(size=desk7.n)
        _, dq, dv = inverse_dynamics_derivatives(desk7, JointState(q=q, v=v), qdd)
        fd_q = central_difference(lambda x: inverse_dynamics(desk7, JointState(q=x, v=v), qdd), q)
        fd_v = central_difference(lambda x: inverse_dynamics(desk7, JointState(q=q, v=x), qdd), v)
        assert _relative_error(dq, fd_q) < 1e-5
        assert _relative_error(dv, fd_v) < 1e-5


def test_inverse_dynamics_inverts_forward_dynamics(desk7, rng):
    for _ in range(20):
        q, v = random_state(desk7, rng)
        state = JointState(q=q, v=v)
        u = rng.normal(0.0, 10.0, desk7.n)
        contacts = spring_forces(desk7, q, [random_contact(desk7, q, rng)])
        qdd = forward_dynamics(desk7, state, u, contacts)
        np.testing.assert_allclose(inverse_dynamics(desk7, state, qdd, contacts), u, atol=1e-9)


def test_mass_matrix_is_symmetric_positive_definite(desk7, rng):
    for _ in range(20):
        q, _ = random_state(desk7, rng)
        M = mass_matrix(desk7, q)
        np.testing.assert_allclose(M, M.T, atol=1e-14)
        assert np.linalg.eigvalsh(M).min() > 0.0


@pytest.mark.parametrize("robot, samples", [("planar3", 500), ("desk7", 500)])
def test_point_jacobian_matches_finite_differences(robot, samples, request, rng):
    model: RobotModel = request.getfixturevalue(robot)
    worst = 0.0
    for _ in range(samples):
        q, _ = random_state(model, rng)
        point = BodyPoint(link=int(rng.integers(1, model.n + 1)), offset=rng.uniform(-0.1, 0.1, 3))
        J = point_jacobian(model, q, point)
        numeric = central_difference(lambda x: link_frames(model, x).point(point), q)
        worst = max(worst, _relative_error(J, numeric))
        assert np.all(J[:, point.link :] == 0.0)
    assert worst < 1e-6


def test_frame_jacobian_angular_part(desk7, rng):
    q, _ = random_state(desk7, rng)
    _, R = end_effector_pose(desk7, q)
    J = frame_jacobian(desk7, q, desk7.end_effector)
    dq = 1e-7 * rng.normal(size=desk7.n)
    _, R_next = end_effector_pose(desk7, q + dq)
    # small rotation R_next R^T ~ I + [w]x with w = J_w dq
    W = R_next @ R.T
    w = 0.5 * np.array([W[2, 1] - W[1, 2], W[0, 2] - W[2, 0], W[1, 0] - W[0, 1]])
    np.testing.assert_allclose(w, J[3:] @ dq, atol=1e-12)


def test_gravity_compensation_holds_the_arm(planar3):
    q = np.array([0.4, -0.3, 0.8])
    state = JointState(q=q, v=np.zeros(3))
    qdd = forward_dynamics(planar3, state, gravity_torque(planar3, q))
    np.testing.assert_allclose(qdd, 0.0, atol=1e-12)


def test_energy_is_kinetic_plus_potential(planar3):
    q = np.array([0.2, 0.1, -0.3])
    at_rest = mechanical_energy(planar3, JointState(q=q, v=np.zeros(3)))
    moving = mechanical_energy(planar3, JointState(q=q, v=np.array([0.5, 0.0, 0.0])))
    M = mass_matrix(planar3, q)
    assert moving - at_rest == pytest.approx(0.5 * 0.25 * M[0, 0])


def test_wrong_torque_size_is_rejected(planar3):
    with pytest.raises(InvalidArgumentError):
        forward_dynamics(planar3, JointState(q=np.zeros(3), v=np.zeros(3)), np.zeros(2))


def test_joint_state_rejects_non_finite_values():
    with pytest.raises(InvalidArgumentError):
        JointState(q=np.array([0.0, np.nan]), v=np.zeros(2))


@pytest.mark.parametrize("theta", [0.0, 0.3, -1.1, 2.5])
def test_pendulum_inertia_and_gravity(pendulum, theta):
    q = np.array([theta])
    M = mass_matrix(pendulum, q)
    np.testing.assert_allclose(M, [[PENDULUM_MASS_KG * PENDULUM_LENGTH_M**2]], rtol=1e-9)
    np.testing.assert_allclose(
        gravity_torque(pendulum, q), [PENDULUM_MASS_KG * 9.81 * PENDULUM_LENGTH_M * np.sin(theta)], atol=1e-12
    )
