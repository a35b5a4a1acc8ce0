import numpy as np
import pytest
from conftest import PENDULUM_LENGTH_M, make_cost, random_contact

from cfmpc.dynamics import end_effector_pose, gravity_torque
from cfmpc.errors import InvalidArgumentError, NumericalFailureError
from cfmpc.mpc import ContactDynamicsAction, build_problem, reset_warm_start, rollout_step
from cfmpc.sim import load_any
from cfmpc.solver import (
    ActionModel,
    BoxFDDP,
    LinearQuadraticAction,
    OcpProblem,
    SolverSettings,
    Trajectory,
    backward_pass,
    box_qp,
    dynamics_gaps,
    forward_pass,
    riccati_lqr,
    rollout,
    solve,
)
from cfmpc.utils import central_difference


@pytest.fixture
def lqr(config_dir):
    return load_any(config_dir / "fixtures" / "lqr.yaml")


@pytest.fixture
def lqr_box(config_dir):
    return load_any(config_dir / "fixtures" / "lqr_box.yaml")


def _arm_problem(model, horizon=5, **cost):
    q = np.array([0.4, -0.6, 0.5])
    x0 = np.concatenate([q, np.zeros(3)])
    position, _ = end_effector_pose(model, q)
    config = make_cost(
        p_des_m=tuple(position + [0.05, 0.0, -0.05]),
        c_r=0.0,
        u_ref_nm=tuple(gravity_torque(model, q)),
        **cost,
    )
    return build_problem(model, x0, config, (), horizon, 0.025)


def test_action_models_follow_the_protocol(planar3, lqr):
    problem = _arm_problem(planar3)
    for action in (*lqr.actions()[0], lqr.actions()[1], *problem.running, problem.terminal):
        assert isinstance(action, ActionModel)


def test_box_qp_without_active_bounds_is_newton(rng):
    A = rng.normal(size=(4, 4))
    H = A @ A.T + 4.0 * np.eye(4)
    g = rng.normal(size=4)
    result = box_qp(H, g, np.full(4, -np.inf), np.full(4, np.inf))
    np.testing.assert_allclose(result.x, -np.linalg.solve(H, g), atol=1e-9)
    assert result.free.all()


def test_box_qp_satisfies_kkt_conditions(rng):
    for _ in range(50):
        A = rng.normal(size=(5, 5))
        H = A @ A.T + 0.5 * np.eye(5)
        g = rng.normal(0.0, 5.0, 5)
        lower, upper = -np.ones(5), np.ones(5)
        result = box_qp(H, g, lower, upper, tol=1e-12, max_iters=200)
        x = result.x
        grad = g + H @ x
        assert np.all(x >= lower) and np.all(x <= upper)
        inside = (x > lower) & (x < upper)
        np.testing.assert_allclose(grad[inside], 0.0, atol=1e-5)
        assert np.all(grad[x == lower] >= -1e-5)
        assert np.all(grad[x == upper] <= 1e-5)


def test_box_qp_rejects_indefinite_hessians():
    with pytest.raises(NumericalFailureError):
        box_qp(-np.eye(2), np.ones(2), -np.ones(2), np.ones(2))


def test_unconstrained_lqr_matches_riccati(lqr):
    problem = lqr.problem()
    trajectory, stats = solve(problem, settings=lqr.solver)
    reference = riccati_lqr(*lqr.actions(), problem.x0)
    np.testing.assert_allclose(trajectory.us, reference.us, atol=1e-6)
    np.testing.assert_allclose(trajectory.xs, reference.xs, atol=1e-6)
    assert stats.converged
    assert not stats.stalled


def test_box_constrained_controls_are_exactly_feasible(lqr_box):
    problem = lqr_box.problem()
    reference = riccati_lqr(*lqr_box.actions(), problem.x0)
    assert np.abs(reference.us).max() > 0.5
    trajectory, stats = solve(problem, settings=lqr_box.solver)
    assert np.all(trajectory.us >= problem.u_min)
    assert np.all(trajectory.us <= problem.u_max)
    assert np.any(trajectory.us == problem.u_max) or np.any(trajectory.us == problem.u_min)
    assert stats.converged
    assert np.all(np.diff(stats.cost_history) <= 0.0)


def test_one_full_step_reaches_the_lqr_optimum(lqr):
    problem = lqr.problem()
    trajectory, _ = rollout(problem, np.zeros((problem.T, problem.nu)))
    candidate, _ = forward_pass(problem, trajectory, backward_pass(problem, trajectory), 1.0)
    reference = riccati_lqr(*lqr.actions(), problem.x0)
    np.testing.assert_allclose(candidate.us, reference.us, atol=1e-6)


def test_zero_cost_gives_zero_gains():
    A = np.array([[1.0, 0.1], [0.0, 1.0]])
    B = np.array([[0.0], [0.1]])
    zero = np.zeros((2, 2))
    running = tuple(LinearQuadraticAction(A, B, zero, np.zeros((1, 1))) for _ in range(4))
    problem = OcpProblem(
        x0=np.array([1.0, -0.5]),
        running=running,
        terminal=LinearQuadraticAction(A, B, zero, np.zeros((1, 1)), terminal=True),
        u_min=np.array([-np.inf]),
        u_max=np.array([np.inf]),
        dt=0.1,
    )
    trajectory, _ = rollout(problem, np.zeros((4, 1)))
    gains = backward_pass(problem, trajectory)
    assert np.all(np.asarray(gains.k) == 0.0)
    assert np.all(np.asarray(gains.K) == 0.0)


def test_warm_start_from_the_solution_converges_immediately(lqr, lqr_box):
    for fixture in (lqr, lqr_box):
        problem = fixture.problem()
        solver = BoxFDDP(fixture.solver)
        trajectory, _ = solver.solve(problem)
        _, stats = solver.solve(problem, trajectory)
        assert stats.iterations <= 2
        assert stats.rejected_steps == 0


def test_costs_never_increase_over_accepted_iterations(planar3):
    problem = _arm_problem(planar3, horizon=8)
    _, stats = BoxFDDP(SolverSettings(max_iters=50)).solve(problem)
    assert len(stats.cost_history) >= 2
    assert np.all(np.diff(stats.cost_history) <= 1e-12)


def test_zero_step_reproduces_a_feasible_trajectory(planar3):
    problem = _arm_problem(planar3)
    trajectory, _ = rollout(problem, np.tile(gravity_torque(planar3, problem.x0[:3]), (problem.T, 1)))
    gains = backward_pass(problem, trajectory)
    assert gains.feasible
    candidate, cost = forward_pass(problem, trajectory, gains, 0.0)
    np.testing.assert_allclose(candidate.xs, trajectory.xs, atol=1e-12)
    np.testing.assert_allclose(candidate.us, trajectory.us, atol=1e-12)
    assert np.isfinite(cost)


def test_clamped_controls_get_no_feedback(lqr_box):
    problem = lqr_box.problem()
    trajectory, _ = rollout(problem, np.zeros((problem.T, problem.nu)))
    gains = backward_pass(problem, trajectory)
    clamped = 0
    for t in range(problem.T):
        u = trajectory.us[t] + gains.k[t]
        at_bound = (u == problem.u_min) | (u == problem.u_max)
        clamped += int(at_bound.sum())
        assert np.all(gains.K[t][at_bound] == 0.0)
    assert clamped > 0


@pytest.mark.parametrize("name", ["lqr", "lqr_box"])
def test_infeasible_warm_start_closes_its_gaps(name, request):
    fixture = request.getfixturevalue(name)
    problem = fixture.problem()
    guess = Trajectory.constant(np.zeros(problem.nx), np.zeros(problem.nu), problem.T)
    solver = BoxFDDP(fixture.solver.model_copy(update={"rollout_warm_start": False}))
    trajectory, stats = solver.solve(problem, guess)
    assert np.abs(dynamics_gaps(problem, trajectory)).max() < 1e-9
    assert stats.converged
    # a gappy guess is ranked by the rollout of its controls
    assert stats.cost_history[0] == pytest.approx(rollout(problem, guess.us)[1])
    assert np.all(np.diff(stats.cost_history) <= 0.0)


def test_gappy_arm_guess_never_raises_the_cost(planar3):
    problem = _arm_problem(planar3, horizon=8)
    rng = np.random.default_rng(3)
    guess = Trajectory(
        xs=problem.x0 + 0.05 * rng.standard_normal((problem.T + 1, problem.nx)),
        us=np.tile(gravity_torque(planar3, problem.x0[:3]), (problem.T, 1)),
    )
    _, stats = BoxFDDP(SolverSettings(max_iters=50, rollout_warm_start=False)).solve(problem, guess)
    assert np.all(np.diff(stats.cost_history) <= 0.0)


def test_mismatched_warm_start_is_rejected(lqr):
    problem = lqr.problem()
    with pytest.raises(InvalidArgumentError):
        BoxFDDP().solve(problem, Trajectory.constant(np.zeros(2), np.zeros(1), 3))


def test_contact_ocp_solution_respects_torque_limits(planar3):
    problem = _arm_problem(planar3, c_p=1e6)
    trajectory, _ = BoxFDDP(SolverSettings(max_iters=30)).solve(problem, reset_warm_start(planar3, problem.x0, 5))
    assert np.all(trajectory.us >= planar3.u_min)
    assert np.all(trajectory.us <= planar3.u_max)


def test_finite_difference_derivatives_give_the_same_step(planar3):
    analytic = _arm_problem(planar3)
    numeric = build_problem(
        planar3,
        analytic.x0,
        analytic.metadata["cost"],
        (),
        5,
        0.025,
        SolverSettings(derivatives="finite_difference"),
    )
    trajectory, _ = rollout(analytic, np.zeros((5, 3)))
    np.testing.assert_allclose(
        backward_pass(analytic, trajectory).k, backward_pass(numeric, trajectory).k, rtol=1e-4, atol=1e-6
    )


def test_problem_validation(planar3):
    action = LinearQuadraticAction(np.eye(1), np.eye(1), np.eye(1), np.eye(1))
    with pytest.raises(InvalidArgumentError):
        OcpProblem(x0=np.zeros(1), running=(), terminal=action, u_min=-1.0, u_max=1.0, dt=0.1)
    with pytest.raises(InvalidArgumentError):
        OcpProblem(x0=np.zeros(1), running=(action,), terminal=action, u_min=1.0, u_max=1.0, dt=0.1)
    with pytest.raises(InvalidArgumentError):
        OcpProblem(x0=np.zeros(2), running=(action,), terminal=action, u_min=-1.0, u_max=1.0, dt=0.1)
    assert isinstance(_arm_problem(planar3).running[0], ContactDynamicsAction)


@pytest.mark.parametrize("integrator", ["semi_implicit", "explicit"])
def test_pendulum_free_fall_step(pendulum, integrator):
    theta, dt = 0.7, 0.01
    cost = make_cost(barrier_links=frozenset(), regulation_links=frozenset())
    x0 = np.array([theta, 0.0])
    problem = build_problem(pendulum, x0, cost, (), 1, dt, SolverSettings(integrator=integrator))
    x = rollout_step(problem, x0, np.zeros(1))
    qdd = -9.81 / PENDULUM_LENGTH_M * np.sin(theta)
    if integrator == "semi_implicit":
        expected = [theta + dt * dt * qdd, dt * qdd]
    else:
        expected = [theta, dt * qdd]
    np.testing.assert_allclose(x, expected, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("integrator", ["semi_implicit", "explicit"])
def test_discrete_jacobians_match_finite_differences(planar3, rng, integrator):
    q = np.array([0.3, -0.4, 0.9])
    contacts = (random_contact(planar3, q, rng, link=3),)
    action = ContactDynamicsAction(planar3, 0.01, (), contacts, integrator=integrator)
    x = np.concatenate([q, rng.normal(0.0, 0.5, 3)])
    u = rng.normal(0.0, 2.0, 3)
    derivatives = action.calc_diff(x, u)
    np.testing.assert_allclose(derivatives.xnext, action.step(x, u), atol=1e-12)
    np.testing.assert_allclose(derivatives.fx, central_difference(lambda y: action.step(y, u), x), rtol=1e-6, atol=1e-6)
    np.testing.assert_allclose(derivatives.fu, central_difference(lambda w: action.step(x, w), u), rtol=1e-6, atol=1e-6)


def test_explicit_integrator_solves_the_arm_problem(planar3):
    q = np.array([0.4, -0.6, 0.5])
    position, _ = end_effector_pose(planar3, q)
    config = make_cost(p_des_m=tuple(position + [0.05, 0.0, -0.05]), c_r=0.0, u_ref_nm=tuple(gravity_torque(planar3, q)))
    settings = SolverSettings(max_iters=50, integrator="explicit")
    problem = build_problem(planar3, np.concatenate([q, np.zeros(3)]), config, (), 8, 0.025, settings)
    trajectory, stats = BoxFDDP(settings).solve(problem)
    assert not stats.stalled
    assert stats.cost_history[-1] < stats.cost_history[0]
    assert np.all(np.diff(stats.cost_history) <= 1e-12)
    assert np.abs(dynamics_gaps(problem, trajectory)).max() < 1e-9
