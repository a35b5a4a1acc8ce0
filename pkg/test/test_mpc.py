import inspect
import threading

import numpy as np
import pytest
from conftest import make_cost
from scipy.spatial.transform import Rotation

from cfmpc.contact import ContactFeedback, spring_force
from cfmpc.dynamics import BodyPoint, JointState, end_effector_pose, gravity_torque, link_frames
from cfmpc.errors import ConfigError, InvalidArgumentError
from cfmpc.mpc import (
    CirclePhase,
    ContactPolicy,
    FeedbackSnapshot,
    HoldPhase,
    LatestValue,
    LinearPhase,
    MpcController,
    MpcSettings,
    PhaseBase,
    PhaseSchedule,
    PhaseScheduleSpec,
    reconcile_contacts,
    reset_warm_start,
    run_phase_schedule,
)
from cfmpc.solver import SolverStats, Trajectory

Q = np.array([0.3, 0.2, -0.1])
POLICY = ContactPolicy()


def _report(planar3, t=0.0, link=2, force=(0.0, 0.0, 7.0), shift=(0.0, 0.0, 0.0)) -> ContactFeedback:
    point = link_frames(planar3, Q).point(BodyPoint(link=link, offset=np.array([0.0, 0.0, 0.1])))
    return ContactFeedback(t, link, point + np.array(shift), np.array(force))


def _tracked(planar3):
    tracked, _ = reconcile_contacts((), [_report(planar3)], planar3, Q, 0.0, POLICY)
    return tracked


class TestReconcile:
    def test_a_new_contact_triggers_a_rebuild(self, planar3):
        tracked, rebuild = reconcile_contacts((), [_report(planar3)], planar3, Q, 0.0, POLICY)
        assert rebuild
        assert [c.link for c in tracked] == [2]
        np.testing.assert_allclose(spring_force(tracked[0].params, planar3, Q), [0.0, 0.0, 7.0], atol=1e-9)

    def test_reports_below_threshold_are_ignored(self, planar3, caplog):
        with caplog.at_level("DEBUG", logger="cfmpc.mpc.contacts"):
            tracked, rebuild = reconcile_contacts(
                (), [_report(planar3, force=(0.0, 0.3, 0.0))], planar3, Q, 0.0, POLICY
            )
        assert tracked == ()
        assert not rebuild
        assert caplog.records
        assert all(record.levelname == "DEBUG" for record in caplog.records)

    def test_a_steady_report_refreshes_without_rebuild(self, planar3):
        report = _report(planar3, t=0.004, force=(0.0, 0.0, 9.0))
        tracked, rebuild = reconcile_contacts(_tracked(planar3), [report], planar3, Q, 0.004, POLICY)
        assert not rebuild
        assert tracked[0].last_seen == pytest.approx(0.004)
        np.testing.assert_allclose(spring_force(tracked[0].params, planar3, Q), [0.0, 0.0, 9.0], atol=1e-9)

    def test_onset_policy_keeps_the_first_model(self, planar3):
        policy = ContactPolicy(refresh="onset")
        first = _tracked(planar3)
        report = _report(planar3, t=0.004, force=(0.0, 0.0, 9.0))
        tracked, _ = reconcile_contacts(first, [report], planar3, Q, 0.004, policy)
        assert tracked[0].params is first[0].params

    def test_silence_drops_the_contact(self, planar3):
        tracked = _tracked(planar3)
        kept, rebuild = reconcile_contacts(tracked, [], planar3, Q, 0.03, POLICY)
        assert len(kept) == 1 and not rebuild
        dropped, rebuild = reconcile_contacts(tracked, [], planar3, Q, 0.06, POLICY)
        assert dropped == () and rebuild

    def test_a_jump_re_attaches_the_contact(self, planar3):
        tracked = _tracked(planar3)
        report = _report(planar3, t=0.004, shift=(0.0, 0.06, 0.0))
        moved, rebuild = reconcile_contacts(tracked, [report], planar3, Q, 0.004, POLICY)
        assert rebuild
        assert len(moved) == 1
        np.testing.assert_allclose(moved[0].position, report.position)
        assert moved[0].params.attachment is not tracked[0].params.attachment

    def test_duplicate_reports_keep_the_larger_force(self, planar3):
        reports = [_report(planar3, force=(0.0, 0.0, 5.0)), _report(planar3, force=(0.0, 0.0, 9.0))]
        tracked, _ = reconcile_contacts((), reports, planar3, Q, 0.0, POLICY)
        assert len(tracked) == 1
        np.testing.assert_allclose(spring_force(tracked[0].params, planar3, Q), [0.0, 0.0, 9.0], atol=1e-9)


def test_reset_warm_start_predicts_the_measured_force(planar3):
    x = np.concatenate([Q, np.zeros(3)])
    contact = _tracked(planar3)[0].params
    warm_start = reset_warm_start(planar3, x, 5)
    assert warm_start.xs.shape == (6, 6) and warm_start.us.shape == (5, 3)
    np.testing.assert_allclose(spring_force(contact, planar3, warm_start.xs[1, :3]), [0.0, 0.0, 7.0], atol=1e-9)
    np.testing.assert_allclose(warm_start.us[0], gravity_torque(planar3, Q))


@pytest.fixture
def schedule():
    spec = PhaseScheduleSpec(
        phases=[
            LinearPhase(name="move", start_s=1.0, target_m=(0.6, 0.0, 0.4), duration_s=2.0),
            CirclePhase(name="circle", start_s=4.0, radius_m=0.05, period_s=8.0, position_axes=(0, 1, 1)),
            HoldPhase(name="hold", start_s=12.0, cost_overrides={"c_p": 50.0}),
        ]
    )
    return PhaseSchedule(spec, make_cost(), np.array([0.5, 0.0, 0.4]), np.array([0.0, 1.2, 0.0]))


class TestSchedule:
    def test_targets_follow_the_phases(self, schedule):
        np.testing.assert_allclose(schedule.target(0.5), [0.5, 0.0, 0.4])
        np.testing.assert_allclose(schedule.target(2.0), [0.55, 0.0, 0.4])
        np.testing.assert_allclose(schedule.target(3.5), [0.6, 0.0, 0.4])

    def test_circle_starts_at_the_previous_end_pose(self, schedule):
        np.testing.assert_allclose(schedule.target(4.0), [0.6, 0.0, 0.4], atol=1e-12)
        np.testing.assert_allclose(schedule.target(6.0), [0.6, -0.05, 0.45], atol=1e-12)
        np.testing.assert_allclose(schedule.target(8.0), [0.6, -0.1, 0.4], atol=1e-12)

    def test_hold_keeps_the_pose_reached_by_the_circle(self, schedule):
        np.testing.assert_allclose(schedule.target(15.0), [0.6, 0.0, 0.4], atol=1e-12)
        assert schedule.cost_at(15.0).c_p == 50.0

    def test_phase_costs(self, schedule):
        assert schedule.phase_name(schedule.phase_index(0.0)) == "initial"
        assert schedule.cost_at(0.0).p_des_m == (0.5, 0.0, 0.4)
        assert schedule.cost_at(5.0).position_axes == (0, 1, 1)
        assert schedule.cost_at(2.0).position_axes == (1, 1, 1)
        np.testing.assert_allclose(schedule.cost_at(2.0).p_des_m, [0.55, 0.0, 0.4])

    def test_run_phase_schedule_evaluates_every_time(self, schedule):
        configs = run_phase_schedule(schedule, [0.0, 1.0, 2.0, 4.0])
        assert len(configs) == 4
        np.testing.assert_allclose(configs[2].p_des_m, [0.55, 0.0, 0.4])

    def test_invalid_phase_override_is_a_config_error(self):
        spec = PhaseScheduleSpec(phases=[HoldPhase(name="bad", start_s=0.0, cost_overrides={"c_p": -1.0})])
        with pytest.raises(ConfigError):
            PhaseSchedule(spec, make_cost(), np.zeros(3), np.zeros(3))

    def test_phase_base_cannot_be_instantiated(self):
        assert inspect.isabstract(PhaseBase)
        with pytest.raises(TypeError):
            PhaseBase(name="bare", start_s=0.0)

    def test_phases_must_be_sorted(self):
        with pytest.raises(ValueError):
            PhaseScheduleSpec(phases=[HoldPhase(name="b", start_s=2.0), HoldPhase(name="a", start_s=1.0)])


@pytest.fixture
def controller(planar3):
    position, R = end_effector_pose(planar3, Q)
    schedule = PhaseSchedule(
        PhaseScheduleSpec(), make_cost(c_lambda=0.0), position, Rotation.from_matrix(R).as_euler("xyz")
    )
    return MpcController(planar3, schedule, MpcSettings())


def _snapshot(t, contacts=()):
    return FeedbackSnapshot(timestamp=t, state=JointState(q=Q, v=np.zeros(3)), contacts=tuple(contacts))


class TestController:
    def test_at_rest_on_target_the_command_is_gravity_compensation(self, controller, planar3):
        command, state, stats = controller.step(controller.initial_state(), _snapshot(0.0))
        np.testing.assert_allclose(command, gravity_torque(planar3, Q), atol=1e-6)
        assert stats is not None and not stats.stalled
        assert state.cycle == 1 and not state.fault

    def test_the_same_snapshot_gives_the_same_command(self, controller, planar3):
        snapshot = _snapshot(0.0, [_report(planar3)])
        first, _, _ = controller.step(controller.initial_state(), snapshot)
        second, _, _ = controller.step(controller.initial_state(), snapshot)
        np.testing.assert_array_equal(first, second)

    def test_contacts_are_modelled_and_predicted(self, controller, planar3):
        _, state, _ = controller.step(controller.initial_state(), _snapshot(0.0, [_report(planar3)]))
        assert [c.link for c in state.contacts] == [2]
        assert set(state.predicted_forces) == {2}

    def test_without_contact_feedback_nothing_is_modelled(self, planar3, controller):
        blind = MpcController(planar3, controller.schedule, MpcSettings(contact_feedback=False))
        _, state, _ = blind.step(blind.initial_state(), _snapshot(0.0, [_report(planar3)]))
        assert state.contacts == ()
        assert state.cost.barrier_links == frozenset() and state.cost.regulation_links == frozenset()

    def test_stale_feedback_holds_the_last_command(self, controller):
        command, state, _ = controller.step(controller.initial_state(), _snapshot(0.0))
        held, stale, stats = controller.step(state, _snapshot(0.0), now=0.02)
        assert stats is None
        assert stale.fault
        np.testing.assert_array_equal(held, command)

    def test_a_stalled_solve_keeps_the_previous_plan(self, controller, planar3, monkeypatch):
        command, state, _ = controller.step(controller.initial_state(), _snapshot(0.0, [_report(planar3)]))

        def stalled(problem, warm_start, max_iters=None):
            diverged = Trajectory(xs=warm_start.xs + 0.5, us=warm_start.us + 10.0)
            stats = SolverStats(
                iterations=max_iters,
                cost=np.inf,
                gap_norm=0.0,
                regularization=1e9,
                step_length=0.0,
                wall_time_s=0.0,
                stalled=True,
            )
            return diverged, stats

        monkeypatch.setattr(controller.solver, "solve", stalled)
        held, next_state, stats = controller.step(state, _snapshot(0.004, [_report(planar3, t=0.004)]))
        assert stats.stalled and next_state.stalls == 1
        np.testing.assert_array_equal(held, command)
        contact = next_state.contacts[0].params
        expected = spring_force(contact, planar3, state.warm_start.xs[1, :3])
        np.testing.assert_allclose(next_state.predicted_forces[2], expected, atol=1e-12)

    def test_older_snapshots_are_rejected(self, controller):
        _, state, _ = controller.step(controller.initial_state(), _snapshot(0.1))
        with pytest.raises(InvalidArgumentError):
            controller.step(state, _snapshot(0.05))


def test_latest_value_hands_over_the_newest_item():
    box: LatestValue[int] = LatestValue()
    assert box.get() == (None, 0)
    box.put(1)
    box.put(2)
    assert box.get() == (2, 2)

    def writer():
        for i in range(1000):
            box.put(i)

    threads = [threading.Thread(target=writer) for _ in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    value, version = box.get()
    assert version == 4002
    assert value == 999
