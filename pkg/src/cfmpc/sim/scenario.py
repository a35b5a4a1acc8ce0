from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from cfmpc.config import output_dir, resolve_reference
from cfmpc.contact import ContactFeedback
from cfmpc.dynamics import JointState, RobotModel, end_effector_pose, gravity_torque, load_robot
from cfmpc.errors import SimulationDivergedError, SolverStalledError
from cfmpc.mpc import ControllerState, FeedbackSnapshot, LatestValue, MpcController, PhaseSchedule
from cfmpc.sim.documents import ScenarioConfig
from cfmpc.sim.metrics import compute_metrics, evaluate_thresholds, phase_windows, write_report
from cfmpc.sim.oracle import ContactOracle, make_oracle
from cfmpc.sim.plant import PlantState, initial_plant, plant_step
from cfmpc.sim.trace import TraceWriter
from cfmpc.solver import SolverStats

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ControlOutput:
    """What one controller cycle hands to the plant loop and the trace."""

    command: np.ndarray
    stats: SolverStats | None = None
    predicted: dict[int, np.ndarray] = field(default_factory=dict)
    contacts_modelled: int = 0
    fault: bool = False


@dataclass
class ScenarioSetup:
    config: ScenarioConfig
    model: RobotModel
    schedule: PhaseSchedule
    controller: MpcController
    oracle: ContactOracle
    plant: PlantState


@dataclass
class RunReport:
    name: str
    passed: bool
    trace_path: Path
    metrics_path: Path
    digest: str
    stalls: int
    report: dict[str, Any]


def prepare(config: ScenarioConfig, source: str | Path | None = None, seed: int | None = None) -> ScenarioSetup:
    model = load_robot(resolve_reference(config.robot, source))
    if config.plant.joint_damping_nm_s is not None:
        model = model.with_damping(config.plant.joint_damping_nm_s)
    q0 = model.check_configuration(np.array(config.initial_q_rad))
    position, rotation = end_effector_pose(model, q0)
    rpy = Rotation.from_matrix(rotation).as_euler("xyz")
    schedule = PhaseSchedule(config.schedule, config.cost, position, rpy)
    state = JointState(q=q0, v=np.zeros(model.n))
    return ScenarioSetup(
        config=config,
        model=model,
        schedule=schedule,
        controller=MpcController(model, schedule, config.mpc),
        oracle=make_oracle(config.oracle, config.seed if seed is None else seed),
        plant=initial_plant(model, state, config.environment, config.disturbances),
    )


def _control(controller: MpcController, state: ControllerState, snapshot: FeedbackSnapshot, now: float | None = None):
    command, state, stats = controller.step(state, snapshot, now)
    output = ControlOutput(
        command=command,
        stats=stats,
        predicted=state.predicted_forces,
        contacts_modelled=len(state.contacts),
        fault=state.fault,
    )
    return output, state


def _trace_row(
    setup: ScenarioSetup, plant: PlantState, output: ControlOutput, feedback: list[ContactFeedback]
) -> np.ndarray:
    model, schedule = setup.model, setup.schedule
    n = model.n
    t = plant.t
    position, _ = end_effector_pose(model, plant.state.q)
    feedback_forces = np.zeros((n, 3))
    for report in feedback:
        feedback_forces[report.link - 1] = report.force
    predicted = np.zeros((n, 3))
    for link, force in output.predicted.items():
        predicted[link - 1] = force
    stats = output.stats
    solver = (
        [stats.iterations, stats.cost, stats.gap_norm, stats.regularization, stats.step_length, float(stats.stalled)]
        if stats is not None
        else [0.0, np.nan, np.nan, np.nan, 0.0, 0.0]
    )
    return np.concatenate(
        [
            [t, schedule.phase_index(t)],
            plant.state.q,
            plant.state.v,
            output.command,
            position,
            schedule.target(t),
            plant.link_forces(n).ravel(),
            feedback_forces.ravel(),
            predicted.ravel(),
            solver,
            [output.contacts_modelled, float(output.fault)],
        ]
    )


def _run_deterministic(setup: ScenarioSetup, writer: TraceWriter) -> tuple[list[float], int]:
    """Plant, oracle and controller interleaved in one thread with fixed tick ratios."""
    config, model = setup.config, setup.model
    dt = config.plant.dt_s
    steps = int(round(config.duration_s / dt))
    ratio = max(1, int(round(config.mpc.period_s / dt)))
    plant = setup.plant
    controller_state = setup.controller.initial_state()
    output = ControlOutput(command=np.clip(gravity_torque(model, plant.state.q), model.u_min, model.u_max))
    feedback: list[ContactFeedback] = []
    solve_times: list[float] = []
    for i in range(steps):
        polled = setup.oracle.poll(plant)
        if polled is not None:
            feedback = polled
        if i % ratio == 0:
            snapshot = FeedbackSnapshot(timestamp=plant.t, state=plant.state, contacts=tuple(feedback))
            output, controller_state = _control(setup.controller, controller_state, snapshot)
            if output.stats is not None:
                solve_times.append(output.stats.wall_time_s)
        writer.append(_trace_row(setup, plant, output, feedback))
        plant = plant_step(plant, model, output.command, config.environment, config.disturbances, dt)
    return solve_times, controller_state.stalls


def _run_realtime(setup: ScenarioSetup, writer: TraceWriter) -> tuple[list[float], int]:
    """Controller in its own thread on the latest snapshot; the plant loop is paced by the wall clock."""
    config, model = setup.config, setup.model
    dt = config.plant.dt_s
    steps = int(round(config.duration_s / dt))
    snapshots: LatestValue[FeedbackSnapshot] = LatestValue()
    outputs: LatestValue[ControlOutput] = LatestValue(
        ControlOutput(command=np.clip(gravity_torque(model, setup.plant.state.q), model.u_min, model.u_max))
    )
    clock: LatestValue[float] = LatestValue(0.0)
    stop = threading.Event()
    solve_times: list[float] = []
    stalls = [0]
    errors: list[BaseException] = []

    def control_loop() -> None:
        state = setup.controller.initial_state()
        seen = 0
        try:
            while not stop.is_set():
                snapshot, version = snapshots.get()
                if snapshot is None or version == seen:
                    time.sleep(1e-4)
                    continue
                seen = version
                now, _ = clock.get()
                output, state = _control(setup.controller, state, snapshot, now)
                if output.stats is not None:
                    solve_times.append(output.stats.wall_time_s)
                stalls[0] = state.stalls
                outputs.put(output)
        except BaseException as e:  # surfaced by the plant loop
            errors.append(e)
            stop.set()

    thread = threading.Thread(target=control_loop, name="mpc", daemon=True)
    thread.start()
    plant = setup.plant
    feedback: list[ContactFeedback] = []
    start = time.perf_counter()
    try:
        for i in range(steps):
            if errors:
                raise errors[0]
            polled = setup.oracle.poll(plant)
            if polled is not None:
                feedback = polled
            snapshots.put(FeedbackSnapshot(timestamp=plant.t, state=plant.state, contacts=tuple(feedback)))
            clock.put(plant.t)
            output, _ = outputs.get()
            writer.append(_trace_row(setup, plant, output, feedback))
            plant = plant_step(plant, model, output.command, config.environment, config.disturbances, dt)
            delay = start + (i + 1) * dt - time.perf_counter()
            if delay > 0.0:
                time.sleep(delay)
    finally:
        stop.set()
        thread.join(timeout=5.0)
    # the controller may fail while the last plant tick is running
    if errors:
        raise errors[0]
    return solve_times, stalls[0]


def run_scenario(
    config: ScenarioConfig,
    source: str | Path | None = None,
    out_dir: str | Path | None = None,
    seed: int | None = None,
    deterministic: bool = True,
) -> RunReport:
    """Closed-loop run; writes `<out>/<name>/trace.csv` and `metrics.yaml`."""
    setup = prepare(config, source, seed)
    target = Path(out_dir) if out_dir is not None else output_dir()
    target = target / config.name
    target.mkdir(parents=True, exist_ok=True)
    writer = TraceWriter(setup.model.n)
    logger.info(f"🚀 running '{config.name}' for {config.duration_s}s ({'deterministic' if deterministic else 'real-time'})")
    try:
        if deterministic:
            solve_times, stalls = _run_deterministic(setup, writer)
        else:
            solve_times, stalls = _run_realtime(setup, writer)
    except SimulationDivergedError as e:
        dump_path = target / "diverged.yaml"
        dump_path.write_text(yaml.safe_dump({"error": str(e), **e.dump}, sort_keys=False))
        logger.error(f"💥 simulation diverged, state dumped to {dump_path}")
        raise

    trace_path = target / "trace.csv"
    digest = writer.save(trace_path)
    table = compute_metrics(writer.trace(), phase_windows(setup.schedule), setup.model.n)
    results = evaluate_thresholds(table, config.thresholds, stalls)
    metrics_path = target / "metrics.yaml"
    report = write_report(
        metrics_path,
        config.name,
        table,
        results,
        solve_times,
        extra={"seed": config.seed if seed is None else seed, "stalls": stalls, "trace_sha256": digest},
    )
    logger.info(f"📝 trace {trace_path} (sha256 {digest[:12]}), metrics {metrics_path}")
    if stalls > config.max_stalls:
        raise SolverStalledError(f"solver stalled in {stalls} cycles (tolerated: {config.max_stalls})")
    return RunReport(
        name=config.name,
        passed=report["passed"],
        trace_path=trace_path,
        metrics_path=metrics_path,
        digest=digest,
        stalls=stalls,
        report=report,
    )
