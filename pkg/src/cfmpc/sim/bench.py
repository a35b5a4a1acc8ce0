from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from cfmpc.contact import ContactFeedback, ContactParams, compute_theta
from cfmpc.dynamics import BodyPoint, RobotModel, gravity_torque, link_frames
from cfmpc.mpc import build_problem, reset_warm_start
from cfmpc.sim.documents import LqrFixture, ScenarioConfig
from cfmpc.sim.metrics import solve_time_summary
from cfmpc.sim.scenario import prepare
from cfmpc.solver import BoxFDDP, SolverStats, riccati_lqr

logger = logging.getLogger(__name__)

# solve rates measured on the real 7-DOF arm at T = 5, printed for comparison only
REFERENCE_RATE_HZ = {0: 6800.0, 1: 1900.0, 2: 1800.0}


@dataclass(frozen=True)
class BenchRow:
    contacts: int
    solves: int
    mean_s: float
    p50_s: float
    p95_s: float
    rate_hz: float
    reference_hz: float | None

    def as_dict(self) -> dict[str, Any]:
        return asdict(self)


def bench_contacts(
    model: RobotModel, q: np.ndarray, count: int, k_env: float, force_n: float = 10.0
) -> tuple[ContactParams, ...]:
    """`count` synthetic contacts: first at the tool tip, then at the middle of the link halfway up the arm."""
    frames = link_frames(model, q)
    sites = [model.end_effector, BodyPoint(link=max(1, model.n // 2), offset=0.5 * model.origin_xyz[model.n // 2])]
    directions = [np.array([-1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])]
    if count > len(sites):
        raise ValueError(f"bench supports at most {len(sites)} contacts, got {count}")
    return tuple(
        compute_theta(ContactFeedback(0.0, site.link, frames.point(site), force_n * direction), model, q, k_env)
        for site, direction in zip(sites[:count], directions)
    )


def run_bench(
    config: ScenarioConfig,
    source: str | Path | None = None,
    repeats: int = 200,
    contact_counts: Sequence[int] = (0, 1, 2),
) -> list[BenchRow]:
    """Repeated warm-started solves at the scenario's initial state, one row per contact count."""
    setup = prepare(config, source)
    model, settings = setup.model, config.mpc
    q = setup.plant.state.q
    x = setup.plant.state.as_vector()
    cost = setup.schedule.cost_at(0.0).model_copy(
        update={"u_ref_nm": tuple(np.clip(gravity_torque(model, q), model.u_min, model.u_max))}
    )
    solver = BoxFDDP(settings.solver)
    rows = []
    for count in contact_counts:
        contacts = bench_contacts(model, q, count, settings.contacts.k_env_n_per_m)
        problem = build_problem(model, x, cost, contacts, settings.horizon, settings.dt_s, settings.solver)
        warm_start = reset_warm_start(model, x, settings.horizon)
        times = []
        for _ in range(repeats):
            trajectory, stats = solver.solve(problem, warm_start, max_iters=settings.max_iters)
            times.append(stats.wall_time_s)
            warm_start = trajectory.shifted()
        summary = solve_time_summary(times)
        rows.append(
            BenchRow(
                contacts=count,
                solves=repeats,
                mean_s=summary["mean_s"],
                p50_s=summary["p50_s"],
                p95_s=summary["p95_s"],
                rate_hz=1.0 / summary["mean_s"],
                reference_hz=REFERENCE_RATE_HZ.get(count),
            )
        )
        logger.info(f"⏱️ {count} contact(s): {rows[-1].rate_hz:.0f} Hz over {repeats} solves")
    return rows


def format_bench(rows: Sequence[BenchRow]) -> str:
    lines = [f"{'k':>2} {'mean ms':>9} {'p50 ms':>9} {'p95 ms':>9} {'rate Hz':>9} {'ref Hz':>9}"]
    for row in rows:
        reference = f"{row.reference_hz:9.0f}" if row.reference_hz is not None else f"{'-':>9}"
        lines.append(
            f"{row.contacts:>2} {row.mean_s * 1e3:9.3f} {row.p50_s * 1e3:9.3f} {row.p95_s * 1e3:9.3f} "
            f"{row.rate_hz:9.0f} {reference}"
        )
    return "\n".join(lines)


def _stats(stats: SolverStats) -> dict[str, Any]:
    summary = asdict(stats)
    summary.pop("cost_history")
    return summary


def solve_once(document: ScenarioConfig | LqrFixture, source: str | Path | None = None) -> dict[str, Any]:
    """Cold solve of a document's OCP, then one re-solve warm-started from the result.

    Scenario documents use the initial state and the first phase's cost without contacts. LQR fixtures
    without bounds also report the deviation from the Riccati solution.
    """
    report: dict[str, Any] = {"name": document.name}
    if isinstance(document, LqrFixture):
        problem = document.problem()
        solver = BoxFDDP(document.solver)
    else:
        setup = prepare(document, source)
        model, settings = setup.model, document.mpc
        x = setup.plant.state.as_vector()
        cost = setup.schedule.cost_at(0.0).model_copy(
            update={"u_ref_nm": tuple(np.clip(gravity_torque(model, setup.plant.state.q), model.u_min, model.u_max))}
        )
        problem = build_problem(model, x, cost, (), settings.horizon, settings.dt_s, settings.solver)
        solver = BoxFDDP(settings.solver)

    trajectory, cold = solver.solve(problem)
    _, warm = solver.solve(problem, trajectory)
    report["cold"] = _stats(cold)
    report["warm"] = _stats(warm)
    report["u0"] = trajectory.us[0].tolist()
    if isinstance(document, LqrFixture) and document.u_min is None and document.u_max is None:
        running, terminal = document.actions()
        reference = riccati_lqr(running, terminal, problem.x0)
        report["riccati_max_deviation"] = float(np.max(np.abs(trajectory.us - reference.us)))
    return report
