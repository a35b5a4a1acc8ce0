from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from cfmpc.errors import InvalidArgumentError, NumericalFailureError
from cfmpc.solver.boxqp import box_qp
from cfmpc.solver.problem import (
    ActionDerivatives,
    OcpProblem,
    SolverSettings,
    SolverStats,
    Trajectory,
    rollout,
)

logger = logging.getLogger(__name__)

# gaps below this are treated as closed
FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Gains:
    """Backward-pass output: u = u_bar + alpha k + K (x - x_bar), with the data of the expected improvement."""

    k: np.ndarray  # (T, nu)
    K: np.ndarray  # (T, nu, nx)
    Qu: np.ndarray  # (T, nu)
    Quu: np.ndarray  # (T, nu, nu), regularized
    Vx: np.ndarray  # (T + 1, nx), gap corrected
    Vxx: np.ndarray  # (T + 1, nx, nx)
    gaps: np.ndarray  # (T + 1, nx)
    feasible: bool

    def expected_improvement(self, trajectory: Trajectory, candidate: Trajectory) -> tuple[float, float]:
        """Coefficients (d0, d1) of the predicted decrease alpha (d0 + alpha d1 / 2)."""
        dg = -float(np.einsum("ti,ti->", self.Qu, self.k))
        dq = -float(np.einsum("ti,tij,tj->", self.k, self.Quu, self.k))
        dv = 0.0
        if not self.feasible:
            f = self.gaps
            dg -= float(np.einsum("ti,ti->", self.Vx, f))
            dq += float(np.einsum("ti,tij,tj->", f, self.Vxx, f))
            dx = candidate.xs - trajectory.xs
            dv = float(np.einsum("ti,tij,tj->", f, self.Vxx, dx))
        return dg + dv, dq - 2.0 * dv


@dataclass(frozen=True, eq=False)
class _Linearization:
    stages: list[ActionDerivatives]
    terminal: ActionDerivatives
    gaps: np.ndarray
    cost: float

    @property
    def gap_norm(self) -> float:
        return float(np.max(np.abs(self.gaps))) if self.gaps.size else 0.0


class _BackwardPassFailure(Exception):
    pass


def _linearize(problem: OcpProblem, trajectory: Trajectory) -> _Linearization:
    stages = [action.calc_diff(x, u) for action, x, u in zip(problem.running, trajectory.xs, trajectory.us)]
    terminal = problem.terminal.calc_diff(trajectory.xs[-1], None)
    gaps = np.empty_like(trajectory.xs)
    gaps[0] = problem.x0 - trajectory.xs[0]
    for t, stage in enumerate(stages):
        gaps[t + 1] = stage.xnext - trajectory.xs[t + 1]
    cost = sum(stage.cost.value for stage in stages) + terminal.cost.value
    return _Linearization(stages=stages, terminal=terminal, gaps=gaps, cost=float(cost))


def _merit(problem: OcpProblem, trajectory: Trajectory, cost: float, gap_norm: float) -> float:
    """Cost the iterates are ranked by: their own cost once feasible, else the cost of rolling out their controls."""
    if gap_norm < FEASIBILITY_TOL:
        return cost
    try:
        _, rolled = rollout(problem, trajectory.us)
    except NumericalFailureError:
        return float("inf")
    return float(rolled) if np.isfinite(rolled) else float("inf")


def _backward_pass(
    problem: OcpProblem,
    trajectory: Trajectory,
    lin: _Linearization,
    regularization: float,
    settings: SolverSettings,
    previous: Gains | None = None,
) -> Gains:
    T, nx, nu = problem.T, problem.nx, problem.nu
    feasible = lin.gap_norm < FEASIBILITY_TOL
    k = np.zeros((T, nu))
    K = np.zeros((T, nu, nx))
    Qu_all = np.zeros((T, nu))
    Quu_all = np.zeros((T, nu, nu))
    Vx = np.zeros((T + 1, nx))
    Vxx = np.zeros((T + 1, nx, nx))
    eye_x = np.eye(nx)
    eye_u = np.eye(nu)

    Vxx[T] = lin.terminal.cost.lxx + regularization * eye_x
    Vx[T] = lin.terminal.cost.lx
    if not feasible:
        Vx[T] = Vx[T] + Vxx[T] @ lin.gaps[T]
    for t in reversed(range(T)):
        stage = lin.stages[t]
        c = stage.cost
        fx, fu = stage.fx, stage.fu
        Qx = c.lx + fx.T @ Vx[t + 1]
        Qu = c.lu + fu.T @ Vx[t + 1]
        VxxFx = Vxx[t + 1] @ fx
        Qxx = c.lxx + fx.T @ VxxFx
        Qux = c.lux + fu.T @ VxxFx
        Quu = c.luu + fu.T @ Vxx[t + 1] @ fu + regularization * eye_u
        u = trajectory.us[t]
        start = previous.k[t] if previous is not None else None
        try:
            qp = box_qp(Quu, Qu, problem.u_min - u, problem.u_max - u, start, tol=settings.box_qp_tol)
        except NumericalFailureError as e:
            raise _BackwardPassFailure(f"stage {t}: {e}") from e
        k[t] = qp.x
        K[t] = qp.feedback(Qux)
        Qu_all[t], Quu_all[t] = Qu, Quu
        QuuK = Quu @ K[t]
        Vx[t] = Qx + K[t].T @ (Quu @ k[t]) + K[t].T @ Qu + Qux.T @ k[t]
        V = Qxx + K[t].T @ QuuK + K[t].T @ Qux + Qux.T @ K[t]
        Vxx[t] = 0.5 * (V + V.T) + regularization * eye_x
        if not feasible:
            Vx[t] = Vx[t] + Vxx[t] @ lin.gaps[t]
        if not (np.all(np.isfinite(Vx[t])) and np.all(np.isfinite(Vxx[t]))):
            raise _BackwardPassFailure(f"non-finite value function at stage {t}")
    return Gains(k=k, K=K, Qu=Qu_all, Quu=Quu_all, Vx=Vx, Vxx=Vxx, gaps=lin.gaps, feasible=feasible)


def backward_pass(
    problem: OcpProblem,
    trajectory: Trajectory,
    regularization: float = 1e-9,
    settings: SolverSettings | None = None,
) -> Gains:
    """Feedforward/feedback gains of every stage; clamped control dimensions get zero feedback rows."""
    settings = settings or SolverSettings()
    try:
        return _backward_pass(problem, trajectory, _linearize(problem, trajectory), regularization, settings)
    except _BackwardPassFailure as e:
        raise NumericalFailureError(str(e)) from e


def forward_pass(
    problem: OcpProblem, trajectory: Trajectory, gains: Gains, step_length: float
) -> tuple[Trajectory, float]:
    """Nonlinear rollout with clamped controls; open gaps shrink by (1 - step_length)."""
    if not 0.0 <= step_length <= 1.0:
        raise InvalidArgumentError(f"step length {step_length} outside [0, 1]")
    T = problem.T
    xs = np.empty_like(trajectory.xs)
    us = np.empty_like(trajectory.us)
    xnext = problem.x0
    cost = 0.0
    for t in range(T):
        xs[t] = xnext if gains.feasible else xnext - (1.0 - step_length) * gains.gaps[t]
        dx = xs[t] - trajectory.xs[t]
        us[t] = np.clip(
            trajectory.us[t] + step_length * gains.k[t] + gains.K[t] @ dx, problem.u_min, problem.u_max
        )
        try:
            xnext, value = problem.running[t].calc(xs[t], us[t])
        except NumericalFailureError:
            return Trajectory(xs=xs, us=us), float("inf")
        cost += value
        if not (np.all(np.isfinite(xnext)) and np.isfinite(cost)):
            return Trajectory(xs=xs, us=us), float("inf")
    xs[T] = xnext if gains.feasible else xnext - (1.0 - step_length) * gains.gaps[T]
    _, value = problem.terminal.calc(xs[T], None)
    return Trajectory(xs=xs, us=us), float(cost + value)


class BoxFDDP:
    """Feasibility-driven DDP with hard control bounds.

    One instance per control thread; it keeps no state between `solve` calls besides its settings.
    """

    def __init__(self, settings: SolverSettings | None = None):
        self.settings = settings or SolverSettings()

    def solve(
        self, problem: OcpProblem, warm_start: Trajectory | None = None, max_iters: int | None = None
    ) -> tuple[Trajectory, SolverStats]:
        settings = self.settings
        max_iters = max_iters or settings.max_iters
        start = time.perf_counter()
        trajectory = self._initial_guess(problem, warm_start)

        regularization = settings.reg_init
        step_length = 0.0
        rejected = 0
        converged = stalled = False
        lin = _linearize(problem, trajectory)
        merit = _merit(problem, trajectory, lin.cost, lin.gap_norm)
        history = [merit]
        gains: Gains | None = None
        iterations = 0
        while iterations < max_iters:
            iterations += 1
            try:
                gains = _backward_pass(problem, trajectory, lin, regularization, settings, gains)
            except _BackwardPassFailure as e:
                logger.debug(f"backward pass failed at reg {regularization:.1e}: {e}")
                if regularization >= settings.reg_max:
                    stalled = True
                    break
                regularization = min(regularization * settings.reg_increase, settings.reg_max)
                gains = None
                continue

            d0, _ = gains.expected_improvement(trajectory, trajectory)
            if gains.feasible and d0 < settings.tol:
                converged = True
                break

            accepted = None
            for alpha in settings.step_lengths:
                candidate, cost = forward_pass(problem, trajectory, gains, alpha)
                if not np.isfinite(cost):
                    rejected += 1
                    continue
                if gains.feasible:
                    d0, d1 = gains.expected_improvement(trajectory, candidate)
                    expected = alpha * (d0 + 0.5 * alpha * d1)
                    actual = merit - cost
                    # a negligible predicted decrease only needs no increase
                    ok = expected >= 0.0 and (
                        actual > settings.accept_ratio * expected or (expected < settings.tol and actual >= 0.0)
                    )
                    candidate_merit = cost
                else:
                    # a full step closes every gap, so its cost already is the rollout cost
                    candidate_merit = cost if alpha == 1.0 else _merit(problem, candidate, cost, np.inf)
                    actual = merit - candidate_merit
                    ok = actual >= 0.0
                if ok:
                    accepted = (alpha, candidate, actual, candidate_merit)
                    break
                rejected += 1

            if accepted is None:
                logger.debug(f"iteration {iterations}: every step rejected at reg {regularization:.1e}")
                if regularization >= settings.reg_max:
                    stalled = True
                    break
                regularization = min(regularization * settings.reg_increase, settings.reg_max)
                continue

            step_length, trajectory, improvement, merit = accepted
            was_feasible = gains.feasible
            lin = _linearize(problem, trajectory)
            history.append(merit)
            logger.debug(
                f"iteration {iterations}: cost {lin.cost:.6e} step {step_length:.4g} "
                f"reg {regularization:.1e} gap {lin.gap_norm:.2e}"
            )
            if step_length > 0.5:
                regularization = max(regularization * settings.reg_decrease, settings.reg_min)
            elif step_length <= 0.01:
                regularization = min(regularization * settings.reg_increase, settings.reg_max)
            if was_feasible and abs(improvement) < settings.tol:
                converged = True
                break

        stats = SolverStats(
            iterations=iterations,
            cost=lin.cost,
            gap_norm=lin.gap_norm,
            regularization=regularization,
            step_length=step_length,
            wall_time_s=time.perf_counter() - start,
            rejected_steps=rejected,
            converged=converged,
            stalled=stalled,
            cost_history=tuple(history),
        )
        if stalled:
            logger.warning(f"⚠️ solver stalled after {iterations} iterations (reg {regularization:.1e})")
        return trajectory, stats

    def _initial_guess(self, problem: OcpProblem, warm_start: Trajectory | None) -> Trajectory:
        if warm_start is None:
            us = np.tile(np.clip(np.zeros(problem.nu), problem.u_min, problem.u_max), (problem.T, 1))
            return rollout(problem, us)[0]
        if not warm_start.matches(problem):
            raise InvalidArgumentError(
                f"warm start of shape {warm_start.xs.shape}/{warm_start.us.shape} does not match the problem"
            )
        us = np.clip(warm_start.us, problem.u_min, problem.u_max)
        if self.settings.rollout_warm_start:
            return rollout(problem, us)[0]
        return Trajectory(xs=warm_start.xs.copy(), us=us)


def solve(
    problem: OcpProblem,
    warm_start: Trajectory | None = None,
    settings: SolverSettings | None = None,
) -> tuple[Trajectory, SolverStats]:
    return BoxFDDP(settings).solve(problem, warm_start)


__all__ = ["BoxFDDP", "Gains", "backward_pass", "forward_pass", "solve"]
