from __future__ import annotations

from typing import Literal, Sequence

import numpy as np

from cfmpc.contact import ContactParams
from cfmpc.costs import CostConfig, CostEval, CostTerm, StageKinematics, build_cost_terms
from cfmpc.dynamics import (
    ForwardDynamicsDerivatives,
    JointState,
    RobotModel,
    forward_dynamics,
    forward_dynamics_derivatives,
    forward_dynamics_derivatives_fd,
    link_frames,
)
from cfmpc.errors import NumericalFailureError
from cfmpc.solver import ActionDerivatives, OcpProblem, SolverSettings

Integrator = Literal["semi_implicit", "explicit"]


class ContactDynamicsAction:
    """Euler-discretized manipulator dynamics with spring contacts lambda(q), and the stage cost.

    Running costs are weighted by dt; the terminal action (u = None) carries the unweighted cost.
    """

    def __init__(
        self,
        model: RobotModel,
        dt: float,
        terms: Sequence[CostTerm],
        contacts: Sequence[ContactParams] = (),
        integrator: Integrator = "semi_implicit",
        derivatives: Literal["analytic", "finite_difference"] = "analytic",
        terminal: bool = False,
    ):
        self.model = model
        self.dt = dt
        self.terms = tuple(terms)
        self.contacts = tuple(contacts)
        self.integrator = integrator
        self.derivatives = derivatives
        self.terminal = terminal
        self.weight = 1.0 if terminal else dt
        self.nx = 2 * model.n
        self.nu = model.n

    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        state = JointState.from_vector(x)
        frames = link_frames(self.model, state.q)
        forces = [(c.attachment, c.K_env @ (c.r_env - frames.point(c.attachment))) for c in self.contacts]
        qdd = forward_dynamics(self.model, state, u, forces, frames)
        return self._integrate(state, qdd)

    def _integrate(self, state: JointState, qdd: np.ndarray) -> np.ndarray:
        if not np.all(np.isfinite(qdd)):
            raise NumericalFailureError("non-finite joint acceleration")
        dt = self.dt
        if self.integrator == "semi_implicit":
            v = state.v + dt * qdd
            q = state.q + dt * v
        else:
            q = state.q + dt * state.v
            v = state.v + dt * qdd
        return np.concatenate([q, v])

    def _cost(self, x: np.ndarray, u: np.ndarray | None) -> tuple[JointState, CostEval]:
        state = JointState.from_vector(x)
        kin = StageKinematics.compute(self.model, state, self.contacts)
        total = CostEval.zero(self.nx, self.nu)
        for term in self.terms:
            total = total + term.evaluate(kin, u)
        return state, total.scaled(self.weight)

    def calc(self, x: np.ndarray, u: np.ndarray | None) -> tuple[np.ndarray | None, float]:
        _, cost = self._cost(x, u)
        if self.terminal or u is None:
            return None, cost.value
        return self.step(x, u), cost.value

    def calc_diff(self, x: np.ndarray, u: np.ndarray | None) -> ActionDerivatives:
        state, cost = self._cost(x, u)
        if self.terminal or u is None:
            return ActionDerivatives(xnext=None, cost=cost, fx=None, fu=None)
        if self.derivatives == "analytic":
            fd = forward_dynamics_derivatives(self.model, state, u, self.contacts)
        else:
            fd = forward_dynamics_derivatives_fd(self.model, state, u, self.contacts)
        fx, fu = self._discrete_jacobians(fd)
        return ActionDerivatives(xnext=self._integrate(state, fd.qdd), cost=cost, fx=fx, fu=fu)

    def _discrete_jacobians(self, fd: ForwardDynamicsDerivatives) -> tuple[np.ndarray, np.ndarray]:
        n, dt = self.model.n, self.dt
        eye = np.eye(n)
        dv_dx = np.hstack([dt * fd.dq, eye + dt * fd.dv])
        dv_du = dt * fd.du
        if self.integrator == "semi_implicit":
            dq_dx = np.hstack([eye, np.zeros((n, n))]) + dt * dv_dx
            dq_du = dt * dv_du
        else:
            dq_dx = np.hstack([eye, dt * eye])
            dq_du = np.zeros((n, n))
        return np.vstack([dq_dx, dv_dx]), np.vstack([dq_du, dv_du])


def build_problem(
    model: RobotModel,
    x0: np.ndarray,
    cost: CostConfig,
    contacts: Sequence[ContactParams],
    horizon: int,
    dt: float,
    settings: SolverSettings | None = None,
) -> OcpProblem:
    settings = settings or SolverSettings()
    running_terms = build_cost_terms(cost)
    terminal_terms = build_cost_terms(cost, terminal=True)
    options = dict(
        model=model,
        dt=dt,
        contacts=contacts,
        integrator=settings.integrator,
        derivatives=settings.derivatives,
    )
    running = tuple(ContactDynamicsAction(terms=running_terms, **options) for _ in range(horizon))
    terminal = ContactDynamicsAction(terms=terminal_terms, terminal=True, **options)
    return OcpProblem(
        x0=x0,
        running=running,
        terminal=terminal,
        u_min=model.u_min,
        u_max=model.u_max,
        dt=dt,
        metadata={"model": model, "cost": cost, "contacts": tuple(contacts)},
    )


def rollout_step(problem: OcpProblem, x: np.ndarray, u: np.ndarray, stage: int = 0) -> np.ndarray:
    """One discrete dynamics step of the given stage: v+ = v + dt qdd(x, u, lambda(x)), q+ = q + dt v+."""
    action = problem.running[stage]
    if isinstance(action, ContactDynamicsAction):
        return action.step(x, u)
    xnext, _ = action.calc(x, u)
    return xnext
