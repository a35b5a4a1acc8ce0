from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Protocol, Sequence, runtime_checkable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from cfmpc.costs import CostEval
from cfmpc.errors import InvalidArgumentError

# ############################################################
# Action models
# ############################################################


@dataclass(frozen=True, eq=False)
class ActionDerivatives:
    """Discrete dynamics F(x, u) and stage cost with their first/second order data at one (x, u)."""

    xnext: np.ndarray | None
    cost: CostEval
    fx: np.ndarray | None
    fu: np.ndarray | None


@runtime_checkable
class ActionModel(Protocol):
    """One stage of the discretized OCP. The terminal stage is called with u = None."""

    nx: int
    nu: int

    def calc(self, x: np.ndarray, u: np.ndarray | None) -> tuple[np.ndarray | None, float]:
        ...

    def calc_diff(self, x: np.ndarray, u: np.ndarray | None) -> ActionDerivatives:
        ...


class LinearQuadraticAction:
    """x+ = A x + B u with cost 1/2 x'Qx + q'x + 1/2 u'Ru + r'u (terminal: the x part only)."""

    def __init__(
        self,
        A: np.ndarray,
        B: np.ndarray,
        Q: np.ndarray,
        R: np.ndarray,
        q: np.ndarray | None = None,
        r: np.ndarray | None = None,
        terminal: bool = False,
    ):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.nx = self.A.shape[0]
        self.nu = self.B.shape[1]
        self.q = np.zeros(self.nx) if q is None else np.asarray(q, dtype=float)
        self.r = np.zeros(self.nu) if r is None else np.asarray(r, dtype=float)
        self.terminal = terminal
        if self.A.shape != (self.nx, self.nx) or self.B.shape[0] != self.nx:
            raise InvalidArgumentError(f"inconsistent A {self.A.shape} and B {self.B.shape}")
        if self.Q.shape != (self.nx, self.nx) or self.R.shape != (self.nu, self.nu):
            raise InvalidArgumentError("cost matrices do not match the state/control dimensions")

    def calc(self, x: np.ndarray, u: np.ndarray | None) -> tuple[np.ndarray | None, float]:
        value = 0.5 * x @ self.Q @ x + self.q @ x
        if self.terminal or u is None:
            return None, float(value)
        value += 0.5 * u @ self.R @ u + self.r @ u
        return self.A @ x + self.B @ u, float(value)

    def calc_diff(self, x: np.ndarray, u: np.ndarray | None) -> ActionDerivatives:
        xnext, value = self.calc(x, u)
        running = not self.terminal and u is not None
        cost = CostEval(
            value=value,
            lx=self.Q @ x + self.q,
            lu=self.R @ u + self.r if running else np.zeros(self.nu),
            lxx=self.Q,
            luu=self.R if running else np.zeros((self.nu, self.nu)),
            lux=np.zeros((self.nu, self.nx)),
        )
        return ActionDerivatives(
            xnext=xnext,
            cost=cost,
            fx=self.A if running else None,
            fu=self.B if running else None,
        )


# ############################################################
# Problem and trajectories
# ############################################################


@dataclass(frozen=True, eq=False)
class OcpProblem:
    """Horizon of `running` actions closed by `terminal`, from the measured state x0."""

    x0: np.ndarray
    running: tuple[ActionModel, ...]
    terminal: ActionModel
    u_min: np.ndarray
    u_max: np.ndarray
    dt: float
    # bookkeeping of the contact OCP; unused by the solver
    metadata: dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        object.__setattr__(self, "running", tuple(self.running))
        u_min = np.broadcast_to(np.asarray(self.u_min, dtype=float), (self.nu,)).copy()
        u_max = np.broadcast_to(np.asarray(self.u_max, dtype=float), (self.nu,)).copy()
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)
        if self.T < 1:
            raise InvalidArgumentError("the horizon needs at least one running stage")
        if not self.dt > 0.0:
            raise InvalidArgumentError(f"time step must be positive, got {self.dt}")
        if np.any(u_min >= u_max):
            raise InvalidArgumentError("u_min must be strictly below u_max")
        if self.x0.size != self.nx:
            raise InvalidArgumentError(f"x0 has {self.x0.size} entries, the model has {self.nx}")

    @property
    def T(self) -> int:
        return len(self.running)

    @property
    def nx(self) -> int:
        return self.terminal.nx

    @property
    def nu(self) -> int:
        return self.running[0].nu if self.running else 0


@dataclass(frozen=True, eq=False)
class Trajectory:
    xs: np.ndarray  # (T + 1, nx)
    us: np.ndarray  # (T, nu)

    def __post_init__(self):
        xs = np.atleast_2d(np.asarray(self.xs, dtype=float))
        us = np.atleast_2d(np.asarray(self.us, dtype=float))
        if xs.shape[0] != us.shape[0] + 1:
            raise InvalidArgumentError(f"{xs.shape[0]} states do not match {us.shape[0]} controls")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "us", us)

    @property
    def T(self) -> int:
        return self.us.shape[0]

    def matches(self, problem: OcpProblem) -> bool:
        return self.xs.shape == (problem.T + 1, problem.nx) and self.us.shape == (problem.T, problem.nu)

    def shifted(self) -> Trajectory:
        """Drop the first stage and duplicate the last one."""
        return Trajectory(
            xs=np.vstack([self.xs[1:], self.xs[-1:]]),
            us=np.vstack([self.us[1:], self.us[-1:]]),
        )

    @classmethod
    def constant(cls, x: np.ndarray, u: np.ndarray, T: int) -> Trajectory:
        return cls(xs=np.tile(np.asarray(x, dtype=float), (T + 1, 1)), us=np.tile(np.asarray(u, dtype=float), (T, 1)))


def rollout(problem: OcpProblem, us: np.ndarray) -> tuple[Trajectory, float]:
    """Feasible trajectory from x0 under the given controls, and its total cost."""
    xs = np.empty((problem.T + 1, problem.nx))
    xs[0] = problem.x0
    cost = 0.0
    for t, action in enumerate(problem.running):
        xnext, value = action.calc(xs[t], us[t])
        xs[t + 1] = xnext
        cost += value
    _, value = problem.terminal.calc(xs[-1], None)
    return Trajectory(xs=xs, us=np.array(us, dtype=float)), cost + value


def trajectory_cost(problem: OcpProblem, trajectory: Trajectory) -> float:
    cost = sum(action.calc(x, u)[1] for action, x, u in zip(problem.running, trajectory.xs, trajectory.us))
    return float(cost + problem.terminal.calc(trajectory.xs[-1], None)[1])


def dynamics_gaps(problem: OcpProblem, trajectory: Trajectory) -> np.ndarray:
    """Defects f_0 = x0 - x_0 and f_{t+1} = F(x_t, u_t) - x_{t+1}, stacked as (T + 1, nx)."""
    gaps = np.empty_like(trajectory.xs)
    gaps[0] = problem.x0 - trajectory.xs[0]
    for t, action in enumerate(problem.running):
        xnext, _ = action.calc(trajectory.xs[t], trajectory.us[t])
        gaps[t + 1] = xnext - trajectory.xs[t + 1]
    return gaps


# ############################################################
# Settings and statistics
# ############################################################


class SolverSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_iters: int = Field(default=500, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)
    reg_init: float = Field(default=1e-9, gt=0.0)
    reg_min: float = Field(default=1e-9, gt=0.0)
    reg_max: float = Field(default=1e9, gt=0.0)
    reg_increase: float = Field(default=10.0, gt=1.0)
    reg_decrease: float = Field(default=0.5, gt=0.0, lt=1.0)
    step_lengths: tuple[float, ...] = tuple(2.0**-i for i in range(11))
    accept_ratio: float = Field(default=0.1, gt=0.0, lt=1.0)
    box_qp_tol: float = Field(default=1e-9, gt=0.0)
    integrator: Literal["semi_implicit", "explicit"] = "semi_implicit"
    derivatives: Literal["analytic", "finite_difference"] = "analytic"
    rollout_warm_start: bool = Field(
        default=True, description="roll the warm-start controls out from x0 so every iterate is feasible"
    )

    @model_validator(mode="after")
    def _check(self) -> SolverSettings:
        if not self.reg_min <= self.reg_init <= self.reg_max:
            raise ValueError("reg_init must lie in [reg_min, reg_max]")
        if not self.step_lengths or any(not 0.0 < a <= 1.0 for a in self.step_lengths):
            raise ValueError("step lengths must lie in (0, 1]")
        if list(self.step_lengths) != sorted(self.step_lengths, reverse=True):
            raise ValueError("step lengths must be tried in decreasing order")
        return self


@dataclass(frozen=True)
class SolverStats:
    iterations: int
    cost: float
    gap_norm: float
    regularization: float
    step_length: float
    wall_time_s: float
    rejected_steps: int = 0
    converged: bool = False
    stalled: bool = False
    cost_history: tuple[float, ...] = ()


# ############################################################
# Reference Riccati recursion
# ############################################################


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    xs: np.ndarray
    us: np.ndarray
    K: np.ndarray
    k: np.ndarray


def riccati_lqr(
    running: Sequence[LinearQuadraticAction], terminal: LinearQuadraticAction, x0: np.ndarray
) -> RiccatiSolution:
    """Unconstrained finite-horizon discrete LQR, u_t = K_t x_t + k_t."""
    P, p = terminal.Q, terminal.q
    gains: list[tuple[np.ndarray, np.ndarray]] = []
    for action in reversed(running):
        A, B = action.A, action.B
        Quu = action.R + B.T @ P @ B
        Qux = B.T @ P @ A
        Qu = action.r + B.T @ p
        K = -np.linalg.solve(Quu, Qux)
        k = -np.linalg.solve(Quu, Qu)
        P = action.Q + A.T @ P @ A + Qux.T @ K
        P = 0.5 * (P + P.T)
        p = action.q + A.T @ p + Qux.T @ k
        gains.append((K, k))
    gains.reverse()
    xs = [np.asarray(x0, dtype=float)]
    us = []
    for action, (K, k) in zip(running, gains):
        us.append(K @ xs[-1] + k)
        xs.append(action.A @ xs[-1] + action.B @ us[-1])
    return RiccatiSolution(
        xs=np.array(xs), us=np.array(us), K=np.array([g[0] for g in gains]), k=np.array([g[1] for g in gains])
    )
