from __future__ import annotations

import inspect
from abc import ABCMeta, abstractmethod
from dataclasses import dataclass
from typing import Any, ClassVar, Literal, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, PrivateAttr
from typing_extensions import override

from cfmpc.contact import ContactParams, spring_force, spring_force_jacobian
from cfmpc.costs.config import CostConfig
from cfmpc.dynamics import JointState, LinkFrames, RobotModel, end_effector_pose, frame_jacobian, link_frames
from cfmpc.utils import so3_left_jacobian_inverse, so3_log

# ############################################################
# Cost values
# ############################################################


@dataclass(frozen=True, eq=False)
class CostEval:
    """Cost value, gradient w.r.t. (x, u) and Gauss-Newton Hessian blocks."""

    value: float
    lx: np.ndarray
    lu: np.ndarray
    lxx: np.ndarray
    luu: np.ndarray
    lux: np.ndarray

    @classmethod
    def zero(cls, nx: int, nu: int) -> CostEval:
        return cls(
            value=0.0,
            lx=np.zeros(nx),
            lu=np.zeros(nu),
            lxx=np.zeros((nx, nx)),
            luu=np.zeros((nu, nu)),
            lux=np.zeros((nu, nx)),
        )

    def __add__(self, other: CostEval) -> CostEval:
        return CostEval(
            value=self.value + other.value,
            lx=self.lx + other.lx,
            lu=self.lu + other.lu,
            lxx=self.lxx + other.lxx,
            luu=self.luu + other.luu,
            lux=self.lux + other.lux,
        )

    def scaled(self, weight: float) -> CostEval:
        return CostEval(
            value=weight * self.value,
            lx=weight * self.lx,
            lu=weight * self.lu,
            lxx=weight * self.lxx,
            luu=weight * self.luu,
            lux=weight * self.lux,
        )


@dataclass(frozen=True, eq=False)
class ForceCostEval:
    """A contact-force cost in force coordinates; `pulled_back` applies the chain rule through d lambda / dq."""

    value: float
    grad: np.ndarray
    hess: np.ndarray

    def pulled_back(self, dlambda_dq: np.ndarray, nx: int, nu: int) -> CostEval:
        n = dlambda_dq.shape[1]
        cost = CostEval.zero(nx, nu)
        cost.lx[:n] = dlambda_dq.T @ self.grad
        cost.lxx[:n, :n] = dlambda_dq.T @ self.hess @ dlambda_dq
        return CostEval(value=self.value, lx=cost.lx, lu=cost.lu, lxx=cost.lxx, luu=cost.luu, lux=cost.lux)


_ZERO_FORCE_COST = ForceCostEval(value=0.0, grad=np.zeros(3), hess=np.zeros((3, 3)))


# ############################################################
# Per-stage kinematic bundle
# ############################################################


@dataclass(frozen=True, eq=False)
class ContactState:
    link: int
    force: np.ndarray
    jacobian: np.ndarray  # d lambda / dq


@dataclass(frozen=True, eq=False)
class StageKinematics:
    """Everything the cost terms need at one (x, u), computed once per stage."""

    model: RobotModel
    state: JointState
    ee_position: np.ndarray
    ee_rotation: np.ndarray
    ee_jacobian: np.ndarray  # 6 x n, linear over angular
    contacts: tuple[ContactState, ...]

    @property
    def nx(self) -> int:
        return 2 * self.model.n

    @classmethod
    def compute(
        cls,
        model: RobotModel,
        state: JointState,
        contacts: Sequence[ContactParams] = (),
        frames: LinkFrames | None = None,
    ) -> StageKinematics:
        q = state.q
        frames = frames or link_frames(model, q)
        position, rotation = end_effector_pose(model, q, frames)
        return cls(
            model=model,
            state=state,
            ee_position=position,
            ee_rotation=rotation,
            ee_jacobian=frame_jacobian(model, q, model.end_effector, frames),
            contacts=tuple(
                ContactState(
                    link=params.link,
                    force=spring_force(params, model, q, frames),
                    jacobian=spring_force_jacobian(params, model, q, frames),
                )
                for params in contacts
            ),
        )


# ############################################################
# Cost terms
# ############################################################

COST_REGISTRY: dict[str, type[CostTerm]] = {}


class CostTerm(BaseModel, metaclass=ABCMeta):
    """Base model for all cost terms; concrete terms register themselves by class name."""

    model_config = ConfigDict(frozen=True)

    config: CostConfig
    # terms evaluated in the terminal cost as well as the running cost
    terminal: ClassVar[bool] = True

    def __init_subclass__(cls, **kwargs: dict[Any, Any]):
        super().__init_subclass__(**kwargs)  # type: ignore

        if not inspect.isabstract(cls):
            COST_REGISTRY[cls.__name__] = cls

    @abstractmethod
    def evaluate(self, kin: StageKinematics, u: np.ndarray | None) -> CostEval:
        raise NotImplementedError


class MotionTerm(CostTerm):
    type: Literal["motion"] = "motion"
    _R_des: np.ndarray = PrivateAttr()
    _p_des: np.ndarray = PrivateAttr()
    _selector: np.ndarray = PrivateAttr()

    @override
    def model_post_init(self, __context: Any) -> None:
        self._R_des = self.config.R_des
        self._p_des = np.array(self.config.p_des_m)
        self._selector = self.config.position_selector

    @override
    def evaluate(self, kin: StageKinematics, u: np.ndarray | None) -> CostEval:
        c = self.config
        n = kin.model.n
        v = kin.state.v
        cost = CostEval.zero(kin.nx, n)
        value = c.c_v * float(v @ v)
        cost.lx[n:] += 2.0 * c.c_v * v
        cost.lxx[n:, n:] += 2.0 * c.c_v * np.eye(n)

        residual = self._selector @ (kin.ee_position - self._p_des)
        Jp = self._selector @ kin.ee_jacobian[:3]
        value += c.c_p * float(residual @ residual)
        cost.lx[:n] += 2.0 * c.c_p * Jp.T @ residual
        cost.lxx[:n, :n] += 2.0 * c.c_p * Jp.T @ Jp

        if c.c_r > 0.0:
            phi = so3_log(kin.ee_rotation.T @ self._R_des)
            Jr = -so3_left_jacobian_inverse(phi) @ kin.ee_rotation.T @ kin.ee_jacobian[3:]
            value += c.c_r * float(phi @ phi)
            cost.lx[:n] += 2.0 * c.c_r * Jr.T @ phi
            cost.lxx[:n, :n] += 2.0 * c.c_r * Jr.T @ Jr
        return _with_value(cost, value)


class ControlTerm(CostTerm):
    type: Literal["control"] = "control"
    terminal: ClassVar[bool] = False

    @override
    def evaluate(self, kin: StageKinematics, u: np.ndarray | None) -> CostEval:
        if u is None:
            return CostEval.zero(kin.nx, kin.model.n)
        return control_cost(self.config, u, nx=kin.nx)


class ContactForceTerm(CostTerm):
    """Barrier and regulation costs of every modelled contact, gated by the link sets."""

    type: Literal["contact_force"] = "contact_force"

    @override
    def evaluate(self, kin: StageKinematics, u: np.ndarray | None) -> CostEval:
        total = CostEval.zero(kin.nx, kin.model.n)
        for contact in kin.contacts:
            for force_cost in (force_barrier_cost, force_regulation_cost):
                contribution = force_cost(self.config, contact.force, contact.link)
                if contribution is not _ZERO_FORCE_COST:
                    total = total + contribution.pulled_back(contact.jacobian, kin.nx, kin.model.n)
        return total


class StateLimitTerm(CostTerm):
    type: Literal["state_limit"] = "state_limit"

    @override
    def evaluate(self, kin: StageKinematics, u: np.ndarray | None) -> CostEval:
        return state_limit_cost(self.config, kin.model, kin.state)


def build_cost_terms(config: CostConfig, terminal: bool = False) -> list[CostTerm]:
    return [cls(config=config) for cls in COST_REGISTRY.values() if cls.terminal or not terminal]


def _with_value(cost: CostEval, value: float) -> CostEval:
    return CostEval(value=value, lx=cost.lx, lu=cost.lu, lxx=cost.lxx, luu=cost.luu, lux=cost.lux)


# ############################################################
# Cost functions
# ############################################################


def motion_cost(
    config: CostConfig, model: RobotModel, state: JointState, kin: StageKinematics | None = None
) -> CostEval:
    kin = kin or StageKinematics.compute(model, state)
    return MotionTerm(config=config).evaluate(kin, None)


def control_cost(config: CostConfig, u: np.ndarray, nx: int | None = None) -> CostEval:
    u = np.asarray(u, dtype=float)
    nu = u.size
    nx = 2 * nu if nx is None else nx
    u_ref = np.zeros(nu) if config.u_ref_nm is None else np.asarray(config.u_ref_nm, dtype=float)
    du = u - u_ref
    cost = CostEval.zero(nx, nu)
    cost.lu[:] = 2.0 * config.c_u * du
    cost.luu[:] = 2.0 * config.c_u * np.eye(nu)
    return _with_value(cost, config.c_u * float(du @ du))


def force_regulation_cost(config: CostConfig, force: np.ndarray, link: int) -> ForceCostEval:
    if link not in config.regulation_links:
        return _ZERO_FORCE_COST
    A = config.A_d
    residual = A @ (np.asarray(force, dtype=float) - np.array(config.lambda_des_n))
    return ForceCostEval(
        value=config.c_lambda * float(residual @ residual),
        grad=2.0 * config.c_lambda * A.T @ residual,
        hess=2.0 * config.c_lambda * A.T @ A,
    )


def force_barrier_cost(config: CostConfig, force: np.ndarray, link: int) -> ForceCostEval:
    """Quadratic barrier on |lambda|, active from b * lambda_max upward (tie counts as active).

    `exact` penalizes the distance to lambda_max and jumps at the activation edge; `hinge` penalizes
    the excess over the activation edge and is C1.
    """
    if link not in config.barrier_links:
        return _ZERO_FORCE_COST
    force = np.asarray(force, dtype=float)
    magnitude = float(np.linalg.norm(force))
    limit = config.force_limit(link)
    edge = config.barrier_scale * limit
    if magnitude < edge:
        return _ZERO_FORCE_COST
    target = limit if config.barrier_smoothing == "exact" else edge
    direction = force / magnitude
    excess = magnitude - target
    return ForceCostEval(
        value=config.c_lambda * excess**2,
        grad=2.0 * config.c_lambda * excess * direction,
        hess=2.0 * config.c_lambda * np.outer(direction, direction),
    )


def state_limit_cost(config: CostConfig, model: RobotModel, state: JointState) -> CostEval:
    """One-sided quadratic penalty outside [q_min, q_max] and |v| <= v_max, shrunk by the margins."""
    n = model.n
    q, v = state.q, state.v
    above = np.maximum(0.0, q - (model.q_max - config.limit_margin_rad))
    below = np.maximum(0.0, (model.q_min + config.limit_margin_rad) - q)
    fast = np.maximum(0.0, np.abs(v) - (model.v_max - config.limit_margin_rad_s))
    w = config.w_x
    cost = CostEval.zero(2 * n, n)
    cost.lx[:n] = 2.0 * w * (above - below)
    cost.lx[n:] = 2.0 * w * fast * np.sign(v)
    active = np.concatenate([(above > 0.0) | (below > 0.0), fast > 0.0])
    cost.lxx[np.diag_indices(2 * n)] = 2.0 * w * active
    value = w * float(above @ above + below @ below + fast @ fast)
    return _with_value(cost, value)


def total_running_cost(
    config: CostConfig,
    model: RobotModel,
    state: JointState,
    u: np.ndarray,
    contacts: Sequence[ContactParams] = (),
    terms: Sequence[CostTerm] | None = None,
    kin: StageKinematics | None = None,
) -> CostEval:
    kin = kin or StageKinematics.compute(model, state, contacts)
    terms = build_cost_terms(config) if terms is None else terms
    return _sum_terms(terms, kin, np.asarray(u, dtype=float))


def total_terminal_cost(
    config: CostConfig,
    model: RobotModel,
    state: JointState,
    contacts: Sequence[ContactParams] = (),
    terms: Sequence[CostTerm] | None = None,
    kin: StageKinematics | None = None,
) -> CostEval:
    kin = kin or StageKinematics.compute(model, state, contacts)
    terms = build_cost_terms(config, terminal=True) if terms is None else terms
    return _sum_terms(terms, kin, None)


def _sum_terms(terms: Sequence[CostTerm], kin: StageKinematics, u: np.ndarray | None) -> CostEval:
    total = CostEval.zero(kin.nx, kin.model.n)
    for term in terms:
        total = total + term.evaluate(kin, u)
    return total
