from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from cfmpc.dynamics import (
    BodyPoint,
    JointState,
    LinkFrames,
    RobotModel,
    forward_dynamics,
    link_frames,
    mechanical_energy,
    point_jacobian,
)
from cfmpc.errors import InvalidArgumentError, NumericalFailureError, SimulationDivergedError
from cfmpc.sim.environment import HalfSpace, PushDisturbance

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TrueContact:
    point: BodyPoint
    position: np.ndarray
    depth: float  # penetration for environment contacts, hand-spring compression for pushes
    force: np.ndarray  # acting on the robot
    source: Literal["environment", "push"]
    stiffness: float

    @property
    def link(self) -> int:
        return self.point.link

    @property
    def magnitude(self) -> float:
        return float(np.linalg.norm(self.force))


@dataclass(frozen=True, eq=False)
class PlantState:
    state: JointState
    contacts: tuple[TrueContact, ...]
    t: float
    # world anchor of every push that has started, by disturbance index
    anchors: dict[int, np.ndarray] = field(default_factory=dict)

    def link_forces(self, n: int) -> np.ndarray:
        """Total true force on each link, (n, 3)."""
        forces = np.zeros((n, 3))
        for contact in self.contacts:
            forces[contact.link - 1] += contact.force
        return forces


def probe_positions(model: RobotModel, frames: LinkFrames) -> np.ndarray:
    links = np.array([p.link - 1 for p in model.probes])
    offsets = np.array([p.offset for p in model.probes])
    return frames.origins[links] + np.einsum("nij,nj->ni", frames.rotations[links], offsets)


def true_contacts(
    model: RobotModel,
    state: JointState,
    env: Sequence[HalfSpace],
    disturbances: Sequence[PushDisturbance],
    anchors: dict[int, np.ndarray],
    t: float,
    frames: LinkFrames | None = None,
) -> tuple[TrueContact, ...]:
    frames = frames or link_frames(model, state.q)
    contacts: list[TrueContact] = []
    if env:
        positions = probe_positions(model, frames)
        for obj in env:
            depth = obj.penetration(positions)
            for index in np.flatnonzero(depth > 0.0):
                point = model.probes[index]
                velocity = point_jacobian(model, state.q, point, frames) @ state.v
                contacts.append(
                    TrueContact(
                        point=point,
                        position=positions[index],
                        depth=float(depth[index]),
                        force=obj.force(float(depth[index]), float(obj.unit_normal @ velocity)),
                        source="environment",
                        stiffness=obj.k_true_n_per_m,
                    )
                )
    for index, anchor in anchors.items():
        push = disturbances[index]
        point = BodyPoint(link=push.link, offset=np.array(push.offset_m))
        position = frames.point(point)
        force = push.force(t, anchor, position)
        magnitude = float(np.linalg.norm(force))
        if magnitude > 0.0:
            contacts.append(
                TrueContact(
                    point=point,
                    position=position,
                    depth=magnitude / push.stiffness_n_per_m,
                    force=force,
                    source="push",
                    stiffness=push.stiffness_n_per_m,
                )
            )
    return tuple(contacts)


def _update_anchors(
    model: RobotModel,
    frames: LinkFrames,
    disturbances: Sequence[PushDisturbance],
    anchors: dict[int, np.ndarray],
    t: float,
) -> dict[int, np.ndarray]:
    updated: dict[int, np.ndarray] = {}
    for index, push in enumerate(disturbances):
        if not push.is_active(t):
            if index in anchors:
                logger.info(f"✋ push on link {push.link} released at t={t:.3f}s")
            continue
        if index in anchors:
            updated[index] = anchors[index]
        else:
            updated[index] = frames.point(BodyPoint(link=push.link, offset=np.array(push.offset_m)))
            logger.info(f"✋ push on link {push.link} starts at t={t:.3f}s")
    return updated


def initial_plant(
    model: RobotModel,
    state: JointState,
    env: Sequence[HalfSpace] = (),
    disturbances: Sequence[PushDisturbance] = (),
    t: float = 0.0,
) -> PlantState:
    frames = link_frames(model, state.q)
    anchors = _update_anchors(model, frames, disturbances, {}, t)
    return PlantState(
        state=state,
        contacts=true_contacts(model, state, env, disturbances, anchors, t, frames),
        t=t,
        anchors=anchors,
    )


def plant_step(
    plant: PlantState,
    model: RobotModel,
    u: np.ndarray,
    env: Sequence[HalfSpace],
    disturbances: Sequence[PushDisturbance],
    dt: float,
) -> PlantState:
    """Advance the true plant by dt with semi-implicit Euler; contact forces act through J^T f."""
    if not dt > 0.0:
        raise InvalidArgumentError(f"plant time step must be positive, got {dt}")
    state = plant.state
    forces = [(c.point, c.force) for c in plant.contacts]
    try:
        qdd = forward_dynamics(model, state, u, forces)
    except NumericalFailureError as e:
        raise SimulationDivergedError(str(e), dump=_dump(plant, u)) from e
    v = state.v + dt * qdd
    q = state.q + dt * v
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
        raise SimulationDivergedError(f"non-finite plant state at t={plant.t + dt:.4f}s", dump=_dump(plant, u))
    t = plant.t + dt
    next_state = JointState(q=q, v=v)
    frames = link_frames(model, q)
    anchors = _update_anchors(model, frames, disturbances, plant.anchors, t)
    return PlantState(
        state=next_state,
        contacts=true_contacts(model, next_state, env, disturbances, anchors, t, frames),
        t=t,
        anchors=anchors,
    )


def plant_energy(plant: PlantState, model: RobotModel) -> float:
    """Kinetic + gravitational + elastic energy stored in environment penetrations."""
    elastic = sum(
        0.5 * c.stiffness * c.depth**2 for c in plant.contacts if c.source == "environment"
    )
    return mechanical_energy(model, plant.state) + elastic


def _dump(plant: PlantState, u: np.ndarray) -> dict[str, object]:
    return {
        "t": plant.t,
        "q": plant.state.q.tolist(),
        "v": plant.state.v.tolist(),
        "u": np.asarray(u, dtype=float).tolist(),
        "contacts": [
            {"link": c.link, "source": c.source, "depth_m": c.depth, "force_n": c.force.tolist()} for c in plant.contacts
        ],
    }
