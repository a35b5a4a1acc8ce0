from pathlib import Path

import numpy as np
import pytest

from cfmpc.contact import ContactFeedback, ContactParams, compute_theta
from cfmpc.costs import CostConfig
from cfmpc.dynamics import BodyPoint, RobotModel, RobotSpec, link_frames, load_robot

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="session")
def config_dir() -> Path:
    return CONFIG_DIR


@pytest.fixture(scope="session")
def planar3() -> RobotModel:
    return load_robot(CONFIG_DIR / "robots" / "planar3.yaml")


@pytest.fixture(scope="session")
def desk7() -> RobotModel:
    return load_robot(CONFIG_DIR / "robots" / "desk7.yaml")


PENDULUM_MASS_KG = 2.0
PENDULUM_LENGTH_M = 0.5


def make_pendulum(axis=(0.0, 1.0, 0.0), arm=(0.0, 0.0, -PENDULUM_LENGTH_M)) -> RobotModel:
    """Point mass on a massless arm from a pivot at the origin."""
    spec = RobotSpec.model_validate(
        {
            "format_version": 1,
            "name": "pendulum",
            "joints": [
                {
                    "name": "pivot",
                    "xyz_m": [0.0, 0.0, 0.0],
                    "axis": list(axis),
                    "q_min_rad": -3.0,
                    "q_max_rad": 3.0,
                    "v_max_rad_s": 20.0,
                    "u_min_nm": -50.0,
                    "u_max_nm": 50.0,
                    "link": {
                        "mass_kg": PENDULUM_MASS_KG,
                        "com_m": list(arm),
                        "inertia_kg_m2": [[1e-12, 0.0, 0.0], [0.0, 1e-12, 0.0], [0.0, 0.0, 1e-12]],
                    },
                }
            ],
            "end_effector": {"xyz_m": list(arm)},
        }
    )
    return RobotModel.from_spec(spec)


@pytest.fixture(scope="session")
def pendulum() -> RobotModel:
    """Swings about world y; q = 0 hangs straight down."""
    return make_pendulum()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def make_cost(**update) -> CostConfig:
    values = dict(
        c_v=1.0,
        c_p=100.0,
        c_r=10.0,
        c_u=0.01,
        c_lambda=2.0,
        p_des_m=(0.3, 0.0, 0.4),
        rpy_des_rad=(0.0, 1.2, 0.0),
        lambda_des_n=(0.0, 0.0, 5.0),
        force_axes=(0, 0, 1),
        lambda_max_n=15.0,
        barrier_scale=0.9,
        barrier_smoothing="hinge",
        barrier_links=frozenset({1, 2}),
        regulation_links=frozenset({3}),
        w_x=10.0,
        limit_margin_rad=0.1,
        limit_margin_rad_s=0.2,
    )
    values.update(update)
    return CostConfig(**values)


def random_state(model: RobotModel, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    q = rng.uniform(-1.5, 1.5, model.n)
    v = rng.normal(0.0, 0.5, model.n)
    return q, v


def random_feedback(model: RobotModel, q: np.ndarray, rng: np.random.Generator, link: int | None = None) -> ContactFeedback:
    link = int(rng.integers(1, model.n + 1)) if link is None else link
    frames = link_frames(model, q)
    point = BodyPoint(link=link, offset=rng.uniform(-0.05, 0.05, 3) + np.array([0.0, 0.0, 0.1]))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    return ContactFeedback(
        timestamp=0.0, link=link, position=frames.point(point), force=rng.uniform(1.0, 20.0) * direction
    )


def random_contact(
    model: RobotModel, q: np.ndarray, rng: np.random.Generator, link: int | None = None, k_env: float = 3500.0
) -> ContactParams:
    return compute_theta(random_feedback(model, q, rng, link), model, q, k_env)
