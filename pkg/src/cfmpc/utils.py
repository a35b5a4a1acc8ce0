import json
from typing import Any, Callable

import numpy as np
from scipy.spatial.transform import Rotation


def pp(obj: Any) -> None:
    print(json.dumps(obj, indent=4, default=_to_builtin))


def _to_builtin(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def skew(w: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -w[2], w[1]],
            [w[2], 0.0, -w[0]],
            [-w[1], w[0], 0.0],
        ]
    )


def rotation_from_rpy(rpy: np.ndarray) -> np.ndarray:
    """Fixed-axis roll/pitch/yaw (URDF convention) to a rotation matrix."""
    return Rotation.from_euler("xyz", rpy).as_matrix()


def rotation_about(axis: np.ndarray, angle: float) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(axis) * angle).as_matrix()


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; near angle pi scipy picks a consistent axis branch."""
    return Rotation.from_matrix(R).as_rotvec()


def so3_left_jacobian_inverse(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    Phi = skew(phi)
    if theta < 1e-6:
        return np.eye(3) - 0.5 * Phi + Phi @ Phi / 12.0
    coeff = 1.0 / theta**2 - (1.0 + np.cos(theta)) / (2.0 * theta * np.sin(theta))
    return np.eye(3) - 0.5 * Phi + coeff * Phi @ Phi


def central_difference(
    fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, step: float = 1e-6
) -> np.ndarray:
    """Jacobian of fn at x by central differences; columns follow the entries of x."""
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fn(x))
    jac = np.zeros((f0.size, x.size))
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = step
        jac[:, i] = (np.atleast_1d(fn(x + dx)) - np.atleast_1d(fn(x - dx))).ravel() / (2.0 * step)
    return jac
