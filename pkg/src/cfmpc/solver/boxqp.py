from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from cfmpc.errors import NumericalFailureError

logger = logging.getLogger(__name__)

ARMIJO = 0.1
STEP_DECREASE = 0.6
MIN_STEP = 1e-22


@dataclass(frozen=True, eq=False)
class BoxQPResult:
    x: np.ndarray
    free: np.ndarray  # mask of dimensions not held at a bound
    factor: tuple[np.ndarray, bool] | None  # Cholesky factor of the free block of H
    iterations: int
    converged: bool

    def feedback(self, coupling: np.ndarray) -> np.ndarray:
        """-H_ff^-1 coupling on free rows; clamped rows stay zero."""
        K = np.zeros((self.x.size, coupling.shape[1]))
        if self.factor is not None:
            K[self.free] = -cho_solve(self.factor, coupling[self.free])
        return K


def _factor(H: np.ndarray) -> tuple[np.ndarray, bool]:
    try:
        return cho_factor(H)
    except np.linalg.LinAlgError as e:
        raise NumericalFailureError(f"box-QP Hessian is not positive-definite: {e}") from e


def box_qp(
    H: np.ndarray,
    g: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    x0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iters: int = 100,
) -> BoxQPResult:
    """min 1/2 x'Hx + g'x  s.t.  lower <= x <= upper, by projected Newton on the free subspace."""
    n = g.size
    x = np.clip(np.zeros(n) if x0 is None else x0, lower, upper)
    value = float(g @ x + 0.5 * x @ H @ x)
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        grad = g + H @ x
        clamped = ((x <= lower) & (grad > 0.0)) | ((x >= upper) & (grad < 0.0))
        free = ~clamped
        if not free.any():
            converged = True
            break
        if np.linalg.norm(grad[free]) < tol:
            converged = True
            break
        factor = _factor(H[np.ix_(free, free)])
        # Newton target for the free block with clamped entries held
        target = x.copy()
        target[free] = -cho_solve(factor, g[free] + H[np.ix_(free, clamped)] @ x[clamped])
        direction = target - x
        slope = float(direction @ grad)
        if slope >= 0.0:
            converged = True
            break
        step = 1.0
        while True:
            candidate = np.clip(x + step * direction, lower, upper)
            candidate_value = float(g @ candidate + 0.5 * candidate @ H @ candidate)
            if (candidate_value - value) / (step * slope) > ARMIJO:
                break
            step *= STEP_DECREASE
            if step < MIN_STEP:
                logger.debug("box-QP line search failed")
                return _result(H, g, x, lower, upper, iterations, False)
        improvement = value - candidate_value
        x, value = candidate, candidate_value
        if improvement < tol * (1.0 + abs(value)):
            converged = True
            break
    return _result(H, g, x, lower, upper, iterations, converged)


def _result(
    H: np.ndarray, g: np.ndarray, x: np.ndarray, lower: np.ndarray, upper: np.ndarray, iterations: int, converged: bool
) -> BoxQPResult:
    grad = g + H @ x
    clamped = ((x <= lower) & (grad > 0.0)) | ((x >= upper) & (grad < 0.0))
    free = ~clamped
    factor = _factor(H[np.ix_(free, free)]) if free.any() else None
    return BoxQPResult(x=x, free=free, factor=factor, iterations=iterations, converged=converged)
