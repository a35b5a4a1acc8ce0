from .boxqp import BoxQPResult, box_qp
from .fddp import BoxFDDP, Gains, backward_pass, forward_pass, solve
from .problem import (
    ActionDerivatives,
    ActionModel,
    LinearQuadraticAction,
    OcpProblem,
    RiccatiSolution,
    SolverSettings,
    SolverStats,
    Trajectory,
    dynamics_gaps,
    riccati_lqr,
    rollout,
    trajectory_cost,
)

__all__ = [
    "ActionDerivatives",
    "ActionModel",
    "BoxFDDP",
    "BoxQPResult",
    "Gains",
    "LinearQuadraticAction",
    "OcpProblem",
    "RiccatiSolution",
    "SolverSettings",
    "SolverStats",
    "Trajectory",
    "backward_pass",
    "box_qp",
    "dynamics_gaps",
    "forward_pass",
    "riccati_lqr",
    "rollout",
    "solve",
    "trajectory_cost",
]
