from .errors import (
    CfmpcError,
    ConfigError,
    DegenerateFrameError,
    InvalidArgumentError,
    NumericalFailureError,
    SimulationDivergedError,
    SolverStalledError,
)

__version__ = "0.1.0"

__all__ = [
    "CfmpcError",
    "ConfigError",
    "DegenerateFrameError",
    "InvalidArgumentError",
    "NumericalFailureError",
    "SimulationDivergedError",
    "SolverStalledError",
]
