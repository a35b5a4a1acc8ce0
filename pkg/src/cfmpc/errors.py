from __future__ import annotations

from typing import Any


class CfmpcError(Exception):
    """Base error; `exit_code` is what the CLI returns when it escapes a command."""

    exit_code: int = 1


class InvalidArgumentError(CfmpcError, ValueError):
    exit_code = 2


class ConfigError(CfmpcError):
    exit_code = 2


class DegenerateFrameError(CfmpcError, ValueError):
    """Contact force too small to define a contact frame."""

    exit_code = 2


class NumericalFailureError(CfmpcError, ArithmeticError):
    exit_code = 3


class SimulationDivergedError(CfmpcError):
    exit_code = 3

    def __init__(self, message: str, dump: dict[str, Any] | None = None):
        super().__init__(message)
        self.dump: dict[str, Any] = dump or {}


class SolverStalledError(CfmpcError):
    """No step accepted even at maximum regularization."""

    exit_code = 4
