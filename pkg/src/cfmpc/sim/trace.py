from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

AXES = ("x", "y", "z")
SOLVER_COLUMNS = (
    "solver_iterations",
    "solver_cost",
    "solver_gap",
    "solver_reg",
    "solver_step",
    "solver_stalled",
    "contacts_modelled",
    "fault",
)


def trace_columns(n: int) -> list[str]:
    """Column order of the run trace: one row per plant tick."""
    columns = ["t_s", "phase"]
    columns += [f"q{i}_rad" for i in range(1, n + 1)]
    columns += [f"v{i}_rad_s" for i in range(1, n + 1)]
    columns += [f"u{i}_nm" for i in range(1, n + 1)]
    columns += [f"ee_{a}_m" for a in AXES]
    columns += [f"des_{a}_m" for a in AXES]
    for kind in ("true", "fb", "pred"):
        columns += [f"f{k}_{kind}_{a}_n" for k in range(1, n + 1) for a in AXES]
    columns += list(SOLVER_COLUMNS)
    return columns


@dataclass(frozen=True, eq=False)
class Trace:
    columns: list[str]
    data: np.ndarray

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, names: list[str]) -> np.ndarray:
        return self.data[:, [self.columns.index(name) for name in names]]

    def link_forces(self, kind: str, link: int) -> np.ndarray:
        return self.block([f"f{link}_{kind}_{a}_n" for a in AXES])

    def vector(self, prefix: str) -> np.ndarray:
        return self.block([f"{prefix}_{a}_m" for a in AXES])

    def rows(self, mask: np.ndarray) -> Trace:
        return Trace(columns=self.columns, data=self.data[mask])


class TraceWriter:
    def __init__(self, n: int):
        self.n = n
        self.columns = trace_columns(n)
        self._rows: list[np.ndarray] = []

    def append(self, row: np.ndarray) -> None:
        row = np.asarray(row, dtype=float)
        if row.size != len(self.columns):
            raise ValueError(f"trace row has {row.size} values, expected {len(self.columns)}")
        self._rows.append(row)

    def trace(self) -> Trace:
        data = np.vstack(self._rows) if self._rows else np.zeros((0, len(self.columns)))
        return Trace(columns=self.columns, data=data)

    def save(self, path: str | Path) -> str:
        save_trace(self.trace(), path)
        return trace_digest(path)


def save_trace(trace: Trace, path: str | Path) -> None:
    np.savetxt(path, trace.data, fmt="%.9e", delimiter=",", header=",".join(trace.columns), comments="")


def load_trace(path: str | Path) -> Trace:
    path = Path(path)
    with path.open() as f:
        columns = f.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return Trace(columns=columns, data=data)


def trace_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
