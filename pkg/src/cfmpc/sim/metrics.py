from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, Sequence

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from cfmpc.mpc import PhaseSchedule
from cfmpc.sim.trace import Trace

logger = logging.getLogger(__name__)

Metric = Literal["max_force_n", "max_true_force_n", "position_rmse_m", "force_rmse_n", "stalls"]


class Threshold(BaseModel):
    """Pass/fail bound on one metric; `phase: null` means the whole run."""

    model_config = ConfigDict(frozen=True)

    metric: Metric
    phase: str | None = None
    links: list[int] | None = Field(default=None, description="links considered by the peak force metrics; null means all")
    max: float | None = None
    min: float | None = None

    @model_validator(mode="after")
    def _bounded(self) -> Threshold:
        if self.max is None and self.min is None:
            raise ValueError(f"threshold on {self.metric} needs a max or a min")
        return self

    @property
    def label(self) -> str:
        scope = self.phase or "run"
        links = f" links {self.links}" if self.links else ""
        return f"{self.metric}[{scope}{links}]"


@dataclass(frozen=True, eq=False)
class PhaseWindow:
    name: str
    index: int
    position_selector: np.ndarray
    force_selector: np.ndarray
    lambda_des: np.ndarray
    regulation_links: tuple[int, ...]


@dataclass
class PhaseMetrics:
    name: str
    samples: int
    position_rmse_m: float | None = None
    force_rmse_n: float | None = None
    max_force_n: dict[int, float] = field(default_factory=dict)
    max_true_force_n: dict[int, float] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {
            "samples": self.samples,
            "position_rmse_m": self.position_rmse_m,
            "force_rmse_n": self.force_rmse_n,
            "max_force_n": {int(k): float(v) for k, v in self.max_force_n.items()},
            "max_true_force_n": {int(k): float(v) for k, v in self.max_true_force_n.items()},
        }


@dataclass
class MetricsTable:
    phases: dict[str, PhaseMetrics]
    run: PhaseMetrics

    def scope(self, phase: str | None) -> PhaseMetrics | None:
        return self.run if phase is None else self.phases.get(phase)


@dataclass(frozen=True)
class ThresholdResult:
    label: str
    value: float | None
    passed: bool


def phase_windows(schedule: PhaseSchedule) -> list[PhaseWindow]:
    windows = []
    for index in range(-1, len(schedule.phases)):
        config = schedule.phase_config(index)
        regulated = config.c_lambda > 0.0 and any(config.force_axes)
        windows.append(
            PhaseWindow(
                name=schedule.phase_name(index),
                index=index,
                position_selector=np.array(config.position_axes, dtype=float),
                force_selector=np.array(config.force_axes, dtype=float),
                lambda_des=np.array(config.lambda_des_n),
                regulation_links=tuple(sorted(config.regulation_links)) if regulated else (),
            )
        )
    return windows


def _max_forces(trace: Trace, n: int, kind: str = "fb") -> dict[int, float]:
    if len(trace) == 0:
        return {}
    return {k: float(np.max(np.linalg.norm(trace.link_forces(kind, k), axis=1))) for k in range(1, n + 1)}


def _rms(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum(residuals**2, axis=1))))


def compute_metrics(trace: Trace, windows: Sequence[PhaseWindow], n: int) -> MetricsTable:
    """Per-phase position/force RMSE and per-link peak force.

    `max_force_n` is the peak of the reported feedback force, `max_true_force_n` the peak of the
    plant force. Empty windows leave metrics absent.
    """
    phase_column = trace.column("phase")
    phases: dict[str, PhaseMetrics] = {}
    for window in windows:
        rows = trace.rows(phase_column == window.index)
        metrics = PhaseMetrics(name=window.name, samples=len(rows))
        if len(rows) > 0:
            position_error = (rows.vector("ee") - rows.vector("des")) * window.position_selector
            metrics.position_rmse_m = _rms(position_error)
            if window.regulation_links:
                force = sum(rows.link_forces("true", k) for k in window.regulation_links)
                metrics.force_rmse_n = _rms((force - window.lambda_des) * window.force_selector)
            metrics.max_force_n = _max_forces(rows, n)
            metrics.max_true_force_n = _max_forces(rows, n, "true")
        phases[window.name] = metrics
    run = PhaseMetrics(
        name="run",
        samples=len(trace),
        max_force_n=_max_forces(trace, n),
        max_true_force_n=_max_forces(trace, n, "true"),
    )
    return MetricsTable(phases=phases, run=run)


def evaluate_thresholds(table: MetricsTable, thresholds: Sequence[Threshold], stalls: int) -> list[ThresholdResult]:
    results = []
    for threshold in thresholds:
        value: float | None
        if threshold.metric == "stalls":
            value = float(stalls)
        else:
            scope = table.scope(threshold.phase)
            if scope is None:
                value = None
            elif threshold.metric in ("max_force_n", "max_true_force_n"):
                peaks = getattr(scope, threshold.metric)
                forces = [v for k, v in peaks.items() if threshold.links is None or k in threshold.links]
                value = max(forces) if forces else None
            else:
                value = getattr(scope, threshold.metric)
        passed = value is not None
        if value is not None and threshold.max is not None:
            passed = passed and value <= threshold.max
        if value is not None and threshold.min is not None:
            passed = passed and value >= threshold.min
        results.append(ThresholdResult(label=threshold.label, value=value, passed=passed))
        marker = "✅" if passed else "❌"
        logger.info(f"{marker} {threshold.label} = {value} (max {threshold.max}, min {threshold.min})")
    return results


def solve_time_summary(solve_times: Sequence[float]) -> dict[str, float | None]:
    if not solve_times:
        return {"count": 0, "mean_s": None, "p50_s": None, "p95_s": None, "max_s": None}
    times = np.asarray(solve_times)
    return {
        "count": int(times.size),
        "mean_s": float(times.mean()),
        "p50_s": float(np.percentile(times, 50)),
        "p95_s": float(np.percentile(times, 95)),
        "max_s": float(times.max()),
    }


def write_report(
    path: str | Path,
    scenario: str,
    table: MetricsTable,
    results: Sequence[ThresholdResult],
    solve_times: Sequence[float],
    extra: dict[str, Any] | None = None,
) -> dict[str, Any]:
    report = {
        "scenario": scenario,
        "passed": all(r.passed for r in results),
        "thresholds": [{"name": r.label, "value": r.value, "passed": r.passed} for r in results],
        "phases": {name: m.as_dict() for name, m in table.phases.items()},
        "run": table.run.as_dict(),
        "solve_time": solve_time_summary(solve_times),
        **(extra or {}),
    }
    Path(path).write_text(yaml.safe_dump(report, sort_keys=False))
    return report
