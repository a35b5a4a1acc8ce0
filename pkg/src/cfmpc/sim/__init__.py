from .bench import BenchRow, format_bench, run_bench, solve_once
from .documents import AnyDocument, LqrFixture, PlantSettings, ScenarioConfig, load_any, load_scenario
from .environment import EnvironmentObject, HalfSpace, PushDisturbance
from .metrics import MetricsTable, Threshold, compute_metrics, evaluate_thresholds, phase_windows
from .oracle import (
    ContactOracle,
    GroundTruthOracle,
    NoiselessOracle,
    OracleNoise,
    OracleSettings,
    make_oracle,
    oracle_tick,
    oracles_config,
)
from .plant import PlantState, TrueContact, initial_plant, plant_energy, plant_step, true_contacts
from .scenario import RunReport, prepare, run_scenario
from .trace import Trace, TraceWriter, load_trace, save_trace, trace_columns, trace_digest

__all__ = [
    "AnyDocument",
    "BenchRow",
    "ContactOracle",
    "EnvironmentObject",
    "GroundTruthOracle",
    "HalfSpace",
    "LqrFixture",
    "MetricsTable",
    "NoiselessOracle",
    "OracleNoise",
    "OracleSettings",
    "PlantSettings",
    "PlantState",
    "PushDisturbance",
    "RunReport",
    "ScenarioConfig",
    "Threshold",
    "Trace",
    "TraceWriter",
    "TrueContact",
    "compute_metrics",
    "evaluate_thresholds",
    "format_bench",
    "initial_plant",
    "load_any",
    "load_scenario",
    "load_trace",
    "make_oracle",
    "oracle_tick",
    "oracles_config",
    "phase_windows",
    "plant_energy",
    "plant_step",
    "prepare",
    "run_bench",
    "run_scenario",
    "save_trace",
    "solve_once",
    "trace_columns",
    "trace_digest",
    "true_contacts",
]
