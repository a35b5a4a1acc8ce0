import numpy as np
import pytest
import yaml
from conftest import make_cost

from cfmpc.mpc import HoldPhase, PhaseSchedule, PhaseScheduleSpec
from cfmpc.sim import Threshold, TraceWriter, compute_metrics, evaluate_thresholds, load_trace, phase_windows
from cfmpc.sim.metrics import write_report


@pytest.fixture
def schedule():
    spec = PhaseScheduleSpec(phases=[HoldPhase(name="press", start_s=0.0, position_axes=(1, 1, 0))])
    return PhaseSchedule(spec, make_cost(), np.array([0.5, 0.0, 0.4]), np.zeros(3))


def _trace(rows=100, force=(0.0, 0.0, 5.0)):
    writer = TraceWriter(3)
    index = {name: i for i, name in enumerate(writer.columns)}
    for i in range(rows):
        row = np.zeros(len(writer.columns))
        row[index["t_s"]] = i * 1e-3
        row[index["phase"]] = 0
        row[[index["des_x_m"], index["des_y_m"], index["des_z_m"]]] = [0.5, 0.0, 0.4]
        # 1 cm off along x, 3 cm along the unselected z axis
        row[[index["ee_x_m"], index["ee_y_m"], index["ee_z_m"]]] = [0.51, 0.0, 0.43]
        row[[index["f3_true_x_n"], index["f3_true_y_n"], index["f3_true_z_n"]]] = force
        row[[index["f3_fb_x_n"], index["f3_fb_y_n"], index["f3_fb_z_n"]]] = force
        row[[index["f1_true_x_n"], index["f1_true_y_n"], index["f1_true_z_n"]]] = [0.0, 12.0, 0.0] if i == 50 else 0.0
        # the estimate of the spike on link 1 falls short of the plant force
        row[[index["f1_fb_x_n"], index["f1_fb_y_n"], index["f1_fb_z_n"]]] = [0.0, 11.0, 0.0] if i == 50 else 0.0
        writer.append(row)
    return writer


def test_metrics_of_a_constant_offset(schedule):
    table = compute_metrics(_trace().trace(), phase_windows(schedule), 3)
    press = table.phases["press"]
    assert press.samples == 100
    assert press.position_rmse_m == pytest.approx(0.01)
    assert press.force_rmse_n == pytest.approx(0.0)
    assert press.max_force_n[1] == pytest.approx(11.0)
    assert press.max_force_n[3] == pytest.approx(5.0)


def test_peak_force_is_taken_from_the_feedback(schedule):
    table = compute_metrics(_trace().trace(), phase_windows(schedule), 3)
    assert table.run.max_force_n == pytest.approx({1: 11.0, 2: 0.0, 3: 5.0})
    assert table.run.max_true_force_n == pytest.approx({1: 12.0, 2: 0.0, 3: 5.0})
    results = evaluate_thresholds(
        table,
        [Threshold(metric="max_force_n", links=[1], max=11.5), Threshold(metric="max_true_force_n", links=[1], max=11.5)],
        stalls=0,
    )
    assert [r.passed for r in results] == [True, False]


def test_force_error_is_measured_on_the_selected_axes(schedule):
    table = compute_metrics(_trace(force=(4.0, 0.0, 8.0)).trace(), phase_windows(schedule), 3)
    assert table.phases["press"].force_rmse_n == pytest.approx(3.0)


def test_empty_windows_have_no_metrics(schedule):
    table = compute_metrics(_trace().trace(), phase_windows(schedule), 3)
    initial = table.phases["initial"]
    assert initial.samples == 0
    assert initial.position_rmse_m is None and initial.force_rmse_n is None


def test_thresholds(schedule):
    table = compute_metrics(_trace().trace(), phase_windows(schedule), 3)
    thresholds = [
        Threshold(metric="position_rmse_m", phase="press", max=0.02),
        Threshold(metric="max_force_n", links=[2, 3], max=10.0),
        Threshold(metric="max_force_n", max=10.0),
        Threshold(metric="force_rmse_n", phase="initial", max=1.0),
        Threshold(metric="stalls", max=5),
    ]
    results = evaluate_thresholds(table, thresholds, stalls=7)
    assert [r.passed for r in results] == [True, True, False, False, False]
    assert results[1].value == pytest.approx(5.0)
    assert results[3].value is None


def test_thresholds_need_a_bound():
    with pytest.raises(ValueError):
        Threshold(metric="stalls")


def test_report_and_trace_files(schedule, tmp_path):
    writer = _trace(rows=10)
    digest = writer.save(tmp_path / "trace.csv")
    trace = load_trace(tmp_path / "trace.csv")
    assert trace.columns == writer.columns
    np.testing.assert_allclose(trace.data, writer.trace().data, rtol=1e-8)
    assert len(digest) == 64

    table = compute_metrics(trace, phase_windows(schedule), 3)
    results = evaluate_thresholds(table, [Threshold(metric="stalls", max=0)], stalls=0)
    write_report(tmp_path / "metrics.yaml", "synthetic", table, results, [0.001, 0.002], extra={"seed": 3})
    report = yaml.safe_load((tmp_path / "metrics.yaml").read_text())
    assert report["passed"] is True
    assert report["seed"] == 3
    assert report["solve_time"]["count"] == 2
    assert report["phases"]["press"]["position_rmse_m"] == pytest.approx(0.01)


def test_trace_rows_must_match_the_columns():
    with pytest.raises(ValueError):
        TraceWriter(3).append(np.zeros(4))
