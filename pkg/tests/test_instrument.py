import json
import time

import numpy as np
import pytest

from empic import instrument, runner
from empic.config import parse_config
from empic.instrument import (COM, COMM, USR, NullTimer, RegionTimer,
                              closure_error, merge_reports, report_to_csv,
                              report_to_json, run_scaling_suite)
from tests.conftest import make_config_doc


def test_sleep_calibration():
    t = RegionTimer()
    with t.region("nap", USR):
        time.sleep(0.05)
    rep = t.report()
    assert rep["regions"]["nap"]["time"] == pytest.approx(0.05, abs=2e-3)
    assert rep["all"] == pytest.approx(0.05, abs=2e-3)


def test_nested_self_time_attribution():
    t = RegionTimer()
    with t.region("outer", COM):
        time.sleep(0.02)
        with t.region("inner", USR):
            time.sleep(0.04)
    rep = t.report()
    assert rep["regions"]["outer"]["time"] == pytest.approx(0.02, abs=2e-3)
    assert rep["regions"]["inner"]["time"] == pytest.approx(0.04, abs=2e-3)
    assert rep["classes"][COM] + rep["classes"][USR] == \
        pytest.approx(rep["all"], rel=0.01)


def test_unbalanced_exit_detected():
    t = RegionTimer()
    a = t.region("a", USR)
    b = t.region("b", USR)
    a.__enter__()
    b.__enter__()
    with pytest.raises(RuntimeError, match="unbalanced"):
        a.__exit__(None, None, None)


def test_report_with_open_regions_rejected():
    t = RegionTimer()
    r = t.region("open", USR)
    r.__enter__()
    with pytest.raises(RuntimeError, match="open regions"):
        t.report()
    r.__exit__(None, None, None)


def test_region_class_stable():
    t = RegionTimer()
    with t.region("x", USR):
        pass
    with pytest.raises(RuntimeError, match="declared with class"):
        with t.region("x", COMM):
            pass


def test_null_timer_is_noop():
    t = NullTimer()
    with t.region("anything", USR):
        pass
    assert t.report()["all"] == 0.0


def test_closure_on_real_run():
    doc = make_config_doc(n_steps=5)
    cfg = parse_config(json.dumps(doc))
    res = runner.run_simulation(cfg, rank_grid=(2, 1, 1))
    for rep in res.report["per_rank"]:
        assert closure_error(rep) <= 0.01
        assert rep["classes"][COMM] > 0
        assert rep["classes"][USR] > 0


def test_merge_and_serialization():
    reports = []
    for r in range(3):
        t = RegionTimer()
        with t.region("run", COM):
            with t.region("work", USR):
                time.sleep(0.01 * (r + 1))
        reports.append(t.report())
    merged = merge_reports(reports, top_k=2)
    assert merged["ranks"] == 3
    assert len(merged["top_regions"]) == 2
    assert merged["classes"][USR]["max"] >= merged["classes"][USR]["mean"]
    parsed = json.loads(report_to_json(merged))
    assert parsed["ranks"] == 3
    csv_text = report_to_csv(merged)
    assert "work" in csv_text and "USR" in csv_text
    table = instrument.format_report(merged)
    assert "work" in table


def test_scaling_suite_weak_keeps_per_rank_cells():
    doc = make_config_doc(grid_cells=[8, 8, 8], box_size=[2.0, 2.0, 2.0],
                          n_steps=3)
    cfg = parse_config(json.dumps(doc))
    suite = run_scaling_suite(cfg, [1, 2], "weak", io_compare=False)
    cells = {e["ranks"]: np.prod(e["cells"]) for e in suite["entries"]}
    assert cells[2] == 2 * cells[1]
    table = instrument.format_scaling_table(suite)
    assert "weak scaling" in table


def test_scaling_suite_strong_reports_speedup():
    doc = make_config_doc(grid_cells=[8, 8, 8], box_size=[2.0, 2.0, 2.0],
                          n_steps=3)
    cfg = parse_config(json.dumps(doc))
    suite = run_scaling_suite(cfg, [1, 2], "strong", io_compare=True)
    first = suite["entries"][0]
    assert first["speedup"]["ALL"] == 1.0
    assert all("io_seconds" in e for e in suite["entries"])
    for e in suite["entries"]:
        assert e["io_seconds"]["aggregated"] > 0
        assert e["io_seconds"]["legacy-shared"] > 0
    table = instrument.format_scaling_table(suite)
    assert "aggregated" in table
