import json
import math

import pytest
from hypothesis import given, strategies as st

from empic.config import (ConfigError, ConfigParseError, derive_dt,
                          parse_config, serialize, validate)
from tests.conftest import make_config_doc


def test_production_scale_document():
    # the standard benchmark setup: 512x512x128 cells, 54 particles/cell
    doc = make_config_doc(grid_cells=[512, 512, 128],
                          box_size=[102.4, 102.4, 25.6])
    doc["species"][0]["particles_per_cell"] = 54
    cfg = parse_config(json.dumps(doc))
    assert cfg.grid_cells == (512, 512, 128)
    assert cfg.species[0].particles_per_cell == 54
    assert cfg.species[0].init.kind == "two_stream"
    plan = validate(cfg)
    assert plan.dt > 0
    assert plan.rank_grid == (1, 1, 1)


def test_cubic_cfl_one_gives_dx_over_sqrt3():
    doc = make_config_doc(grid_cells=[8, 8, 8], box_size=[2.0, 2.0, 2.0],
                          cfl_factor=1.0)
    cfg = parse_config(json.dumps(doc))
    plan = validate(cfg)
    assert plan.dt == 0.25 / math.sqrt(3.0)


def test_unknown_key_is_named():
    doc = make_config_doc()
    doc["species"][0]["particels_per_cell"] = 4
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(doc))
    assert "particels_per_cell" in str(err.value)


def test_unknown_top_level_key():
    doc = make_config_doc(gird_cells=[1, 2, 3])
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(doc))
    assert "gird_cells" in str(err.value)


def test_malformed_json_reports_line_and_column():
    with pytest.raises(ConfigParseError) as err:
        parse_config('{"grid_cells": [16, 8, 8],\n  "box_size": }')
    msg = str(err.value)
    assert "line 2" in msg and "column" in msg


def test_missing_required_key():
    doc = make_config_doc()
    del doc["box_size"]
    with pytest.raises(ConfigError) as err:
        parse_config(json.dumps(doc))
    assert "box_size" in str(err.value)


def test_all_violations_reported_at_once():
    doc = make_config_doc(cfl_factor=1.5, n_steps=-1)
    doc["species"][0]["particles_per_cell"] = 3  # odd for two_stream
    cfg = parse_config(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        validate(cfg)
    assert len(err.value.errors) >= 3


def test_io_group_must_divide_ranks():
    doc = make_config_doc(grid_cells=[48, 8, 8], box_size=[12.0, 2.0, 2.0],
                          io={"group_size": 64, "files": 1},
                          rank_grid=[6, 2, 2])
    doc["species"] = []
    cfg = parse_config(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        validate(cfg)
    assert "divide rank count" in str(err.value)


def test_io_files_must_be_less_than_masters():
    doc = make_config_doc(grid_cells=[32, 16, 8], io={"group_size": 2,
                                                      "files": 5},
                          rank_grid=[2, 2, 2])
    cfg = parse_config(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        validate(cfg)
    assert "smaller than the master count" in str(err.value)


def test_io_auto_rules():
    doc = make_config_doc(grid_cells=[32, 16, 16], rank_grid=[2, 2, 2])
    cfg = parse_config(json.dumps(doc))
    plan = validate(cfg)
    # largest divisor of 8 below 128 is 8 -> one master, one file
    assert plan.io_group_size == 8
    assert plan.io_files == 1


def test_rank_grid_incompatible_with_cells():
    doc = make_config_doc(rank_grid=[8, 1, 1])  # 16 cells / 8 ranks = 2 < 4
    cfg = parse_config(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        validate(cfg)
    assert "rank grid incompatible" in str(err.value)


def test_output_species_validation():
    doc = make_config_doc(outputs=[{"quantity": "density",
                                    "species": "ions"}])
    cfg = parse_config(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        validate(cfg)
    assert "ions" in str(err.value)


def test_time_window_order():
    doc = make_config_doc(outputs=[{"quantity": "E",
                                    "time_window": [2.0, 1.0]}])
    cfg = parse_config(json.dumps(doc))
    with pytest.raises(ConfigError) as err:
        validate(cfg)
    assert "window" in str(err.value)


def test_round_trip_all_region_kinds():
    doc = make_config_doc(outputs=[
        {"quantity": "E", "region": {"kind": "full"}},
        {"quantity": "B", "region": {"kind": "plane", "axis": "z",
                                     "coordinate": 1.0}},
        {"quantity": "J",
         "region": {"kind": "box", "lo": [0.5, 0.0, 0.0],
                    "hi": [1.5, 1.0, 1.0]}},
        {"quantity": "density", "species": "electrons",
         "region": {"kind": "line", "axis": "x", "fixed": [0.5, 0.25]},
         "every_n_steps": 5, "time_window": [0.0, 3.5]},
    ], io={"group_size": 2, "files": 1}, rank_grid=[2, 2, 1])
    cfg = parse_config(json.dumps(doc))
    cfg2 = parse_config(serialize(cfg))
    assert cfg2 == cfg
    assert validate(cfg2) == validate(cfg)


def test_validation_is_pure(config_text):
    a = parse_config(config_text)
    b = parse_config(config_text)
    assert a == b
    assert validate(a) == validate(b)


@given(nx=st.integers(1, 512), ny=st.integers(1, 512), nz=st.integers(1, 512),
       lx=st.floats(0.1, 100), ly=st.floats(0.1, 100), lz=st.floats(0.1, 100),
       cfl=st.floats(0.01, 1.0))
def test_dt_below_per_axis_bound(nx, ny, nz, lx, ly, lz, cfl):
    # the full 3D bound implies the per-axis condition dx_i >= c*dt
    dt = derive_dt((nx, ny, nz), (lx, ly, lz), cfl)
    assert dt <= min(lx / nx, ly / ny, lz / nz) * (1 + 1e-12)


def test_defaults_fill():
    cfg = parse_config(json.dumps({
        "grid_cells": [16, 8, 8], "box_size": [4, 2, 2], "n_steps": 0,
        "species": []}))
    assert cfg.cfl_factor == 0.98
    assert cfg.layout == "SoA"
    assert cfg.io.group_size == "auto"
    assert cfg.rank_grid == "auto"
    assert cfg.outputs == ()
