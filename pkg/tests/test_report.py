import json

import numpy as np
import pandas as pd
import pytest

from backend.report import emit_report, load_report, table_to_json


@pytest.fixture
def table():
    return pd.DataFrame({
        "attack": ["baseline", "evasion"],
        "P_d": [0.0, 0.0],
        "seeds": [2, 2],
        "M_Th_mean": [0.98, 0.01],
        "M_Sr_mean": [0.97, np.nan],
    })


def test_csv_leaves_undefined_cells_empty(table):
    lines = emit_report(table, "csv").splitlines()
    assert lines[0] == "attack,P_d,seeds,M_Th_mean,M_Sr_mean"
    assert lines[2] == "evasion,0.0,2,0.01,"


def test_json_writes_null(table):
    payload = json.loads(emit_report(table, "json"))
    assert payload["columns"] == list(table.columns)
    assert payload["rows"][1]["M_Sr_mean"] is None
    assert payload["rows"][0]["seeds"] == 2


def test_json_report_reloads_unchanged(table):
    restored = load_report(emit_report(table, "json"))
    assert list(restored.columns) == list(table.columns)
    assert table_to_json(restored) == table_to_json(table)


def test_report_file(table, tmp_path):
    path = tmp_path / "results.json"
    text = emit_report(table, "json", path)
    assert path.read_text(encoding="utf-8") == text
    assert table_to_json(load_report(path)) == table_to_json(table)


def test_unwritable_destination(table, tmp_path):
    with pytest.raises(OSError):
        emit_report(table, "csv", tmp_path / "missing" / "results.csv")


def test_bad_requests(table):
    with pytest.raises(ValueError, match="no results"):
        emit_report(pd.DataFrame(), "csv")
    with pytest.raises(ValueError, match="unknown report format"):
        emit_report(table, "xml")


def test_malformed_reports():
    with pytest.raises(ValueError, match="not valid JSON"):
        load_report("{broken")
    with pytest.raises(ValueError, match="columns"):
        load_report('{"rows": []}')
