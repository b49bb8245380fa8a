from __future__ import annotations

import io
import json
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd

from backend.harness import ExperimentResult

# Role of this module:
# Serializes result tables. CSV leaves undefined ratios as empty cells, JSON writes
# them as null. Both keep the table's row order.

logger = logging.getLogger(__name__)

REPORT_FORMATS = ("csv", "json")

Results = Union[ExperimentResult, pd.DataFrame]


def _as_table(results: Results) -> pd.DataFrame:
    table = results.summary() if isinstance(results, ExperimentResult) else results
    if table is None or table.empty:
        raise ValueError("no results to report")
    return table


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return None if np.isnan(value) else float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def table_to_json(table: pd.DataFrame) -> dict:
    rows = [{col: _plain(v) for col, v in zip(table.columns, row)} for row in table.itertuples(index=False)]
    return {"columns": [str(c) for c in table.columns], "rows": rows}


def emit_report(results: Results, fmt: str = "csv", path: Optional[Union[str, Path]] = None) -> str:
    """
    Serialize a summary table (or an ExperimentResult's summary) as CSV or JSON.

    Args:
        results: ExperimentResult or an already aggregated DataFrame
        fmt: "csv" or "json"
        path: optional file to write; parent directories must exist

    Returns:
        the serialized text
    """
    if fmt not in REPORT_FORMATS:
        raise ValueError(f"unknown report format '{fmt}' (expected csv or json)")
    table = _as_table(results)
    if fmt == "csv":
        buffer = io.StringIO()
        table.to_csv(buffer, index=False, na_rep="")
        text = buffer.getvalue()
    else:
        text = json.dumps(table_to_json(table), indent=2)

    if path is not None:
        path = Path(path)
        path.write_text(text, encoding="utf-8")
        logger.info("wrote %d rows to %s", len(table), path)
    return text


def load_report(source: Union[str, Path]) -> pd.DataFrame:
    """Parse a JSON report (file path or text) back into a DataFrame with its column order."""
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(source).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"report is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "columns" not in payload or "rows" not in payload:
        raise ValueError("report must hold 'columns' and 'rows'")
    return pd.DataFrame(payload["rows"], columns=payload["columns"])
