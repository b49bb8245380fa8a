"""
Spectrum Poisoning Simulator - Report

Upload a JSON report written by the Experiments page or by spectrum_cli.py and
inspect it again.
"""

import streamlit as st
import pandas as pd
from pathlib import Path
import sys

# Add backend to path
sys.path.append(str(Path(__file__).parent.parent))

from backend.config import configure_logging
from backend.report import emit_report, load_report

configure_logging()

# =====================================================================
# PAGE CONFIGURATION
# =====================================================================
st.set_page_config(
    page_title="Report - Spectrum Poisoning",
    page_icon="📊",
    layout="wide"
)

st.title("📊 Stored Report")
st.markdown("""
Load a JSON report to view the per-cell summary again. Empty cells are ratios that were
undefined in every replication (for example the success ratio when T never transmitted).
""")

METRIC_LABELS = {
    "M_Th_mean": "Throughput",
    "M_Sr_mean": "Success ratio",
    "M_Tr_mean": "Transmission ratio",
}

uploaded_file = st.file_uploader("1. Upload report JSON file", type=["json"])

if uploaded_file is not None:
    try:
        table = load_report(uploaded_file.getvalue().decode("utf-8"))
    except ValueError as e:
        st.error(f"The uploaded file is not a valid report: {e}")
        st.stop()

    if table.empty:
        st.warning("The report holds no rows.")
        st.stop()

    # Summary tables from the experiment harness carry attack/P_d; sweep tables do not
    if {"attack", "P_d"}.issubset(table.columns):
        st.subheader("📈 Cells")
        choice = st.selectbox(
            "Cell",
            options=list(range(len(table))),
            format_func=lambda i: f"{table.loc[i, 'attack']} (P_d={table.loc[i, 'P_d']:g})",
        )
        row = table.loc[choice]
        available = [(col, label) for col, label in METRIC_LABELS.items() if col in table.columns]
        cols = st.columns(max(len(available), 2))
        for i, (col, label) in enumerate(available):
            value = row[col]
            cols[i].metric(label, "N/A" if pd.isna(value) else f"{value:.3f}")

    st.subheader("📝 Full table")
    st.dataframe(table, width='stretch', hide_index=True)

    st.download_button("⬇️ Download as CSV", emit_report(table, "csv"),
                       file_name=Path(uploaded_file.name).with_suffix(".csv").name, mime="text/csv")
