"""
Spectrum Poisoning Simulator - Experiments

Configure a scenario in the sidebar, run attack/defense cells over seeded
replications and download the summary table.
"""

import streamlit as st
import pandas as pd
import json
from dataclasses import replace
from pathlib import Path
import sys

# Add backend to path
sys.path.append(str(Path(__file__).parent.parent))

from backend.channel import CHANNEL_KINDS
from backend.config import (
    ATTACK_KINDS,
    FEATURE_SCALES,
    ConfigError,
    apply_overrides,
    configure_logging,
    reference_default,
    scenario_from_dict,
)
from backend.harness import ExperimentSpec, run_experiment
from backend.report import emit_report

configure_logging()

# =====================================================================
# PAGE CONFIGURATION
# =====================================================================

st.set_page_config(
    page_title="Experiments - Spectrum Poisoning",
    page_icon="🧪",
    layout="wide",
    initial_sidebar_state="expanded"
)

st.title("🧪 Attack / Defense Experiments")
st.markdown("""
Each replication trains T, lets A observe and train its surrogate, and then runs the
selected attacks on the same traffic and channel realization. The **baseline** row is
always included: no attack, no defense.
""")

PD_CHOICES = [0.0, 0.1, 0.2, 0.4, 0.6, 0.8]

# =====================================================================
# SIDEBAR CONFIGURATION
# =====================================================================

def render_sidebar():
    """Render the scenario sidebar and return (scenario, attacks, P_d levels, seeds)"""
    st.sidebar.title("⚙️ Scenario")

    uploaded = st.sidebar.file_uploader("Scenario JSON (optional)", type=["json"])
    config = reference_default()
    if uploaded is not None:
        try:
            config = scenario_from_dict(json.load(uploaded))
        except (ValueError, ConfigError) as e:
            st.sidebar.error(f"Invalid scenario: {e}")

    st.sidebar.subheader("Attacks and Defense")
    attacks = st.sidebar.multiselect(
        "Attack cells:",
        options=list(ATTACK_KINDS),
        default=["none", "evasion"],
        help="Causative cells poison T's retraining data before the test phase"
    )
    levels = st.sidebar.multiselect(
        "Defense levels P_d:",
        options=PD_CHOICES,
        default=[0.0],
        help="Fraction of T's most confident decisions that may be flipped"
    )

    st.sidebar.divider()
    st.sidebar.subheader("Environment")
    channel = st.sidebar.selectbox(
        "Channel model",
        options=list(CHANNEL_KINDS),
        index=list(CHANNEL_KINDS).index(config.channel_model.kind),
    )
    arrival = st.sidebar.slider("Arrival rate λ", min_value=0.05, max_value=1.0,
                                value=float(config.arrival_rate), step=0.05)
    retraining = st.sidebar.checkbox("Periodic retraining", value=config.retraining.enabled)
    infer = st.sidebar.checkbox("A infers the retraining schedule", value=config.retraining.infer_schedule,
                                disabled=not retraining)
    feature_scale = st.sidebar.selectbox(
        "Classifier features",
        options=list(FEATURE_SCALES),
        index=list(FEATURE_SCALES).index(config.feature_scale),
        help="db learns on 10·log10 of the sensed powers"
    )
    overrides = st.sidebar.text_area(
        "Extra overrides (one KEY=VALUE per line)",
        value="",
        help="Dotted paths, e.g. sources.0.position=[0,15]"
    )

    st.sidebar.divider()
    st.sidebar.subheader("Replications")
    n_seeds = st.sidebar.slider("Seeds", min_value=1, max_value=20, value=3)
    seed_start = st.sidebar.number_input("First seed", min_value=0, value=0, step=1)

    config = replace(
        config,
        channel_model=replace(config.channel_model, kind=channel),
        arrival_rate=arrival,
        retraining=replace(config.retraining, enabled=retraining, infer_schedule=infer),
        feature_scale=feature_scale,
    )
    lines = [line.strip() for line in overrides.splitlines() if line.strip()]
    config = apply_overrides(config, lines)
    seeds = tuple(range(int(seed_start), int(seed_start) + n_seeds))
    return config, tuple(attacks), tuple(sorted(levels)), seeds


# =====================================================================
# RESULTS DISPLAY
# =====================================================================

def render_results(table: pd.DataFrame):
    """Metric cards for throughput per cell, then the full table and downloads"""
    st.subheader("📈 Throughput per cell")

    cards = table[["attack", "P_d", "M_Th_mean"]].to_dict("records")
    cols = st.columns(max(min(len(cards), 4), 2))
    for i, card in enumerate(cards):
        value = "N/A" if pd.isna(card["M_Th_mean"]) else f"{card['M_Th_mean']:.3f}"
        cols[i % len(cols)].metric(f"{card['attack']} (P_d={card['P_d']:g})", value)

    st.subheader("📝 Summary table")
    st.dataframe(table, width='stretch', hide_index=True)

    col1, col2 = st.columns(2)
    col1.download_button("⬇️ Download CSV", emit_report(table, "csv"),
                         file_name="results.csv", mime="text/csv")
    col2.download_button("⬇️ Download JSON", emit_report(table, "json"),
                         file_name="results.json", mime="application/json")


try:
    scenario, attacks, levels, seeds = render_sidebar()
except (ValueError, ConfigError) as e:
    st.error(f"❌ Invalid configuration: {e}")
    st.stop()

if st.button("🚀 Run experiment"):
    try:
        spec = ExperimentSpec(scenario=scenario, attacks=attacks, defense_levels=levels, seeds=seeds)
    except ValueError as e:
        st.error(f"❌ {e}")
        st.stop()

    st.info(f"Running {len(attacks)} attack(s) × {len(levels)} defense level(s) over {len(seeds)} seed(s)... "
            "*This may take some time*")
    progress_bar = st.progress(0)

    def on_progress(done: int, total: int):
        progress_bar.progress(int(100 * done / total))

    try:
        result = run_experiment(spec, on_progress)
        st.session_state.experiment_table = result.summary()
    except ValueError as e:
        st.error(f"Simulation error: {e}")
        st.stop()

if "experiment_table" in st.session_state:
    st.divider()
    render_results(st.session_state.experiment_table)
