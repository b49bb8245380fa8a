"""
Spectrum Poisoning Simulator - Main Entry Point

Landing page that introduces the simulated scenario and provides navigation
to the experiment and report pages via Streamlit multipage.
"""

import streamlit as st
from pathlib import Path
import sys

# Add backend to path
sys.path.append(str(Path(__file__).parent))

from backend.config import configure_logging, reference_default

# =====================================================================
# PAGE CONFIGURATION
# =====================================================================

st.set_page_config(
    page_title="Spectrum Poisoning Simulator",
    page_icon="📡",
    layout="wide",
    initial_sidebar_state="expanded"
)

# =====================================================================
# DEFAULT SCENARIO
# =====================================================================

@st.cache_resource
def load_default_scenario():
    """Configure logging and build the reference scenario once"""
    configure_logging()
    return reference_default()

config = load_default_scenario()

# =====================================================================
# MAIN PAGE CONTENT
# =====================================================================

st.title("📡 Spectrum Poisoning Simulator")
st.markdown("### Adversarial attacks and defenses on learning-based dynamic spectrum access")

st.divider()

st.markdown("""
## 👋 Welcome

A transmitter **T** learns from the power it senses whether each time slot is **idle or busy**
and transmits to its receiver **R** only in slots it believes idle. An adversary **A** listens
to the channel and to R's acknowledgements, trains a **surrogate classifier** of T's behaviour
and then attacks:

- **Evasion**: transmit during T's sensing period so T sees a busy channel and stays silent
- **Causative**: poison the data T collects for retraining, so the retrained classifier is wrong
- **Jamming**: jam the data period of the slots where T would succeed, under the same energy budget

T can defend itself by flipping a small fraction of its most confident decisions, which
corrupts the labels A learns from.
""")

st.divider()

st.markdown("## 🧭 Navigation")

col1, col2 = st.columns(2)

with col1:
    st.markdown("""
    ### 🧪 Experiments

    Run attack and defense cells over seeded replications.

    **Metrics:**
    - **Throughput (M_Th)**: successful transmissions per idle slot
    - **Success ratio (M_Sr)**: successful transmissions per transmission
    - **Transmission ratio (M_Tr)**: transmissions per slot
    - **Classifier errors**: misdetection and false alarm of T's and A's classifiers

    👉 **Go to the Experiments page in the sidebar** ⬅️
    """)

with col2:
    st.markdown("""
    ### 📊 Report

    Load a JSON report written by the Experiments page or by `spectrum_cli.py`
    and inspect it again.

    👉 **Go to the Report page in the sidebar** ⬅️
    """)

st.divider()

st.markdown("## 🗺️ Reference Topology")

nodes = [
    {"node": n.id, "x": n.position[0], "y": n.position[1], "transmit power": n.transmit_power}
    for n in config.nodes
]
st.dataframe(nodes, hide_index=True)
st.caption(
    f"Background arrival rate λ = {config.arrival_rate}, SNR threshold γ_min = {config.sinr_threshold}, "
    f"sensing window of {config.n_new} samples, {config.num_train_slots}/{config.num_test_slots} training/validation samples."
)

st.divider()
st.caption("🔬 Spectrum Poisoning Simulator | Slot-level simulation of sensing-based spectrum access under attack")
