#!/usr/bin/env python3
"""
PRCut Run Browser - Streamlit Application
Browse training runs written by `prcut train`: loss curves, cluster masses,
predicted clusters, metrics and the k-NN graph.
"""
import json
from pathlib import Path
from typing import Optional

import numpy as np
import streamlit as st

from prcut import config
from prcut.components import charts
from prcut.core.metrics import contingency
from prcut.data.runs import RunArtifacts, list_runs, load_run
from prcut.utils.css_engine import apply_css, flag_badges

st.set_page_config(**config.DEFAULT_PAGE_CONFIG)


@st.cache_data(show_spinner=False)
def _load_run_cached(path: str, mtime: float) -> RunArtifacts:
    return load_run(path)


def initialize_session_state():
    if "runs_dir" not in st.session_state:
        st.session_state.runs_dir = config.RUNS_DIR
    if "selected_run" not in st.session_state:
        st.session_state.selected_run = None


def create_header():
    st.markdown('<h1 class="title-gradient">🧩 PRCut Run Browser</h1>', unsafe_allow_html=True)
    st.markdown(
        '<p class="subtitle">Probabilistic ratio-cut training runs, metrics and graphs</p>',
        unsafe_allow_html=True,
    )


def create_sidebar() -> Optional[RunArtifacts]:
    with st.sidebar:
        st.markdown("## 📁 Runs")
        st.session_state.runs_dir = st.text_input("Runs directory", st.session_state.runs_dir)
        runs = list_runs(st.session_state.runs_dir)
        if not runs:
            st.info(f"No runs found under `{st.session_state.runs_dir}`. Start one with `prcut train`.")
            return None

        names = [p.name for p in runs]
        default = names.index(st.session_state.selected_run) if st.session_state.selected_run in names else len(names) - 1
        st.session_state.selected_run = st.selectbox("Run", names, index=default)
        path = runs[names.index(st.session_state.selected_run)]
        if st.button("🔄 Reload"):
            st.cache_data.clear()
        run = _load_run_cached(str(path), path.stat().st_mtime)

        for problem in run.problems:
            st.warning(problem)
        if run.config:
            train = run.config.get("train", {})
            kernel = run.config.get("kernel", {})
            st.markdown("### ⚙️ Configuration")
            col1, col2 = st.columns(2)
            with col1:
                st.metric("k", train.get("k", "?"))
                st.metric("Batch", train.get("batch_size", "?"))
            with col2:
                st.metric("Steps", train.get("steps", "?"))
                st.metric("γ", train.get("gamma", "?"))
            st.caption(f"Kernel: {kernel.get('kind', '?')}")
            with st.expander("Resolved config"):
                st.markdown(
                    f'<div class="config-box"><pre>{json.dumps(run.config, indent=2)}</pre></div>',
                    unsafe_allow_html=True,
                )
        return run


def training_tab(run: RunArtifacts):
    if not run.history:
        st.info("This run has no loss history yet.")
        return
    frame = charts.history_frame(run.history)
    last = frame.iloc[-1]
    col1, col2, col3, col4 = st.columns(4)
    with col1:
        st.metric("Steps run", int(last["step"]))
    with col2:
        st.metric("L_rc", f"{last['lrc']:.4g}")
    with col3:
        st.metric("KL", f"{last['kl']:.4g}")
    with col4:
        st.metric("Total", f"{last['total']:.4g}")

    smooth = st.slider("Smoothing window", 1, 200, 20)
    st.plotly_chart(charts.loss_figure(frame, smooth), use_container_width=True)
    st.plotly_chart(charts.pbar_figure(frame), use_container_width=True)


def clusters_tab(run: RunArtifacts):
    if run.projection is None:
        st.info("No projection.csv in this run.")
        return
    st.plotly_chart(charts.cluster_scatter(run.projection), use_container_width=True)
    sizes = run.projection["cluster"].value_counts().sort_index()
    st.bar_chart(sizes)


def metrics_tab(run: RunArtifacts):
    if not run.metrics:
        st.info("No metrics.json in this run.")
        return
    report = run.metrics
    col1, col2, col3, col4 = st.columns(4)
    for col, key, label in ((col1, "acc", "🎯 ACC"), (col2, "nmi", "🔗 NMI"), (col3, "ari", "📐 ARI"), (col4, "rcut", "✂️ RCut")):
        with col:
            value = report.get(key)
            st.metric(label, "N/A" if value is None else f"{value:.4f}")
    if report.get("degenerate_flags"):
        st.markdown(flag_badges(report["degenerate_flags"]), unsafe_allow_html=True)

    if run.baseline:
        st.markdown("### 📊 Spectral clustering baseline")
        rows = [
            {"method": "PRCut", **{k: report.get(k) for k in ("acc", "nmi", "ari", "rcut")}},
            {"method": "Spectral", **{k: run.baseline.get(k) for k in ("acc", "nmi", "ari", "rcut")}},
        ]
        st.dataframe(rows, use_container_width=True)

    projection = run.projection
    if projection is not None and "label" in projection.columns:
        table = contingency(projection["label"].to_numpy(), projection["cluster"].to_numpy())
        st.plotly_chart(charts.contingency_heatmap(table), use_container_width=True)


def graph_tab(run: RunArtifacts):
    if run.graph is None or run.projection is None:
        st.info("This run has no graph.txt (enable the ratio-cut metric to write one).")
        return
    upper = min(run.graph.n, 1000)
    max_nodes = upper
    if upper > 20:
        max_nodes = st.slider("Vertices shown", 20, upper, min(config.MAX_GRAPH_NODES, upper))
    clusters = run.projection["cluster"].to_numpy()
    try:
        st.plotly_chart(charts.graph_figure(run.graph, clusters, max_nodes), use_container_width=True)
    except Exception as e:
        st.error(f"❌ Error drawing graph: {str(e)}")
    st.caption(f"{run.graph.num_edges:,} undirected edges, mean degree {np.mean(run.graph.degree):.1f}")


def main():
    apply_css()
    initialize_session_state()
    run = create_sidebar()
    create_header()
    if run is None:
        return

    tab1, tab2, tab3, tab4 = st.tabs(["📉 Training", "🧩 Clusters", "📊 Metrics", "🕸️ Graph"])
    with tab1:
        training_tab(run)
    with tab2:
        clusters_tab(run)
    with tab3:
        metrics_tab(run)
    with tab4:
        graph_tab(run)

    st.markdown("---")
    st.caption(f"Run folder: `{Path(run.path).resolve()}`")


if __name__ == "__main__":
    main()
