"""
Plotly figure builders for the run browser.

Everything here takes plain data (records, arrays, graphs) and returns a
figure or a DataFrame, so it can be tested without a Streamlit session.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import networkx as nx
import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
from sklearn.decomposition import PCA

from prcut import config
from prcut.core.graph import SparseSimilarity

LOSS_COLUMNS = ["lrc", "kl", "total"]


def history_frame(records: List[Dict]) -> pd.DataFrame:
    """One row per step with the loss terms and one `pbar_ℓ` column per cluster."""
    if not records:
        return pd.DataFrame(columns=["step"] + LOSS_COLUMNS)
    frame = pd.DataFrame.from_records(records)
    masses = pd.DataFrame(frame.pop("pbar").tolist(), index=frame.index)
    masses.columns = [f"pbar_{c}" for c in masses.columns]
    return pd.concat([frame, masses], axis=1)


def loss_figure(frame: pd.DataFrame, smooth: int = 1) -> go.Figure:
    columns = [c for c in LOSS_COLUMNS if c in frame.columns]
    long = frame.melt(id_vars="step", value_vars=columns, var_name="term", value_name="value")
    if smooth > 1:
        long["value"] = long.groupby("term")["value"].transform(lambda s: s.rolling(smooth, min_periods=1).mean())
    fig = px.line(long, x="step", y="value", color="term", title="📉 Training loss")
    fig.update_layout(height=400, xaxis_title="Step", yaxis_title="Loss")
    return fig


def pbar_figure(frame: pd.DataFrame) -> go.Figure:
    columns = [c for c in frame.columns if c.startswith("pbar_")]
    long = frame.melt(id_vars="step", value_vars=columns, var_name="cluster", value_name="mass")
    long["cluster"] = long["cluster"].str.replace("pbar_", "", regex=False)
    fig = px.line(long, x="step", y="mass", color="cluster", title="⚖️ Cluster masses p̄")
    fig.update_layout(height=400, xaxis_title="Step", yaxis_title="p̄", yaxis_range=[0, 1])
    return fig


def project_2d(features: np.ndarray) -> np.ndarray:
    """First two columns for low-dimensional data, a PCA projection otherwise."""
    X = np.asarray(features, dtype=np.float64)
    if X.shape[1] == 1:
        return np.column_stack([X[:, 0], np.zeros(X.shape[0])])
    if X.shape[1] == 2:
        return X.copy()
    return PCA(n_components=2, svd_solver="full").fit_transform(X)


def projection_frame(coords: np.ndarray, clusters: np.ndarray, labels: Optional[np.ndarray] = None) -> pd.DataFrame:
    frame = pd.DataFrame({"x": coords[:, 0], "y": coords[:, 1], "cluster": np.asarray(clusters, dtype=np.int64)})
    if labels is not None:
        frame["label"] = np.asarray(labels, dtype=np.int64)
    return frame


def subsample(n: int, limit: int) -> np.ndarray:
    """Evenly spaced indices, deterministic."""
    if n <= limit:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, limit).astype(np.int64))


def cluster_scatter(frame: pd.DataFrame, max_points: int = config.MAX_SCATTER_POINTS) -> go.Figure:
    shown = frame.iloc[subsample(len(frame), max_points)].copy()
    shown["cluster"] = shown["cluster"].astype(str)
    hover = ["label"] if "label" in shown.columns else None
    fig = px.scatter(shown, x="x", y="y", color="cluster", hover_data=hover, title="🧩 Predicted clusters")
    fig.update_traces(marker=dict(size=5))
    fig.update_layout(height=550)
    return fig


def contingency_heatmap(table: np.ndarray) -> go.Figure:
    fig = px.imshow(
        table,
        text_auto=True,
        color_continuous_scale="Blues",
        labels=dict(x="Cluster", y="Class", color="Count"),
        title="🔢 Class × cluster counts",
    )
    fig.update_layout(height=450)
    return fig


def graph_figure(
    graph: SparseSimilarity,
    clusters: Sequence[int],
    max_nodes: int = config.MAX_GRAPH_NODES,
    seed: int = 0,
) -> go.Figure:
    """Spring layout of the subgraph induced by at most `max_nodes` vertices."""
    nodes = subsample(graph.n, max_nodes).tolist()
    G = graph.to_networkx().subgraph(nodes)
    pos = nx.spring_layout(G, seed=seed)
    clusters = np.asarray(clusters)

    edge_x: List[Optional[float]] = []
    edge_y: List[Optional[float]] = []
    for u, v in G.edges():
        edge_x += [pos[u][0], pos[v][0], None]
        edge_y += [pos[u][1], pos[v][1], None]

    fig = go.Figure()
    fig.add_trace(
        go.Scatter(x=edge_x, y=edge_y, mode="lines", line=dict(width=0.5, color="#999"), hoverinfo="none", name="edges")
    )
    for cluster in np.unique(clusters[nodes]):
        members = [v for v in nodes if clusters[v] == cluster]
        fig.add_trace(
            go.Scatter(
                x=[pos[v][0] for v in members],
                y=[pos[v][1] for v in members],
                mode="markers",
                marker=dict(size=7),
                text=[f"vertex {v}" for v in members],
                hoverinfo="text",
                name=f"cluster {cluster}",
            )
        )
    fig.update_layout(
        title=f"🕸️ k-NN graph ({len(nodes)} of {graph.n} vertices)",
        hovermode="closest",
        xaxis=dict(showgrid=False, zeroline=False, showticklabels=False),
        yaxis=dict(showgrid=False, zeroline=False, showticklabels=False),
        plot_bgcolor="rgba(0,0,0,0)",
        height=600,
    )
    return fig
