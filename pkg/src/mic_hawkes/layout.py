"""Bi-layered network layout computed from fitted parameters.

Cascades sit on the lower layer, placed by a seeded spring embedding of the
thresholded interaction graph.  Each user sits on the upper layer above the
convex combination of cascade positions given by its time-averaged mixing
density.  Only coordinates are produced; drawing is left to other tools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .likelihood import HistoryDesign
from .model import EventLog, ModelParams

LAYOUT_SCHEMA = "mic-hawkes/layout"


@dataclass
class LayoutDocument:
    cascade_nodes: list = field(default_factory=list)
    user_nodes: list = field(default_factory=list)
    intra_cascade_edges: list = field(default_factory=list)
    intra_user_edges: list = field(default_factory=list)
    cross_edges: list = field(default_factory=list)
    layer_offset: float = 1.0
    threshold_quantile: float = 0.95

    def to_dict(self) -> dict:
        return {
            "schema": LAYOUT_SCHEMA,
            "version": 1,
            "layer_offset": self.layer_offset,
            "threshold_quantile": self.threshold_quantile,
            "cascade_nodes": self.cascade_nodes,
            "user_nodes": self.user_nodes,
            "intra_cascade_edges": self.intra_cascade_edges,
            "intra_user_edges": self.intra_user_edges,
            "cross_edges": self.cross_edges,
        }


def _threshold(weights: np.ndarray, quantile: float) -> float:
    nz = weights[weights > 0]
    if nz.size == 0:
        return math.inf
    return float(np.quantile(nz, quantile))


def _circle(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros((1, 2))
    ang = 2 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(ang), np.sin(ang)])


def mean_mixture(params: ModelParams, log: EventLog) -> np.ndarray:
    """Average of ``f_u(.|t_i)`` over each user's own event times.

    Users without events get the density of their baseline alone.
    """
    design = HistoryDesign(log, params.W > 0, params.n_cascades, params.tau)
    out = params.mixing.density(params.M.copy())
    for u, b in enumerate(design.blocks):
        if b.n_events:
            E = design.excitation(u, params.W)
            out[u] = params.mixing.density(params.M[u] + E @ params.Sigma).mean(axis=0)
    return out / out.sum(axis=1, keepdims=True)


def layout(params: ModelParams, log: EventLog, seed: int = 0, threshold_quantile: float = 0.95,
           layer_offset: float = 1.0, iterations: int = 200) -> LayoutDocument:
    n_u, n_c = params.M.shape
    Sigma = params.Sigma.copy()
    np.fill_diagonal(Sigma, 0.0)
    s_thr = _threshold(Sigma, threshold_quantile)
    cascade_edges = [(int(s), int(c), float(Sigma[s, c])) for s, c in zip(*np.nonzero(Sigma >= s_thr))]

    G = nx.Graph()
    G.add_nodes_from(range(n_c))
    G.add_weighted_edges_from(cascade_edges)
    if cascade_edges:
        pos = nx.spring_layout(G, seed=seed, iterations=iterations, weight="weight")
        cpos = np.array([pos[c] for c in range(n_c)], dtype=float)
    else:
        cpos = _circle(n_c)

    mix = mean_mixture(params, log)
    upos = mix @ cpos
    c_size = np.bincount(log.cascades, minlength=n_c)
    u_size = np.bincount(log.users, minlength=n_u)

    W = params.W.copy()
    np.fill_diagonal(W, 0.0)
    w_thr = _threshold(W, threshold_quantile)
    user_edges = [(int(v), int(u), float(W[v, u])) for v, u in zip(*np.nonzero(W >= w_thr))]

    doc = LayoutDocument(layer_offset=layer_offset, threshold_quantile=threshold_quantile)
    doc.cascade_nodes = [
        {"id": c, "position": cpos[c].tolist(), "layer": 0, "z": 0.0, "size": int(c_size[c])}
        for c in range(n_c)
    ]
    doc.user_nodes = [
        {"id": u, "position": upos[u].tolist(), "layer": 1, "z": layer_offset,
         "size": int(u_size[u]), "mixture": mix[u].tolist()}
        for u in range(n_u)
    ]
    doc.intra_cascade_edges = [{"source": s, "target": c, "weight": w} for s, c, w in cascade_edges]
    doc.intra_user_edges = [{"source": v, "target": u, "weight": w} for v, u, w in user_edges]
    doc.cross_edges = [
        {"cascade": c, "user": int(np.argmax(params.M[:, c])), "weight": float(params.M[:, c].max())}
        for c in range(n_c)
    ]
    return doc


def validate_layout(doc: dict, n_users: int | None = None, n_cascades: int | None = None) -> None:
    """Raise ``ValueError`` if a layout document breaks its invariants."""
    if doc.get("schema") != LAYOUT_SCHEMA:
        raise ValueError("not a layout document")
    cids = {n["id"] for n in doc["cascade_nodes"]}
    uids = {n["id"] for n in doc["user_nodes"]}
    if n_cascades is not None and cids != set(range(n_cascades)):
        raise ValueError("cascade node ids incomplete")
    if n_users is not None and uids != set(range(n_users)):
        raise ValueError("user node ids incomplete")
    for n in doc["cascade_nodes"] + doc["user_nodes"]:
        if not all(math.isfinite(x) for x in n["position"]):
            raise ValueError(f"non-finite position for node {n['id']}")
    for n in doc["user_nodes"]:
        if abs(sum(n["mixture"]) - 1) > 1e-9 or min(n["mixture"]) < 0:
            raise ValueError(f"user {n['id']} mixture is not a probability vector")
    for e in doc["intra_cascade_edges"]:
        if e["source"] not in cids or e["target"] not in cids:
            raise ValueError("cascade edge references an unknown node")
    for e in doc["intra_user_edges"]:
        if e["source"] not in uids or e["target"] not in uids:
            raise ValueError("user edge references an unknown node")
    for e in doc["cross_edges"]:
        if e["cascade"] not in cids or e["user"] not in uids:
            raise ValueError("cross edge references an unknown node")
