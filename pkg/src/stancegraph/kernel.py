"""The graph-kernel stance model.

Per node v of the instance graph, its padded k-hop subgraph is compared to a
bank of schema-derived filters with a p-step random-walk kernel

    k(G_v, H) = s^T W (A_sub ⊗ A_filt)^p s,   s = vec(X_sub X_filt^T)

computed via the vec identity ((A ⊗ B) vec(S) = vec(A S B^T) with row-major
vec), never materializing the Kronecker matrix. Each node keeps its top-g
kernel scores as features, layers stack, and a summed readout feeds a small
ReLU head with softmax. All gradients are hand-derived reverse mode.
"""

from __future__ import annotations

import copy
import json
import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import (DimensionMismatchError, FingerprintMismatchError,
                     IndexOutOfRangeError, InvalidGError, SchemaFormatError,
                     ShapeMismatchError, StaleCacheError)
from .fol import FolGraph, FolNode, Predicate, Relation
from .induce import SchemaLibrary, assign_to_cluster, extract_filters

CHECKPOINT_VERSION = 1

DEFAULT_RELATION_WEIGHTS = {
    Relation.IMPLIES: 1.0,
    Relation.CONJUNCTION: 0.5,
    Relation.DISJUNCTION: 0.5,
    Relation.INSTANCE_OF: 1.0,
}


def relation_weights_from_config(cfg: RunConfig) -> dict[Relation, float]:
    return {Relation(k): float(v) for k, v in cfg.relation_weights.items()}


def graph_adjacency(graph: FolGraph,
                    weights: Optional[dict[Relation, float]] = None) -> np.ndarray:
    """Collapse the typed edge list into one weighted adjacency matrix."""
    weights = weights or DEFAULT_RELATION_WEIGHTS
    n = len(graph.nodes)
    adj = np.zeros((n, n), dtype=np.float64)
    for src, dst, rel in graph.edges:
        adj[src, dst] += weights[rel]
    return adj


# ---------------------------------------------------------------------------
# Subgraph extraction

@dataclass
class PaddedSubgraph:
    adjacency: np.ndarray      # (n_sub, n_sub)
    features: np.ndarray       # (n_sub, f); rows past valid_count are zero
    valid_count: int
    node_indices: list[int]    # graph node ids, center first


def khop_subgraph(adjacency: np.ndarray, features: np.ndarray, v: int,
                  hop: int, n_sub: int) -> PaddedSubgraph:
    """BFS over the undirected skeleton out to `hop` hops; node order is
    center first, then by hop distance then node index; truncated to n_sub
    and zero-padded."""
    n = adjacency.shape[0]
    if not 0 <= v < n:
        raise IndexOutOfRangeError(f"node {v} outside graph of size {n}")
    undirected = (adjacency != 0) | (adjacency.T != 0)
    order = [v]
    seen = {v}
    frontier = [v]
    for _ in range(hop):
        nxt = sorted({int(u) for w in frontier for u in np.nonzero(undirected[w])[0]
                      if int(u) not in seen})
        order.extend(nxt)
        seen.update(nxt)
        frontier = nxt
        if not frontier:
            break
    order = order[:n_sub]
    m = len(order)
    sub_adj = np.zeros((n_sub, n_sub), dtype=np.float64)
    sub_adj[:m, :m] = adjacency[np.ix_(order, order)]
    feats = np.zeros((n_sub, features.shape[1]), dtype=np.float64)
    feats[:m] = features[order]
    return PaddedSubgraph(adjacency=sub_adj, features=feats,
                          valid_count=m, node_indices=order)


# ---------------------------------------------------------------------------
# Random-walk kernel (vec-identity form) and its gradients

def rw_kernel(sub: PaddedSubgraph, filter_feat: np.ndarray,
              filter_adj: np.ndarray, W: np.ndarray, p: int) -> float:
    return _rw_forward(sub.features, sub.adjacency, filter_feat, filter_adj, W, p)[0]


def _rw_forward(Xs: np.ndarray, As: np.ndarray, Xf: np.ndarray, Af: np.ndarray,
                W: np.ndarray, p: int) -> tuple[float, list[np.ndarray]]:
    """Kernel value plus the list [S_0 .. S_p] needed for the backward pass.

    S_0 = Xs Xf^T; S_r = As S_{r-1} Af^T; k = vec(S_0)^T W vec(S_p)."""
    if Xs.shape[1] != Xf.shape[1]:
        raise ShapeMismatchError(
            f"feature dims differ: {Xs.shape[1]} vs {Xf.shape[1]}")
    n, m = Xs.shape[0], Xf.shape[0]
    q = n * m
    diagonal = (W.ndim == 1)
    if (diagonal and W.shape[0] != q) or (not diagonal and W.shape != (q, q)):
        raise ShapeMismatchError(f"W shape {W.shape} inconsistent with q={q}")
    steps = [Xs @ Xf.T]
    for _ in range(p):
        steps.append(As @ steps[-1] @ Af.T)
    s0 = steps[0].ravel()
    sp = steps[-1].ravel()
    value = float(s0 @ (W * sp)) if diagonal else float(s0 @ (W @ sp))
    return value, steps


def _rw_backward(upstream: float, steps: list[np.ndarray], Xs: np.ndarray,
                 As: np.ndarray, Xf: np.ndarray, Af: np.ndarray,
                 W: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of upstream·k w.r.t. W, the filter tensors, and the
    subgraph features (the latter threads into the previous layer)."""
    n, m = steps[0].shape
    s0 = steps[0].ravel()
    sp = steps[-1].ravel()
    diagonal = (W.ndim == 1)
    if diagonal:
        g_w = upstream * s0 * sp
        g_s0 = upstream * (W * sp)
        g_sp = upstream * (W * s0)
    else:
        g_w = upstream * np.outer(s0, sp)
        g_s0 = upstream * (W @ sp)
        g_sp = upstream * (W.T @ s0)
    G = g_sp.reshape(n, m)
    g_af = np.zeros_like(Af)
    for r in range(len(steps) - 1, 0, -1):
        X = steps[r - 1]
        g_af += G.T @ As @ X           # d(As X Af^T)/dAf with upstream G
        G = As.T @ G @ Af              # back to S_{r-1}
    G0 = G + g_s0.reshape(n, m)
    return {
        "W": g_w,
        "filter_feat": G0.T @ Xs,
        "filter_adj": g_af,
        "sub_feat": G0 @ Xf,
    }


def explicit_kernel_oracle(sub_adj: np.ndarray, sub_feat: np.ndarray,
                           filt_adj: np.ndarray, filt_feat: np.ndarray,
                           W: np.ndarray, p: int) -> float:
    """Reference computation that materializes the Kronecker product and its
    p-th power. Used only in tests and for small sizes."""
    S = sub_feat @ filt_feat.T
    s = S.ravel()
    a_cross = np.kron(sub_adj, filt_adj)
    powered = np.linalg.matrix_power(a_cross, p)
    if W.ndim == 1:
        W = np.diag(W)
    return float(s @ W @ powered @ s)


def topg_select(scores: list[float], g: int) -> list[int]:
    """Indices of the g largest scores, ties to the smaller index, returned
    sorted ascending."""
    if not 1 <= g <= len(scores):
        raise InvalidGError(f"g={g} outside [1, {len(scores)}]")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return sorted(int(i) for i in order[:g])


# ---------------------------------------------------------------------------
# Model parameters

@dataclass
class KernelLayerParams:
    filter_feats: list[np.ndarray]    # each (n_filt, f)
    filter_adjs: list[np.ndarray]     # each (n_filt, n_filt)
    W: np.ndarray                     # (q, q) dense or (q,) diagonal
    p: int
    g: int
    hop: int
    n_sub: int
    n_filt: int

    @property
    def n_filters(self) -> int:
        return len(self.filter_feats)


@dataclass
class Model:
    layers: list[KernelLayerParams]
    W_h: np.ndarray                   # (h, D)
    b_h: np.ndarray                   # (h,)
    W_o: np.ndarray                   # (C, h)
    b_o: np.ndarray                   # (C,)
    dimension: int
    labels: list[str]
    relation_weights: dict[Relation, float]
    library_fingerprint: str = ""
    config_fingerprint: str = ""
    seed: int = 0

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        params: OrderedDict[str, np.ndarray] = OrderedDict()
        for li, layer in enumerate(self.layers):
            for fi in range(layer.n_filters):
                params[f"layer{li}.filter{fi}.feat"] = layer.filter_feats[fi]
                params[f"layer{li}.filter{fi}.adj"] = layer.filter_adjs[fi]
            params[f"layer{li}.W"] = layer.W
        params["head.W_h"] = self.W_h
        params["head.b_h"] = self.b_h
        params["head.W_o"] = self.W_o
        params["head.b_o"] = self.b_o
        return params

    def zero_grads(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, np.zeros_like(v)) for k, v in self.parameters().items())

    def assert_finite(self) -> None:
        for name, value in self.parameters().items():
            if not np.all(np.isfinite(value)):
                raise ShapeMismatchError(f"parameter {name} contains non-finite values")


def _pad_filter(feat: np.ndarray, adj: np.ndarray, n_filt: int) -> tuple[np.ndarray, np.ndarray]:
    m = min(feat.shape[0], n_filt)
    out_feat = np.zeros((n_filt, feat.shape[1]), dtype=np.float64)
    out_feat[:m] = feat[:m]
    out_adj = np.zeros((n_filt, n_filt), dtype=np.float64)
    out_adj[:m, :m] = adj[:m, :m]
    return out_feat, out_adj


def build_model(library: Optional[SchemaLibrary], cfg: RunConfig,
                labels: Optional[list[str]] = None,
                library_fingerprint: str = "") -> Model:
    """Construct the model; layer-0 filters come from schema subgraphs unless
    the random-filters ablation is set, deeper layers carry seeded random
    features over the schema adjacency."""
    labels = labels or list(cfg.label_set)
    rng = np.random.default_rng(cfg.seed)
    d = cfg.dimension if library is None else library.dimension
    n_filters = cfg.n_filters
    if library is not None:
        n_filters = min(n_filters, len(library.graph.nodes))
    if library is not None and not cfg.random_filters:
        schema_filters = extract_filters(library.graph, n_filters,
                                         hop=cfg.filter_hop, size_cap=cfg.size_cap)
        base = [_pad_filter(f.features, f.adjacency, cfg.n_filt)
                for f in schema_filters]
    else:
        base = []
        for _ in range(n_filters):
            feat = rng.normal(0.0, 0.1, size=(cfg.n_filt, d))
            adj = rng.uniform(0.0, 1.0, size=(cfg.n_filt, cfg.n_filt))
            np.fill_diagonal(adj, 0.0)
            base.append((feat, adj))

    q = cfg.n_sub * cfg.n_filt
    layers = []
    feat_dim = d
    for level in range(cfg.layers):
        if level == 0:
            feats = [f.copy() for f, _ in base]
        else:
            feats = [rng.normal(0.0, 0.1, size=(cfg.n_filt, feat_dim))
                     for _ in range(n_filters)]
        adjs = [a.copy() for _, a in base]
        W = np.ones(q, dtype=np.float64) if cfg.diagonal_w else np.eye(q)
        layers.append(KernelLayerParams(
            filter_feats=feats, filter_adjs=adjs, W=W, p=cfg.walk_length,
            g=min(cfg.top_g, n_filters), hop=cfg.subgraph_hop,
            n_sub=cfg.n_sub, n_filt=cfg.n_filt))
        feat_dim = layers[-1].g

    D = d + sum(layer.g for layer in layers)
    W_h = rng.normal(0.0, 1.0 / np.sqrt(D), size=(cfg.hidden, D))
    b_h = np.zeros(cfg.hidden, dtype=np.float64)
    W_o = rng.normal(0.0, 1.0 / np.sqrt(cfg.hidden), size=(len(labels), cfg.hidden))
    b_o = np.zeros(len(labels), dtype=np.float64)
    return Model(layers=layers, W_h=W_h, b_h=b_h, W_o=W_o, b_o=b_o,
                 dimension=d, labels=labels,
                 relation_weights=relation_weights_from_config(cfg),
                 library_fingerprint=library_fingerprint,
                 config_fingerprint=cfg.fingerprint(), seed=cfg.seed)


# ---------------------------------------------------------------------------
# Forward / backward

@dataclass
class _NodeCache:
    sub: PaddedSubgraph
    steps_per_filter: list[list[np.ndarray]]
    scores: list[float]
    selected: list[int]


@dataclass
class ForwardCache:
    layer_inputs: list[np.ndarray]       # X_0 .. X_L (layer_inputs[l] feeds layer l)
    node_caches: list[list[_NodeCache]]  # per layer, per node
    phi: np.ndarray
    pre_hidden: np.ndarray
    hidden: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    exp = np.exp(shifted)
    return exp / exp.sum()


def layer_forward(adjacency: np.ndarray, features: np.ndarray,
                  layer: KernelLayerParams) -> tuple[np.ndarray, list[_NodeCache]]:
    """Per-node kernel features: all-filter scores, top-g selection, the
    selected kernel values in filter-index order. Caches feed backward."""
    n_nodes = features.shape[0]
    out = np.zeros((n_nodes, layer.g), dtype=np.float64)
    caches: list[_NodeCache] = []
    for v in range(n_nodes):
        sub = khop_subgraph(adjacency, features, v, layer.hop, layer.n_sub)
        scores: list[float] = []
        steps_all: list[list[np.ndarray]] = []
        for fi in range(layer.n_filters):
            value, steps = _rw_forward(sub.features, sub.adjacency,
                                       layer.filter_feats[fi],
                                       layer.filter_adjs[fi],
                                       layer.W, layer.p)
            scores.append(value)
            steps_all.append(steps)
        selected = topg_select(scores, layer.g)
        out[v] = [scores[i] for i in selected]
        caches.append(_NodeCache(sub=sub, steps_per_filter=steps_all,
                                 scores=scores, selected=selected))
    return out, caches


def readout(layer_inputs: list[np.ndarray]) -> np.ndarray:
    """Concatenation over layers of summed node features (layer 0 = the raw
    embeddings)."""
    if len(layer_inputs) < 2:
        raise ShapeMismatchError("readout needs layer-0 features plus >=1 layer")
    return np.concatenate([lf.sum(axis=0) for lf in layer_inputs])


def forward(graph: FolGraph, model: Model) -> ForwardCache:
    if not graph.nodes:
        raise ShapeMismatchError("cannot run forward on an empty graph")
    X = np.stack([np.asarray(n.embedding, dtype=np.float64) for n in graph.nodes])
    if X.shape[1] != model.dimension:
        raise DimensionMismatchError(
            f"graph embedding d={X.shape[1]}, model d={model.dimension}")
    adjacency = graph_adjacency(graph, model.relation_weights)
    layer_inputs = [X]
    node_caches: list[list[_NodeCache]] = []
    for layer in model.layers:
        out, caches = layer_forward(adjacency, layer_inputs[-1], layer)
        node_caches.append(caches)
        layer_inputs.append(out)

    phi = readout(layer_inputs)
    pre_hidden = model.W_h @ phi + model.b_h
    hidden = np.maximum(pre_hidden, 0.0)
    logits = model.W_o @ hidden + model.b_o
    return ForwardCache(layer_inputs=layer_inputs, node_caches=node_caches,
                        phi=phi, pre_hidden=pre_hidden, hidden=hidden,
                        logits=logits, probabilities=softmax(logits))


def cross_entropy(probabilities: np.ndarray, gold_index: int) -> float:
    return float(-np.log(max(probabilities[gold_index], 1e-300)))


def backward(graph: FolGraph, model: Model, gold_index: int,
             cache: Optional[ForwardCache]) -> "OrderedDict[str, np.ndarray]":
    """Exact reverse-mode gradients of the cross-entropy loss. Top-g
    selection is treated as constant (gradients flow only through the
    selected filters)."""
    if cache is None:
        raise StaleCacheError("backward requires the forward cache")
    grads = model.zero_grads()
    one_hot = np.zeros_like(cache.probabilities)
    one_hot[gold_index] = 1.0
    d_logits = cache.probabilities - one_hot
    grads["head.W_o"] += np.outer(d_logits, cache.hidden)
    grads["head.b_o"] += d_logits
    d_hidden = model.W_o.T @ d_logits
    d_pre = d_hidden * (cache.pre_hidden > 0)
    grads["head.W_h"] += np.outer(d_pre, cache.phi)
    grads["head.b_h"] += d_pre
    d_phi = model.W_h.T @ d_pre

    # split readout gradient back into per-layer summed-feature segments
    segments = []
    offset = 0
    for lf in cache.layer_inputs:
        width = lf.shape[1]
        segments.append(d_phi[offset:offset + width])
        offset += width

    n_nodes = cache.layer_inputs[0].shape[0]
    # d_X starts from the readout contribution of the deepest layer and is
    # augmented with kernel contributions while walking layers top-down
    d_X = np.tile(segments[-1], (n_nodes, 1))
    for li in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[li]
        prev_width = cache.layer_inputs[li].shape[1]
        d_prev = np.tile(segments[li], (n_nodes, 1))
        for v in range(n_nodes):
            node_cache = cache.node_caches[li][v]
            sub = node_cache.sub
            for j, fi in enumerate(node_cache.selected):
                upstream = float(d_X[v, j])
                if upstream == 0.0:
                    continue
                local = _rw_backward(upstream, node_cache.steps_per_filter[fi],
                                     sub.features, sub.adjacency,
                                     layer.filter_feats[fi],
                                     layer.filter_adjs[fi], layer.W)
                grads[f"layer{li}.W"] += local["W"]
                grads[f"layer{li}.filter{fi}.feat"] += local["filter_feat"]
                grads[f"layer{li}.filter{fi}.adj"] += local["filter_adj"]
                valid = sub.valid_count
                d_prev[sub.node_indices[:valid], :] += \
                    local["sub_feat"][:valid, :prev_width]
        d_X = d_prev
    # d_X now holds the gradient w.r.t. the frozen node embeddings; discarded
    return grads


# ---------------------------------------------------------------------------
# Schema augmentation

def augment_graph(graph: FolGraph, library: SchemaLibrary) -> FolGraph:
    """Attach each predicate node to its nearest schema cluster node via an
    InstanceOf edge; schema nodes are shared per cluster. Idempotent."""
    if any(rel is Relation.INSTANCE_OF for _, _, rel in graph.edges):
        return graph
    nodes = [FolNode(predicate=n.predicate, embedding=n.embedding,
                     cluster_id=n.cluster_id, is_schema=n.is_schema)
             for n in graph.nodes]
    edges = list(graph.edges)
    by_id = {n.id: n for n in library.graph.nodes}
    schema_index: dict[int, int] = {}
    for idx, node in enumerate(list(nodes)):
        if node.is_schema or node.embedding is None:
            continue
        if np.asarray(node.embedding).shape[0] != library.dimension:
            raise DimensionMismatchError("node embedding does not match library d")
        cid = assign_to_cluster(node.embedding, library.clustering)
        node.cluster_id = cid
        if cid not in schema_index:
            schema = by_id[cid]
            schema_index[cid] = len(nodes)
            nodes.append(FolNode(
                predicate=Predicate(name=f"Schema{cid}", args=()),
                embedding=np.asarray(schema.summary_embedding, dtype=np.float64),
                cluster_id=cid, is_schema=True))
        edges.append((idx, schema_index[cid], Relation.INSTANCE_OF))
    return FolGraph(nodes=nodes, edges=edges)


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(model: Model, path: str) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "dimension": model.dimension,
        "labels": model.labels,
        "relation_weights": {r.value: w for r, w in model.relation_weights.items()},
        "library_fingerprint": model.library_fingerprint,
        "config_fingerprint": model.config_fingerprint,
        "seed": model.seed,
        "head": {
            "W_h": model.W_h.tolist(), "b_h": model.b_h.tolist(),
            "W_o": model.W_o.tolist(), "b_o": model.b_o.tolist(),
        },
        "layers": [
            {
                "p": layer.p, "g": layer.g, "hop": layer.hop,
                "n_sub": layer.n_sub, "n_filt": layer.n_filt,
                "diagonal_w": layer.W.ndim == 1,
                "W": layer.W.tolist(),
                "filters": [
                    {"feat": layer.filter_feats[i].tolist(),
                     "adj": layer.filter_adjs[i].tolist()}
                    for i in range(layer.n_filters)
                ],
            }
            for layer in model.layers
        ],
    }
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, ensure_ascii=False, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str, library_fingerprint: Optional[str] = None,
                    force: bool = False) -> Model:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise SchemaFormatError(
            f"checkpoint version {doc.get('version')} != {CHECKPOINT_VERSION}",
            field="version")
    if (library_fingerprint is not None and not force
            and doc.get("library_fingerprint")
            and doc["library_fingerprint"] != library_fingerprint):
        raise FingerprintMismatchError(
            f"checkpoint was trained against library {doc['library_fingerprint']}, "
            f"got {library_fingerprint} (use --force to override)")
    layers = []
    for ld in doc["layers"]:
        layers.append(KernelLayerParams(
            filter_feats=[np.asarray(f["feat"], dtype=np.float64) for f in ld["filters"]],
            filter_adjs=[np.asarray(f["adj"], dtype=np.float64) for f in ld["filters"]],
            W=np.asarray(ld["W"], dtype=np.float64),
            p=ld["p"], g=ld["g"], hop=ld["hop"],
            n_sub=ld["n_sub"], n_filt=ld["n_filt"]))
    head = doc["head"]
    return Model(
        layers=layers,
        W_h=np.asarray(head["W_h"], dtype=np.float64),
        b_h=np.asarray(head["b_h"], dtype=np.float64),
        W_o=np.asarray(head["W_o"], dtype=np.float64),
        b_o=np.asarray(head["b_o"], dtype=np.float64),
        dimension=doc["dimension"], labels=list(doc["labels"]),
        relation_weights={Relation(k): float(v)
                          for k, v in doc["relation_weights"].items()},
        library_fingerprint=doc.get("library_fingerprint", ""),
        config_fingerprint=doc.get("config_fingerprint", ""),
        seed=doc.get("seed", 0))


def clone_model(model: Model) -> Model:
    return copy.deepcopy(model)
