"""Unimodal encoders: biased graph transformer, text transformer, netlist GNN."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cdfg import CdfGraph, EDGE_TYPE_INDEX, OP_INDEX, OP_VOCAB
from .layers import Embedding, LayerNorm, Linear, ParamStore, TransformerLayer


@dataclass
class EncoderParams:
    d_model: int = 128
    graph_layers: int = 2
    summary_layers: int = 2
    code_layers: int = 2
    fusion_layers: int = 2
    heads: int = 4
    ff_mult: int = 4
    max_degree: int = 256     # in/out-degree clipping for centrality encoding
    max_spatial: int = 5      # shortest-path clip; +1 unreachable, +2 virtual
    edge_dim: int = 12
    dropout: float = 0.0
    netlist_layers: int = 3
    netlist_hidden: int = 64
    mgm_hidden: int = 64
    max_summary_len: int = 128
    max_code_len: int = 1024

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")

    @property
    def unreachable_bucket(self) -> int:
        return self.max_spatial + 1

    @property
    def virtual_bucket(self) -> int:
        return self.max_spatial + 2

    @property
    def spatial_buckets(self) -> int:
        return self.max_spatial + 3


@dataclass
class EmbeddingSeq:
    """[CLS]-prefixed sequence of d_model vectors with a validity mask."""

    vectors: Tensor           # (L, d_model)
    mask: np.ndarray          # (L,) bool, True = valid

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def cls(self) -> Tensor:
        return self.vectors[0]


@dataclass
class NetlistEmbedding:
    node_vectors: Tensor      # (w, d_model)
    pooled: Tensor            # (d_model,), arithmetic mean of node_vectors


def spatial_encoding(graph: CdfGraph, max_spatial: int = 5) -> np.ndarray:
    """All-pairs undirected shortest-path buckets in node list order, clipped
    to max_spatial; unreachable pairs get the sentinel bucket max_spatial+1."""
    n = len(graph.nodes)
    pos = {node.id: i for i, node in enumerate(graph.nodes)}
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in graph.edges:
        a, b = pos[e.src], pos[e.dst]
        adj[a].append(b)
        adj[b].append(a)
    sentinel = max_spatial + 1
    out = np.full((n, n), sentinel, dtype=np.int64)
    for s in range(n):
        out[s, s] = 0
        dist = {s: 0}
        q = deque([s])
        while q:
            u = q.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    out[s, v] = min(dist[v], max_spatial)
                    q.append(v)
    return out


def _op_indices(graph: CdfGraph, masked_ids=frozenset()) -> np.ndarray:
    return np.asarray(
        [OP_INDEX["MASK"] if n.id in masked_ids else OP_INDEX[n.op]
         for n in graph.nodes], dtype=np.int64)


class GraphEncoder:
    """Graph transformer with degree centrality features and attention biased
    by spatial-distance buckets plus per-edge-type terms."""

    def __init__(self, store: ParamStore, prefix: str, p: EncoderParams):
        self.p = p
        d = p.d_model
        self.op_emb = Embedding(store, f"{prefix}.op_emb", len(OP_VOCAB), d)
        self.in_deg = Embedding(store, f"{prefix}.in_deg", p.max_degree + 1, d)
        self.out_deg = Embedding(store, f"{prefix}.out_deg", p.max_degree + 1, d)
        self.graph_token = store.param(f"{prefix}.graph_token", (1, d), init="embedding")
        self.spatial_bias = store.param(
            f"{prefix}.spatial_bias", (p.spatial_buckets, p.heads), init="embedding")
        self.edge_bias = store.param(
            f"{prefix}.edge_bias", (p.edge_dim, p.heads), init="embedding")
        self.layers = [
            TransformerLayer(store, f"{prefix}.layer{i}", d, p.heads, d * p.ff_mult)
            for i in range(p.graph_layers)
        ]
        self.ln_f = LayerNorm(store, f"{prefix}.ln_f", d)

    def _attention_bias(self, graph: CdfGraph) -> Tensor:
        p = self.p
        n = len(graph.nodes)
        dist = spatial_encoding(graph, p.max_spatial)
        full = np.full((n + 1, n + 1), p.virtual_bucket, dtype=np.int64)
        full[1:, 1:] = dist
        full[0, 0] = 0
        bias = ad.take_rows(self.spatial_bias, full)          # (n+1, n+1, heads)
        pos = {node.id: i + 1 for i, node in enumerate(graph.nodes)}
        eidx = np.zeros((n + 1, n + 1), dtype=np.int64)
        present = np.zeros((n + 1, n + 1), dtype=np.float64)
        for e in graph.edges:
            s, t = pos[e.src], pos[e.dst]
            k = EDGE_TYPE_INDEX[e.etype]
            # additive bias after the spatial term, both directions
            eidx[t, s] = k
            present[t, s] = 1.0
            eidx[s, t] = k
            present[s, t] = 1.0
        ebias = ad.take_rows(self.edge_bias, eidx) * present[:, :, None]
        return (bias + ebias).transpose(2, 0, 1)              # (heads, L, L)

    def __call__(self, graph: CdfGraph, masked_ids=frozenset()) -> EmbeddingSeq:
        p = self.p
        ops = _op_indices(graph, masked_ids)
        indeg = np.asarray([min(len(graph.in_edges(n.id)), p.max_degree)
                            for n in graph.nodes], dtype=np.int64)
        outdeg = np.asarray([min(len(graph.out_edges(n.id)), p.max_degree)
                             for n in graph.nodes], dtype=np.int64)
        x = self.op_emb(ops) + self.in_deg(indeg) + self.out_deg(outdeg)
        x = ad.concatenate([self.graph_token, x], axis=0)
        bias = self._attention_bias(graph)
        for layer in self.layers:
            x = layer(x, self_bias=bias)
        x = self.ln_f(x)
        return EmbeddingSeq(x, np.ones(len(graph.nodes) + 1, dtype=bool))


class TextEncoder:
    """Transformer over token ids with learned positions and padding mask."""

    def __init__(self, store: ParamStore, prefix: str, p: EncoderParams,
                 vocab_size: int, layers: int, max_len: int):
        d = p.d_model
        self.tok_emb = Embedding(store, f"{prefix}.tok_emb", vocab_size, d)
        self.pos_emb = Embedding(store, f"{prefix}.pos_emb", max_len, d)
        self.layers = [
            TransformerLayer(store, f"{prefix}.layer{i}", d, p.heads, d * p.ff_mult)
            for i in range(layers)
        ]
        self.ln_f = LayerNorm(store, f"{prefix}.ln_f", d)
        self.max_len = max_len

    def __call__(self, token_ids, valid: np.ndarray | None = None) -> EmbeddingSeq:
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim != 1 or ids.size < 1:
            raise ValueError("token ids must be a non-empty 1-D sequence")
        if ids.size > self.max_len:
            raise ValueError(f"sequence of {ids.size} exceeds max_len {self.max_len}")
        if valid is None:
            valid = np.ones(ids.size, dtype=bool)
        x = self.tok_emb(ids) + self.pos_emb(np.arange(ids.size))
        for layer in self.layers:
            x = layer(x, self_valid=valid)
        x = self.ln_f(x)
        return EmbeddingSeq(x, np.asarray(valid, dtype=bool))


class NetlistEncoder:
    """Mean-neighborhood aggregation GNN; pooled output is the mean of the
    projected node vectors."""

    def __init__(self, store: ParamStore, prefix: str, p: EncoderParams):
        h = p.netlist_hidden
        self.p = p
        self.op_emb = Embedding(store, f"{prefix}.op_emb", len(OP_VOCAB), h)
        self.self_w = [Linear(store, f"{prefix}.self{i}", h, h)
                       for i in range(p.netlist_layers)]
        self.neigh_w = [Linear(store, f"{prefix}.neigh{i}", h, h)
                        for i in range(p.netlist_layers)]
        self.proj = Linear(store, f"{prefix}.proj", h, p.d_model)

    def __call__(self, graph: CdfGraph, masked_ids=frozenset()) -> NetlistEmbedding:
        ops = _op_indices(graph, masked_ids)
        h = self.op_emb(ops)
        n = len(graph.nodes)
        pos = {node.id: i for i, node in enumerate(graph.nodes)}
        mean_adj = np.zeros((n, n), dtype=np.float64)
        for e in graph.edges:
            a, b = pos[e.src], pos[e.dst]
            mean_adj[a, b] = 1.0
            mean_adj[b, a] = 1.0
        deg = mean_adj.sum(axis=1, keepdims=True)
        mean_adj = mean_adj / np.maximum(deg, 1.0)
        for self_w, neigh_w in zip(self.self_w, self.neigh_w):
            neigh = ad.matmul(Tensor(mean_adj), h)
            h = ad.gelu(self_w(h) + neigh_w(neigh))
        node_vectors = self.proj(h)
        pooled = node_vectors.mean(axis=0)
        return NetlistEmbedding(node_vectors, pooled)
