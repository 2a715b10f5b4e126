"""Attentional message passing over the entity/relation-node graph.

Each document becomes a bipartite graph: one node per entity, one node per
ordered entity pair (the relation cells), with edges linking every pair node
to its two argument entities. Layers update all nodes simultaneously:

    h'_u = FFN(W_o @ sum_v alpha_{u,v} h_v)   over v in N(u)

where the attention logit for center u and neighbor v is (W_q h_v) . (W_k h_u):
the query projects the neighbor and the key projects the center. That
placement is deliberate and kept literal; ``swap_qk=True`` selects the
conventional orientation for comparison. There is no value projection, no
residual path, no normalization and no logit scaling inside the graph layers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Document, relation_pairs
from .numerics import (
    Tensor,
    concat,
    dropout,
    embedding_lookup,
    matmul,
    relu,
    reshape,
    softmax,
    transpose,
    xavier_uniform,
    zeros,
)

NEG_INF = -1e30


@dataclass(frozen=True)
class RelGraph:
    """Entities 0..M-1 first, then pair nodes in row-major (i, j) order."""

    m: int
    include_diagonal: bool
    pairs: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...]

    @property
    def n_nodes(self) -> int:
        return self.m + len(self.pairs)

    def pair_node(self, i: int, j: int) -> int:
        return self.m + self.pairs.index((i, j))


def build_graph(doc: "Document | int", include_diagonal: bool = False) -> RelGraph:
    m = doc if isinstance(doc, int) else doc.m
    pairs = tuple(relation_pairs(m, include_diagonal))
    neighbors: list[list[int]] = [[] for _ in range(m + len(pairs))]
    for n, (i, j) in enumerate(pairs):
        node = m + n
        ends = {i, j}  # a self-pair (i, i) has degree 1
        for e in sorted(ends):
            neighbors[node].append(e)
            neighbors[e].append(node)
    return RelGraph(m=m, include_diagonal=include_diagonal, pairs=pairs,
                    neighbors=tuple(tuple(ns) for ns in neighbors))


def adjacency_bias(graph: RelGraph) -> np.ndarray:
    """(N, N) additive attention bias: 0 on edges, a large negative
    constant elsewhere (including the diagonal: nodes are not their own
    neighbors)."""
    n = graph.n_nodes
    bias = np.full((n, n), NEG_INF)
    for u, ns in enumerate(graph.neighbors):
        for v in ns:
            bias[u, v] = 0.0
    return bias


def init_gnn_params(dim: int, n_layers: int, ffn_hidden: int,
                    rng: np.random.Generator) -> dict[str, Tensor]:
    params: dict[str, Tensor] = {}
    for l in range(n_layers):
        p = f"gnn.layer{l}."
        params[p + "wq"] = xavier_uniform((dim, dim), rng)
        params[p + "wk"] = xavier_uniform((dim, dim), rng)
        params[p + "wo"] = xavier_uniform((dim, dim), rng)
        params[p + "ffn1"] = xavier_uniform((dim, ffn_hidden), rng)
        params[p + "ffn1_b"] = zeros((ffn_hidden,))
        params[p + "ffn2"] = xavier_uniform((ffn_hidden, dim), rng)
        params[p + "ffn2_b"] = zeros((dim,))
    return params


def _head_slices(dim: int, n_heads: int) -> list[slice]:
    if dim % n_heads:
        raise ValueError(f"dim {dim} not divisible by {n_heads} heads")
    w = dim // n_heads
    return [slice(h * w, (h + 1) * w) for h in range(n_heads)]


def gnn_attention(h: Tensor, graph: RelGraph, wq: Tensor, wk: Tensor,
                  n_heads: int = 1, swap_qk: bool = False) -> list[np.ndarray]:
    """Per-head (N, N) attention weights, row u giving u's weights over its
    neighborhood; diagnostic counterpart of the layer's internal softmax."""
    q_full = (h @ wq).data
    k_full = (h @ wk).data
    if swap_qk:
        q_full, k_full = k_full, q_full
    bias = adjacency_bias(graph)
    out = []
    for sl in _head_slices(h.shape[1], n_heads):
        scores = k_full[:, sl] @ q_full[:, sl].T + bias
        scores -= scores.max(axis=1, keepdims=True)
        e = np.exp(scores)
        weights = e / e.sum(axis=1, keepdims=True)
        isolated = np.array([len(ns) == 0 for ns in graph.neighbors])
        weights[isolated] = 0.0
        out.append(weights)
    return out


def gnn_layer(h: Tensor, graph: RelGraph, params: dict[str, Tensor], layer: int,
              n_heads: int = 1, swap_qk: bool = False,
              dropout_p: float = 0.0, train: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
    """One simultaneous update of every node state from layer-l values."""
    prefix = f"gnn.layer{layer}."
    wq, wk = params[prefix + "wq"], params[prefix + "wk"]
    if swap_qk:
        wq, wk = wk, wq
    q_full = h @ wq
    k_full = h @ wk
    bias = Tensor(adjacency_bias(graph))
    head_outs = []
    for sl in _head_slices(h.shape[1], n_heads):
        key = (slice(None), sl)
        scores = k_full[key] @ transpose(q_full[key]) + bias
        alpha = softmax(scores, axis=1)
        if dropout_p > 0:
            alpha = dropout(alpha, dropout_p, train, rng)
        head_outs.append(alpha @ h[key])
    msg = concat(head_outs, axis=1) if len(head_outs) > 1 else head_outs[0]
    agg = msg @ params[prefix + "wo"]
    hidden = relu(agg @ params[prefix + "ffn1"] + params[prefix + "ffn1_b"])
    out = hidden @ params[prefix + "ffn2"] + params[prefix + "ffn2_b"]
    if dropout_p > 0:
        out = dropout(out, dropout_p, train, rng)
    isolated = np.array([len(ns) == 0 for ns in graph.neighbors], dtype=float)[:, None]
    if isolated.any():
        out = out * Tensor(1.0 - isolated) + h * Tensor(isolated)
    return out


def run_biror(graph: RelGraph, ents: Tensor, rels: Tensor,
              params: dict[str, Tensor], n_layers: int, n_heads: int = 1,
              swap_qk: bool = False, dropout_p: float = 0.0,
              train: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
    """Message passing over the document graph; returns the relation-node
    states as an M x M x d tensor (cells without a node stay zero)."""
    m = graph.m
    d = ents.shape[1]
    if rels.shape != (m, m, d):
        raise ValueError(f"relation tensor {rels.shape} does not match M={m}, d={d}")
    if n_layers == 0:
        return rels
    flat = reshape(rels, (m * m, d))
    cell_ids = np.array([i * m + j for i, j in graph.pairs], dtype=np.int64)
    h = concat([ents, embedding_lookup(flat, cell_ids)], axis=0)
    for l in range(n_layers):
        h = gnn_layer(h, graph, params, l, n_heads=n_heads, swap_qk=swap_qk,
                      dropout_p=dropout_p, train=train, rng=rng)
    rel_states = h[(slice(m, graph.n_nodes), slice(None))]
    # scatter pair-node states back into the full matrix
    select = np.zeros((m * m, len(graph.pairs)))
    for n, cid in enumerate(cell_ids):
        select[cid, n] = 1.0
    out_flat = matmul(Tensor(select), rel_states)
    return reshape(out_flat, (m, m, d))
