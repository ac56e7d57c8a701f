"""GATv2 encoders with edge-label features for theme and video graphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .video_graph import EDGE_RELATIONS, VideoGraph

SELF_LOOP = "selfLoop"
COOCCUR = "cooccur"
EDGE_LABELS = (SELF_LOOP, COOCCUR) + EDGE_RELATIONS
EDGE_LABEL_INDEX = {name: i for i, name in enumerate(EDGE_LABELS)}


class GATv2Layer(nn.Module):
    """Multi-head GATv2 attention where each edge also contributes ``W_e e_uv``.

    score(u -> v) = a . leaky_relu(W_s h_u + W_t h_v + W_e e_uv), normalised over
    the in-neighbourhood of v (including its self-loop). Messages are ``W_s h_u``.
    """

    def __init__(self, in_dim, out_dim, heads=4, edge_dim=None, negative_slope=0.2,
                 add_self_loops=True, bias=True):
        super().__init__()
        if out_dim % heads:
            raise ValueError(f"out_dim={out_dim} not divisible by heads={heads}")
        self.heads, self.out_dim, self.head_dim = heads, out_dim, out_dim // heads
        self.negative_slope = negative_slope
        self.add_self_loops = add_self_loops
        edge_dim = edge_dim or in_dim
        self.lin_src = nn.Linear(in_dim, out_dim, bias=False)
        self.lin_dst = nn.Linear(in_dim, out_dim, bias=False)
        self.lin_edge = nn.Linear(edge_dim, out_dim, bias=False)
        self.att = nn.Parameter(torch.empty(heads, self.head_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim)) if bias else None
        nn.init.xavier_uniform_(self.att)

    def forward(self, x, edge_index, edge_attr, self_loop_attr=None, return_attention=False):
        """x: (n, in), edge_index: (2, E) as [src; dst], edge_attr: (E, edge_dim)."""
        n = x.shape[0]
        src, dst = edge_index[0], edge_index[1]
        if self.add_self_loops:
            loops = torch.arange(n, device=x.device)
            src, dst = torch.cat([src, loops]), torch.cat([dst, loops])
            if self_loop_attr is None:
                self_loop_attr = x.new_zeros(edge_attr.shape[1])
            edge_attr = torch.cat([edge_attr, self_loop_attr.expand(n, -1)], 0)
        elif n and torch.unique(dst).numel() < n:
            raise ValueError("node without incoming edges and self-loops disabled")
        h, c = self.heads, self.head_dim
        xs = self.lin_src(x).view(n, h, c)
        xt = self.lin_dst(x).view(n, h, c)
        ee = self.lin_edge(edge_attr).view(-1, h, c)
        z = F.leaky_relu(xs[src] + xt[dst] + ee, self.negative_slope)
        score = (z * self.att).sum(-1)  # (E, h)
        idx = dst.unsqueeze(-1).expand_as(score)
        smax = torch.full((n, h), float("-inf"), dtype=score.dtype, device=x.device)
        smax = smax.scatter_reduce(0, idx, score.detach(), reduce="amax", include_self=True)
        ex = torch.exp(score - smax[dst])
        denom = torch.zeros((n, h), dtype=score.dtype, device=x.device).index_add(0, dst, ex)
        alpha = ex / denom[dst]
        out = torch.zeros((n, h, c), dtype=x.dtype, device=x.device)
        out = out.index_add(0, dst, alpha.unsqueeze(-1) * xs[src]).reshape(n, h * c)
        if self.bias is not None:
            out = out + self.bias
        if return_attention:
            return out, (torch.stack([src, dst]), alpha)
        return out


@dataclass
class GraphTensors:
    features: torch.Tensor  # (n, feat_dim)
    edge_index: torch.Tensor  # (2, E)
    edge_label: torch.Tensor  # (E,)
    edge_weight: torch.Tensor  # (E,)


@dataclass
class NodeEmbeddings:
    matrix: torch.Tensor
    node_ids: list

    def __len__(self):
        return len(self.node_ids)


def video_graph_tensors(g: VideoGraph, dtype=torch.float32) -> GraphTensors:
    seen, rows = set(), []
    for e in g.edges:
        key = (e.src, e.dst, e.relation)
        if key not in seen:
            seen.add(key)
            rows.append(key)
    ei = torch.tensor([[s for s, _, _ in rows], [d for _, d, _ in rows]], dtype=torch.long).view(2, -1)
    lab = torch.tensor([EDGE_LABEL_INDEX[r] for _, _, r in rows], dtype=torch.long)
    feats = torch.as_tensor(np.stack([n.feature for n in g.nodes]), dtype=dtype)
    return GraphTensors(feats, ei, lab, torch.ones(len(rows), dtype=dtype))


def theme_graph_tensors(g, dtype=torch.float32) -> GraphTensors:
    """Undirected NPMI edges become two directed edges carrying the weight."""
    src, dst, w = [], [], []
    for i, j, wt in g.edges:
        src += [i, j]
        dst += [j, i]
        w += [wt, wt]
    ei = torch.tensor([src, dst], dtype=torch.long).view(2, -1)
    lab = torch.full((len(src),), EDGE_LABEL_INDEX[COOCCUR], dtype=torch.long)
    feats = torch.as_tensor(np.asarray(g.features), dtype=dtype)
    return GraphTensors(feats, ei, lab, torch.tensor(w, dtype=dtype))


class GraphEncoder(nn.Module):
    """Stack of GATv2 layers followed by a projection into the model width."""

    def __init__(self, in_dim, hidden, n_layers=1, heads=4, edge_dim=None):
        super().__init__()
        edge_dim = edge_dim or in_dim
        self.edge_embedding = nn.Embedding(len(EDGE_LABELS), edge_dim)
        dims = [in_dim] + [hidden] * n_layers
        self.layers = nn.ModuleList(
            GATv2Layer(dims[i], dims[i + 1], heads, edge_dim=edge_dim) for i in range(n_layers))
        self.proj = nn.Linear(hidden, hidden)

    def forward(self, gt: GraphTensors) -> torch.Tensor:
        if gt.features.shape[0] == 0:
            raise ValueError("cannot encode an empty graph")
        dtype = self.proj.weight.dtype
        x = gt.features.to(dtype)
        edge_attr = self.edge_embedding(gt.edge_label) * gt.edge_weight.to(dtype).unsqueeze(-1)
        loop_attr = self.edge_embedding.weight[EDGE_LABEL_INDEX[SELF_LOOP]]
        for i, layer in enumerate(self.layers):
            x = layer(x, gt.edge_index, edge_attr, loop_attr)
            if i < len(self.layers) - 1:
                x = F.elu(x)
        return self.proj(x)


def encode_theme_graph(encoder: GraphEncoder, g) -> NodeEmbeddings:
    dtype = encoder.proj.weight.dtype
    return NodeEmbeddings(encoder(theme_graph_tensors(g, dtype)), list(range(len(g.nodes))))


def encode_video_graph(encoder: GraphEncoder, g: VideoGraph) -> NodeEmbeddings:
    dtype = encoder.proj.weight.dtype
    return NodeEmbeddings(encoder(video_graph_tensors(g, dtype)), [n.id for n in g.nodes])


def extract_timestep_nodes(emb: NodeEmbeddings, g: VideoGraph, t: int) -> NodeEmbeddings:
    if not 0 <= t < g.n_events:
        raise IndexError(f"timestep {t} outside [0, {g.n_events})")
    rows = [i for i, nid in enumerate(emb.node_ids) if g.nodes[nid].timestep == t]
    index = torch.tensor(rows, dtype=torch.long)
    return NodeEmbeddings(emb.matrix.index_select(0, index), [emb.node_ids[i] for i in rows])
