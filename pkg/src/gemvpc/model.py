"""Dual-stream recurrent transformer for paragraph captioning over graphs.

A visual stream reads ``[CLS] + visual frames + caption`` and a node stream reads
``selected graph nodes + caption``. Each stream carries its own recurrent
memory across the events of a video (MART gating, TinT stacking, or none).
The streams exchange information by cross-attention before the word head.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import torch
import torch.nn.functional as F
from torch import nn

from .graph_encoder import (GraphEncoder, NodeEmbeddings, encode_theme_graph, encode_video_graph,
                            theme_graph_tensors, video_graph_tensors)
from .video_graph import NodeType

RECURRENCE_MODES = ("none", "mart", "tint")
TYPE_CLS, TYPE_VISUAL, TYPE_CAPTION, TYPE_THEME = 0, 1, 2, 3
TYPE_VG_BASE = 4  # + NodeType value


def vg_token_type(node_type: NodeType) -> int:
    return TYPE_VG_BASE + int(node_type)


@dataclass
class ModelConfig:
    vocab_size: int
    visual_dim: int
    node_feat_dim: int = 64
    hidden: int = 768
    intermediate: int = 768
    layers: int = 2
    heads: int = 12
    token_type_count: int = 10
    word_dim: int = 300
    max_visual_tokens: int = 100
    max_caption_len: int = 30
    recurrence: str = "mart"
    memory_len: int = 1
    top_n_tg: int = 10
    top_n_vg: int = 10
    tg_gat_layers: int = 2
    vg_gat_layers: int = 1
    gat_heads: int = 4
    use_graph: bool = True
    node_score_reading: str = "text"
    dropout: float = 0.1
    layer_norm_eps: float = 1e-12

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ValueError(f"hidden={self.hidden} not divisible by heads={self.heads}")
        if self.hidden % self.gat_heads:
            raise ValueError(f"hidden={self.hidden} not divisible by gat_heads={self.gat_heads}")
        if min(self.top_n_tg, self.top_n_vg) < 1:
            raise ValueError("top_n must be >= 1")
        if self.recurrence not in RECURRENCE_MODES:
            raise ValueError(f"recurrence must be one of {RECURRENCE_MODES}")
        if self.node_score_reading not in ("text", "typeset"):
            raise ValueError("node_score_reading must be 'text' or 'typeset'")
        if self.token_type_count < TYPE_VG_BASE + len(NodeType):
            raise ValueError("token_type_count too small for the node types")

    to_dict = asdict


# --------------------------------------------------------------------------- attention

class MultiHeadAttention(nn.Module):
    """softmax(Q K^T / sqrt(d_k) + M) V per head, concatenated and projected."""

    def __init__(self, hidden, heads, dropout=0.0):
        super().__init__()
        self.heads, self.head_dim = heads, hidden // heads
        self.query = nn.Linear(hidden, hidden)
        self.key = nn.Linear(hidden, hidden)
        self.value = nn.Linear(hidden, hidden)
        self.output = nn.Linear(hidden, hidden)
        self.dropout = nn.Dropout(dropout)

    def _split(self, x):
        return x.view(*x.shape[:-1], self.heads, self.head_dim).transpose(-3, -2)

    def forward(self, query, key, value, mask=None, return_attention=False):
        """query: (..., Lq, d); key/value: (..., Lk, d); mask: bool (Lq, Lk), True = visible."""
        q, k, v = self._split(self.query(query)), self._split(self.key(key)), self._split(self.value(value))
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if mask is not None:
            if not bool(mask.any(-1).all()):
                raise ValueError("attention mask hides every key from some query")
            scores = scores.masked_fill(~mask, float("-inf"))
        probs = torch.softmax(scores, dim=-1)
        ctx = (self.dropout(probs) @ v).transpose(-3, -2)
        out = self.output(ctx.reshape(*ctx.shape[:-2], -1))
        return (out, probs) if return_attention else out


def masked_mha(x, attn: MultiHeadAttention, mask, return_attention=False):
    return attn(x, x, x, mask, return_attention=return_attention)


def stream_mask(prefix_len: int, caption_len: int, device=None) -> torch.Tensor:
    """Prefix sees itself; caption position i sees the prefix and captions <= i."""
    n = prefix_len + caption_len
    mask = torch.zeros(n, n, dtype=torch.bool, device=device)
    mask[:, :prefix_len] = True
    mask[prefix_len:, prefix_len:] = torch.ones(caption_len, caption_len, dtype=torch.bool,
                                                device=device).tril()
    return mask


def cross_mask(q_prefix: int, k_prefix: int, caption_len: int, device=None) -> torch.Tensor:
    """Mask between two streams that share the same caption positions."""
    mask = torch.zeros(q_prefix + caption_len, k_prefix + caption_len, dtype=torch.bool, device=device)
    mask[:, :k_prefix] = True
    mask[q_prefix:, k_prefix:] = torch.ones(caption_len, caption_len, dtype=torch.bool,
                                            device=device).tril()
    return mask


# --------------------------------------------------------------------------- node selection

class NodeSelector(nn.Module):
    def __init__(self, hidden, reading="text"):
        super().__init__()
        self.w_h = nn.Linear(hidden, hidden, bias=False)
        self.w_c = nn.Linear(hidden, hidden, bias=False)
        self.reading = reading

    def scores(self, h_cls, nodes):
        if self.reading == "typeset":
            return self.w_c(nodes) @ torch.softmax(self.w_h(h_cls), -1)
        return torch.softmax(self.w_c(nodes) @ self.w_h(h_cls), -1)


def select_nodes(h_cls, node_embs, selector: NodeSelector, n: int):
    """Top-``n`` node indices by probability (ties to the lower index) and all probabilities."""
    if node_embs.shape[0] == 0:
        raise ValueError("empty node set")
    if n < 1:
        raise ValueError("n must be >= 1")
    probs = selector.scores(h_cls, node_embs)
    k = min(n, probs.shape[0])
    # stable sort keeps the lower index first among equal probabilities
    order = torch.sort(probs.detach(), descending=True, stable=True).indices
    return order[:k], probs


def weight_selected(node_embs, idx, probs):
    """Selected rows scaled by their probability renormalised over the selection (mean weight 1).

    Keeps the selector on the gradient path while the top-n choice itself stays discrete.
    """
    p = probs[idx]
    return node_embs[idx] * (len(idx) * p / p.sum()).unsqueeze(-1)


# --------------------------------------------------------------------------- recurrence

class MartMemory(nn.Module):
    """Gated memory: S = MHA(M, H, H); C = tanh(.); Z = sigmoid(.); M' = (1-Z)C + ZM."""

    def __init__(self, hidden, heads, memory_len=1, dropout=0.0):
        super().__init__()
        self.update_attention = MultiHeadAttention(hidden, heads, dropout)
        self.augmented_attention = MultiHeadAttention(hidden, heads, dropout)
        self.w_mc = nn.Linear(hidden, hidden, bias=False)
        self.w_sc = nn.Linear(hidden, hidden, bias=True)  # bias = b_c
        self.w_mz = nn.Linear(hidden, hidden, bias=False)
        self.w_sz = nn.Linear(hidden, hidden, bias=True)  # bias = b_z
        self.init_bias = nn.Parameter(torch.randn(memory_len, 1) * 0.02)
        self.init_fc = nn.Linear(hidden, hidden)
        self.memory_len = memory_len

    def initial(self, h_prefix):
        pooled = h_prefix.mean(0, keepdim=True).expand(self.memory_len, -1)
        return torch.tanh(self.init_fc(pooled + self.init_bias))

    def gate(self, m_prev, s):
        c = torch.tanh(self.w_mc(m_prev) + self.w_sc(s))
        z = torch.sigmoid(self.w_mz(m_prev) + self.w_sz(s))
        return c, z, (1 - z) * c + z * m_prev


def mart_memory_update(m_prev, h_bar, params: MartMemory, mask=None):
    """Returns ``(H_out, M_new)``.

    ``H_out`` attends from every position of ``h_bar`` over ``[M_prev; h_bar]``
    (memory always visible, ``mask`` applied to the ``h_bar`` part).
    """
    s = params.update_attention(m_prev, h_bar, h_bar)
    _, _, m_new = params.gate(m_prev, s)
    kv = torch.cat([m_prev, h_bar], 0)
    if mask is not None:
        mask = torch.cat([mask.new_ones(mask.shape[0], m_prev.shape[0]), mask], 1)
    h_out = params.augmented_attention(h_bar, kv, kv, mask)
    return h_out, m_new


class TintMemory(nn.Module):
    def __init__(self, hidden, heads, intermediate, dropout=0.0):
        super().__init__()
        self.ham = MultiHeadAttention(hidden, heads, dropout)
        self.slot_attention = MultiHeadAttention(hidden, heads, dropout)
        self.mlp = nn.Sequential(nn.Linear(hidden, intermediate), nn.GELU(), nn.Linear(intermediate, hidden))


def tint_memory_update(stack: list, h_bar, params: TintMemory):
    """Returns ``(H_out, stack + [h_bar])``.

    Z attends from ``h_bar`` over all earlier slices (Z = h_bar when there are
    none); each position then self-attends over its pair ``[h_bar_i; Z_i]``,
    the pair is mean-reduced and passed through the MLP with a residual.
    """
    if stack:
        mem = torch.cat(stack, 0)
        z = params.ham(h_bar, mem, mem)
    else:
        z = h_bar
    pair = torch.stack([h_bar, z], dim=-2)  # (L, 2, d)
    mixed = params.slot_attention(pair, pair, pair).mean(-2)
    return params.mlp(mixed) + h_bar, stack + [h_bar]


# --------------------------------------------------------------------------- streams

class FeedForward(nn.Module):
    def __init__(self, hidden, intermediate, dropout, eps):
        super().__init__()
        self.fc1, self.fc2 = nn.Linear(hidden, intermediate), nn.Linear(intermediate, hidden)
        self.norm, self.dropout = nn.LayerNorm(hidden, eps=eps), nn.Dropout(dropout)

    def forward(self, x):
        return self.norm(x + self.dropout(self.fc2(F.gelu(self.fc1(x)))))


class RecurrentLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        h, eps = cfg.hidden, cfg.layer_norm_eps
        self.recurrence = cfg.recurrence
        self.self_attention = MultiHeadAttention(h, cfg.heads, cfg.dropout)
        self.attn_norm = nn.LayerNorm(h, eps=eps)
        self.dropout = nn.Dropout(cfg.dropout)
        if cfg.recurrence == "mart":
            self.memory = MartMemory(h, cfg.heads, cfg.memory_len, cfg.dropout)
            self.memory_norm = nn.LayerNorm(h, eps=eps)
        elif cfg.recurrence == "tint":
            self.memory = TintMemory(h, cfg.heads, cfg.intermediate, cfg.dropout)
        self.ffn = FeedForward(h, cfg.intermediate, cfg.dropout, eps)

    def forward(self, x, mask, prefix_len, memory):
        h_bar = self.attn_norm(x + self.dropout(masked_mha(x, self.self_attention, mask)))
        if self.recurrence == "mart":
            m_prev = memory if memory is not None else self.memory.initial(h_bar[:prefix_len])
            h_mem, memory = mart_memory_update(m_prev, h_bar, self.memory, mask)
            h = self.memory_norm(h_bar + self.dropout(h_mem))
        elif self.recurrence == "tint":
            h, memory = tint_memory_update(memory or [], h_bar, self.memory)
        else:
            h = h_bar
        return self.ffn(h), memory


class Stream(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.layers = nn.ModuleList(RecurrentLayer(cfg) for _ in range(cfg.layers))

    def forward(self, x, prefix_len, memory: Optional[list]):
        mask = stream_mask(prefix_len, x.shape[0] - prefix_len, x.device)
        memory = memory if memory is not None else [None] * len(self.layers)
        new_memory = []
        for layer, mem in zip(self.layers, memory):
            x, mem = layer(x, mask, prefix_len, mem)
            new_memory.append(mem)
        return x, new_memory


def sinusoidal_positions(n, dim, dtype=torch.float32):
    pos = torch.arange(n, dtype=torch.float64).unsqueeze(1)
    div = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    pe = torch.zeros(n, dim, dtype=torch.float64)
    pe[:, 0::2] = torch.sin(pos * div)
    pe[:, 1::2] = torch.cos(pos * div)[:, : dim // 2]
    return pe.to(dtype)


class CrossAttention(nn.Module):
    def __init__(self, hidden, heads, dropout=0.0):
        super().__init__()
        self.visual_from_nodes = MultiHeadAttention(hidden, heads, dropout)
        self.nodes_from_visual = MultiHeadAttention(hidden, heads, dropout)


def cross_attention(h_v, h_n, params: CrossAttention, mask_vn=None, mask_nv=None):
    """Node-attended visual features and visual-attended node features."""
    if h_v.shape[0] == 0 or h_n.shape[0] == 0:
        raise ValueError("both streams must be non-empty")
    h_vca = params.visual_from_nodes(h_v, h_n, h_n, mask_vn)
    h_nca = params.nodes_from_visual(h_n, h_v, h_v, mask_nv)
    return h_vca, h_nca


def predict_word_logits(h_vca_caption, h_nca_caption, head: nn.Module):
    if h_nca_caption is None:
        return head(h_vca_caption)
    if h_vca_caption.shape[0] != h_nca_caption.shape[0]:
        raise ValueError("caption slices of the two streams differ in length")
    return head(torch.cat([h_vca_caption, h_nca_caption], -1))


# --------------------------------------------------------------------------- model

@dataclass
class VideoInputs:
    """Everything the model reads for one video."""

    video_id: str
    visual: list  # per-event (frames, visual_dim) tensors
    graph: Optional[object] = None  # VideoGraph
    theme_graphs: list = field(default_factory=list)  # per-event ThemeGraph

    @property
    def n_events(self) -> int:
        return len(self.visual)


@dataclass
class EncodedGraphs:
    vg: Optional[NodeEmbeddings]
    vg_types: list
    vg_labels: list
    vg_timesteps: torch.Tensor
    tg: dict  # id(theme graph) -> NodeEmbeddings


@dataclass
class EventOutput:
    logits: torch.Tensor
    memory: dict
    selected: list  # (source, index, probability, label, type)


def init_weights(module, std=0.02):
    """Small normal init for projections and embeddings, as in BERT-style captioners."""
    if isinstance(module, (nn.Linear, nn.Embedding)):
        nn.init.normal_(module.weight, 0.0, std)
    if isinstance(module, nn.Linear) and module.bias is not None:
        nn.init.zeros_(module.bias)
    elif isinstance(module, nn.LayerNorm):
        nn.init.ones_(module.weight)
        nn.init.zeros_(module.bias)


class GEMVPCModel(nn.Module):
    def __init__(self, cfg: ModelConfig, pretrained_words=None):
        super().__init__()
        self.cfg = cfg
        h, eps = cfg.hidden, cfg.layer_norm_eps
        self.word_embedding = nn.Embedding(cfg.vocab_size, cfg.word_dim)
        self.word_proj = nn.Linear(cfg.word_dim, h)
        self.word_norm = nn.LayerNorm(h, eps=eps)
        self.visual_proj = nn.Linear(cfg.visual_dim, h)
        self.frame_norm = nn.LayerNorm(h, eps=eps)
        self.cls = nn.Parameter(torch.randn(h) * 0.02)
        self.token_type = nn.Embedding(cfg.token_type_count, h)
        self.register_buffer("positions", sinusoidal_positions(
            1 + cfg.max_visual_tokens + cfg.max_caption_len + 1, h), persistent=False)
        self.visual_norm = nn.LayerNorm(h, eps=eps)
        self.visual_stream = Stream(cfg)
        self.dropout = nn.Dropout(cfg.dropout)
        if cfg.use_graph:
            self.tg_encoder = GraphEncoder(cfg.node_feat_dim, h, cfg.tg_gat_layers, cfg.gat_heads)
            self.vg_encoder = GraphEncoder(cfg.node_feat_dim, h, cfg.vg_gat_layers, cfg.gat_heads)
            self.selector = NodeSelector(h, cfg.node_score_reading)
            self.node_content_norm = nn.LayerNorm(h, eps=eps)
            self.node_norm = nn.LayerNorm(h, eps=eps)
            self.node_stream = Stream(cfg)
            self.cross = CrossAttention(h, cfg.heads, cfg.dropout)
        head_in = 2 * h if cfg.use_graph else h
        self.head = nn.Sequential(nn.Linear(head_in, h), nn.GELU(), nn.LayerNorm(h, eps=eps),
                                  nn.Linear(h, cfg.vocab_size))
        self.apply(init_weights)
        if pretrained_words is not None:
            self.word_embedding.weight.data.copy_(torch.as_tensor(pretrained_words))

    @property
    def dtype(self):
        return self.cls.dtype

    # -- graphs ------------------------------------------------------------
    def encode_graphs(self, video: VideoInputs) -> Optional[EncodedGraphs]:
        if not self.cfg.use_graph:
            return None
        g = video.graph
        if g is None or not video.theme_graphs:
            raise ValueError(f"{video.video_id}: graph inputs missing")
        vg = encode_video_graph(self.vg_encoder, g)
        tg = {}
        for tgraph in video.theme_graphs:
            if id(tgraph) not in tg:
                tg[id(tgraph)] = encode_theme_graph(self.tg_encoder, tgraph)
        return EncodedGraphs(vg, [n.type for n in g.nodes], [n.label for n in g.nodes],
                             torch.tensor([n.timestep for n in g.nodes]), tg)

    # -- one event ---------------------------------------------------------
    def _caption_embed(self, tokens):
        return self.word_norm(self.word_proj(self.word_embedding(tokens)))

    def forward_event(self, video: VideoInputs, t: int, tokens: torch.Tensor,
                      memory: Optional[dict] = None, graphs: Optional[EncodedGraphs] = None) -> EventOutput:
        """Logits for every caption position of event ``t`` given input ``tokens``.

        ``tokens`` starts with BOS (teacher-forced caption or partial hypothesis).
        ``memory`` is the state returned for event ``t - 1`` (None at the start).
        """
        cfg = self.cfg
        memory = memory or {}
        dev, dt = self.cls.device, self.dtype
        feats = torch.as_tensor(video.visual[t], dtype=dt, device=dev)[: cfg.max_visual_tokens]
        tokens = tokens[: cfg.max_caption_len + 1]
        cap = self._caption_embed(tokens)
        lc, lv = cap.shape[0], feats.shape[0]

        x_v = torch.cat([self.cls.unsqueeze(0), self.frame_norm(self.visual_proj(feats)), cap], 0)
        types_v = torch.tensor([TYPE_CLS] + [TYPE_VISUAL] * lv + [TYPE_CAPTION] * lc, device=dev)
        x_v = x_v + self.positions[: x_v.shape[0]].to(dt) + self.token_type(types_v)
        x_v = self.dropout(self.visual_norm(x_v))
        h_v, mem_v = self.visual_stream(x_v, 1 + lv, memory.get("visual"))
        new_memory = {"visual": mem_v}
        selected = []

        if not cfg.use_graph:
            logits = predict_word_logits(h_v[1 + lv:], None, self.head)
            return EventOutput(logits, new_memory, selected)

        graphs = graphs or self.encode_graphs(video)
        h_cls = h_v[0]
        node_rows, node_types = [], []
        tg_emb = self.node_content_norm(graphs.tg[id(video.theme_graphs[t])].matrix)
        idx, probs = select_nodes(h_cls, tg_emb, self.selector, cfg.top_n_tg)
        node_rows.append(weight_selected(tg_emb, idx, probs))
        node_types += [TYPE_THEME] * len(idx)
        tg_words = video.theme_graphs[t].words
        selected += [("theme", int(i), float(probs[i].detach()), tg_words[int(i)], "Theme") for i in idx]

        at_t = torch.nonzero(graphs.vg_timesteps == t).flatten().to(dev)
        if at_t.numel() == 0:
            raise ValueError(f"{video.video_id}: no video-graph nodes at timestep {t}")
        vg_emb = self.node_content_norm(graphs.vg.matrix.index_select(0, at_t))
        idx, probs = select_nodes(h_cls, vg_emb, self.selector, cfg.top_n_vg)
        node_rows.append(weight_selected(vg_emb, idx, probs))
        for i in idx:
            nid = int(at_t[i])
            node_types.append(vg_token_type(graphs.vg_types[nid]))
            selected.append(("video", nid, float(probs[i].detach()), graphs.vg_labels[nid], graphs.vg_types[nid].name))

        nodes = torch.cat(node_rows, 0)
        ln = nodes.shape[0]
        x_n = torch.cat([nodes, cap], 0)
        types_n = torch.tensor(node_types + [TYPE_CAPTION] * lc, device=dev)
        x_n = self.dropout(self.node_norm(x_n + self.token_type(types_n)))
        h_n, mem_n = self.node_stream(x_n, ln, memory.get("node"))
        new_memory["node"] = mem_n

        h_vca, h_nca = cross_attention(h_v, h_n, self.cross,
                                       cross_mask(1 + lv, ln, lc, dev), cross_mask(ln, 1 + lv, lc, dev))
        logits = predict_word_logits(h_vca[1 + lv:], h_nca[ln:], self.head)
        return EventOutput(logits, new_memory, selected)

    def forward_video(self, video: VideoInputs, captions_in: list):
        """Teacher-forced logits for every event, memory threaded in order."""
        graphs = self.encode_graphs(video)
        memory, out = None, []
        for t, toks in enumerate(captions_in):
            res = self.forward_event(video, t, toks, memory, graphs)
            memory = res.memory
            out.append(res.logits)
        return out
