"""Autoregressive paragraph decoding."""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from .model import GEMVPCModel, VideoInputs
from .text import Vocabulary

REPORT_NODES = 10


@dataclass
class DecodeConfig:
    top_p: float = 0.6
    temperature: float = 0.5
    max_len: int = 30
    seed: int = 0
    mode: str = "nucleus"

    def __post_init__(self):
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.mode not in ("nucleus", "greedy"):
            raise ValueError("mode must be 'nucleus' or 'greedy'")
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")


def nucleus_probs(logits, top_p: float, temperature: float) -> np.ndarray:
    """Renormalised distribution over the smallest top-probability set with mass >= top_p."""
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - z[np.isfinite(z)].max()
    p = np.exp(z)
    p /= p.sum()
    order = np.argsort(-p, kind="stable")
    cum = np.cumsum(p[order])
    reach = np.nonzero(cum >= top_p)[0]
    k = int(reach[0]) + 1 if reach.size else len(order)
    out = np.zeros_like(p)
    keep = order[:k]
    out[keep] = p[keep] / p[keep].sum()
    return out


def nucleus_sample(logits, cfg: DecodeConfig, rng: np.random.Generator) -> int:
    p = nucleus_probs(logits, cfg.top_p, cfg.temperature)
    return int(rng.choice(len(p), p=p))


def event_rng(seed: int, video_id: str, t: int) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(video_id.encode("utf-8")), t])


@dataclass
class GeneratedParagraph:
    video_id: str
    captions: list  # per-event token lists
    token_ids: list
    selected_nodes: list = field(default_factory=list)  # per event: [{"label","type","prob"}]

    def to_json(self) -> dict:
        return {"captions": [" ".join(c) for c in self.captions], "selected_nodes": self.selected_nodes}


def _banned(vocab: Vocabulary):
    return [vocab.pad_id, vocab.bos_id, vocab.cls_id, vocab.sep_id, vocab.unk_id]


def _node_report(selected):
    ranked = sorted(selected, key=lambda s: -s[2])[:REPORT_NODES]
    return [{"label": s[3], "type": s[4], "prob": s[2]} for s in ranked]


@torch.no_grad()
def caption_video(model: GEMVPCModel, video: VideoInputs, vocab: Vocabulary,
                  cfg: Optional[DecodeConfig] = None) -> GeneratedParagraph:
    cfg = cfg or DecodeConfig()
    if not video.visual:
        raise ValueError(f"{video.video_id}: missing visual features")
    model.eval()
    graphs = model.encode_graphs(video)
    banned = _banned(vocab)
    memory = None
    captions, all_ids, report = [], [], []
    max_len = min(cfg.max_len, model.cfg.max_caption_len)
    for t in range(video.n_events):
        rng = event_rng(cfg.seed, video.video_id, t)
        ids = [vocab.bos_id]
        finished_memory = None
        selected = []
        for step in range(max_len):
            out = model.forward_event(video, t, torch.tensor(ids), memory, graphs)
            if step == 0:
                selected = out.selected
            logits = out.logits[-1].double().cpu().numpy()
            logits[banned] = -np.inf
            if step == 0:
                logits[vocab.eos_id] = -np.inf
            if cfg.mode == "greedy":
                nxt = int(np.argmax(logits))
            else:
                nxt = nucleus_sample(logits, cfg, rng)
            if nxt == vocab.eos_id:
                finished_memory = out.memory
                break
            ids.append(nxt)
        if finished_memory is None:
            finished_memory = model.forward_event(video, t, torch.tensor(ids), memory, graphs).memory
        memory = finished_memory
        all_ids.append(ids[1:])
        captions.append(vocab.decode(ids[1:]))
        report.append(_node_report(selected))
    return GeneratedParagraph(video.video_id, captions, all_ids, report)


def caption_videos(model, videos, vocab, cfg: Optional[DecodeConfig] = None) -> list:
    return [caption_video(model, v, vocab, cfg) for v in videos]


def save_generated(paragraphs, path) -> None:
    payload = {p.video_id: p.to_json() for p in paragraphs}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


def load_generated(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
