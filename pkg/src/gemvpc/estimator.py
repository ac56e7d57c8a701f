"""End-to-end estimator: graphs, vocabulary, model, training and decoding behind fit/predict."""
from __future__ import annotations

import logging
import pickle
from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .data import AnnotationBundle, ValidationError, VideoRecord, VisualFeatureSeq
from .inference import DecodeConfig, caption_video
from .metrics import cider
from .model import GEMVPCModel, ModelConfig, VideoInputs
from .text import HashingTextEmbedder, Vocabulary, build_vocabulary
from .theme_graph import ThemeGraphBuilder
from .training import Example, TrainConfig, load_checkpoint, save_checkpoint, train
from .video_graph import VideoGraphBuilder

logger = logging.getLogger(__name__)


@dataclass
class VideoItem:
    """One video with everything the pipeline consumes."""

    record: VideoRecord
    features: VisualFeatureSeq
    bundle: Optional[AnnotationBundle] = None

    def __post_init__(self):
        vid = self.record.video_id
        if self.features.video_id != vid:
            raise ValidationError(f"{vid}: features belong to {self.features.video_id}")
        if len(self.features.events) != self.record.n_events:
            raise ValidationError(f"{vid}: {len(self.features.events)} feature matrices for "
                                  f"{self.record.n_events} events")
        if self.bundle is not None:
            if self.bundle.video_id != vid:
                raise ValidationError(f"{vid}: bundle belongs to {self.bundle.video_id}")
            if len(self.bundle.events) != self.record.n_events:
                raise ValidationError(f"{vid}: bundle has {len(self.bundle.events)} events, "
                                      f"record has {self.record.n_events}")


def make_items(records, features, bundles=None) -> list[VideoItem]:
    """Align records, features and bundles by video id (record order is kept)."""
    feats = {f.video_id: f for f in features}
    bund = {b.video_id: b for b in bundles} if bundles is not None else {}
    out = []
    for r in records:
        if r.video_id not in feats:
            raise ValidationError(f"{r.video_id}: no visual features")
        if bundles is not None and r.video_id not in bund:
            raise ValidationError(f"{r.video_id}: no annotation bundle")
        out.append(VideoItem(r, feats[r.video_id], bund.get(r.video_id)))
    return out


def build_video_inputs(items: Sequence[VideoItem], vg_builder=None, tg_builder=None,
                       dtype=torch.float32) -> list[VideoInputs]:
    """Model inputs; graphs are attached only when both builders are given."""
    out = []
    for it in items:
        visual = [torch.as_tensor(m, dtype=dtype) for m in it.features.events]
        graph, themes = None, []
        if vg_builder is not None and tg_builder is not None:
            if it.bundle is None:
                raise ValidationError(f"{it.record.video_id}: graph input needs an annotation bundle")
            graph = vg_builder.build(it.bundle, it.record.n_events)
            themes = tg_builder.transform(tg_builder.predict(it.bundle.events))
        out.append(VideoInputs(it.record.video_id, visual, graph, themes))
    return out


def references_of(items: Sequence[VideoItem]) -> dict:
    refs = {}
    for it in items:
        if not it.record.captions:
            raise ValidationError(f"{it.record.video_id}: no reference captions")
        refs[it.record.video_id] = it.record.captions
    return refs


class ParagraphCaptioner(BaseEstimator):
    """Graph-enhanced paragraph captioner with a scikit-learn style interface.

    ``X`` is a list of :class:`VideoItem`. Targets are the record captions, so
    ``y`` is accepted only for API symmetry and must be None.
    """

    def __init__(self, method="vf", use_graph=True, recurrence="mart", hidden=768, intermediate=None,
                 layers=2, heads=12, top_n_tg=10, top_n_vg=10, node_feat_dim=64, word_dim=300,
                 max_caption_len=30, dropout=0.1, min_count=3, theme_top_n=100, npmi_threshold=0.10,
                 n_clusters=300, lr=1e-4, weight_decay=0.01, warmup_epochs=5, batch_size=2,
                 label_smoothing=0.3, patience=3, max_epochs=30, grad_clip=1.0, top_p=0.6,
                 temperature=0.5, decode_mode="nucleus", val_decode_mode="greedy", dtype="float32",
                 random_state=0, embedder=None, pretrained_words=None):
        self.method = method
        self.use_graph = use_graph
        self.recurrence = recurrence
        self.hidden = hidden
        self.intermediate = intermediate
        self.layers = layers
        self.heads = heads
        self.top_n_tg = top_n_tg
        self.top_n_vg = top_n_vg
        self.node_feat_dim = node_feat_dim
        self.word_dim = word_dim
        self.max_caption_len = max_caption_len
        self.dropout = dropout
        self.min_count = min_count
        self.theme_top_n = theme_top_n
        self.npmi_threshold = npmi_threshold
        self.n_clusters = n_clusters
        self.lr = lr
        self.weight_decay = weight_decay
        self.warmup_epochs = warmup_epochs
        self.batch_size = batch_size
        self.label_smoothing = label_smoothing
        self.patience = patience
        self.max_epochs = max_epochs
        self.grad_clip = grad_clip
        self.top_p = top_p
        self.temperature = temperature
        self.decode_mode = decode_mode
        self.val_decode_mode = val_decode_mode
        self.dtype = dtype
        self.random_state = random_state
        self.embedder = embedder
        self.pretrained_words = pretrained_words

    # -- configuration -----------------------------------------------------
    @property
    def torch_dtype(self):
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")
        return getattr(torch, self.dtype)

    def train_config(self) -> TrainConfig:
        return TrainConfig(lr=self.lr, weight_decay=self.weight_decay, warmup_epochs=self.warmup_epochs,
                           batch_size=self.batch_size, label_smoothing=self.label_smoothing,
                           patience=self.patience, max_epochs=self.max_epochs, grad_clip=self.grad_clip,
                           seed=self.random_state)

    def decode_config(self, mode=None) -> DecodeConfig:
        return DecodeConfig(self.top_p, self.temperature, self.max_caption_len, self.random_state,
                            mode or self.decode_mode)

    def _model_config(self, vocab: Vocabulary, visual_dim: int) -> ModelConfig:
        return ModelConfig(
            vocab_size=len(vocab), visual_dim=visual_dim, node_feat_dim=self.node_feat_dim,
            hidden=self.hidden, intermediate=self.intermediate or self.hidden, layers=self.layers,
            heads=self.heads, word_dim=self.word_dim, max_caption_len=self.max_caption_len,
            recurrence=self.recurrence, top_n_tg=self.top_n_tg, top_n_vg=self.top_n_vg,
            use_graph=self.use_graph, dropout=self.dropout)

    # -- fitting -------------------------------------------------------------
    def fit_graphs(self, items: Sequence[VideoItem], support_corpus=None):
        """Fit the video- and theme-graph builders on training bundles only."""
        embedder = self.embedder if self.embedder is not None else HashingTextEmbedder(self.node_feat_dim)
        if embedder.dim != self.node_feat_dim:
            raise ValueError(f"embedder dim {embedder.dim} != node_feat_dim {self.node_feat_dim}")
        bundles = [it.bundle for it in items]
        if any(b is None for b in bundles):
            raise ValidationError("graph input needs an annotation bundle for every training video")
        self.vg_builder_ = VideoGraphBuilder(self.method, embedder=embedder).fit(bundles)
        self.tg_builder_ = ThemeGraphBuilder(self.method, top_n=self.theme_top_n,
                                             threshold=self.npmi_threshold, n_clusters=self.n_clusters,
                                             random_state=self.random_state, embedder=embedder)
        self.tg_builder_.fit([it.record for it in items], bundles, support_corpus)
        return self

    def inputs(self, items: Sequence[VideoItem]) -> list[VideoInputs]:
        if self.use_graph:
            check_is_fitted(self, "vg_builder_")
            return build_video_inputs(items, self.vg_builder_, self.tg_builder_, self.torch_dtype)
        return build_video_inputs(items, dtype=self.torch_dtype)

    def fit(self, X, y=None, X_val=None, support_corpus=None, log_path=None, checkpoint_path=None):
        if y is not None:
            raise ValueError("targets come from the record captions; pass y=None")
        items = list(X)
        if not items:
            raise ValidationError("empty training set")
        references_of(items)
        torch.manual_seed(self.random_state)
        self.vocab_ = build_vocabulary([it.record for it in items], self.min_count)
        if self.use_graph:
            self.fit_graphs(items, support_corpus)
        videos = self.inputs(items)
        examples = [Example(v, [self.vocab_.encode(c) for c in it.record.captions])
                    for v, it in zip(videos, items)]
        cfg = self._model_config(self.vocab_, items[0].features.dim)
        self.model_ = GEMVPCModel(cfg, self.pretrained_words).to(self.torch_dtype)
        validate = None
        if X_val is not None:
            val_items = list(X_val)
            val_videos, val_refs = self.inputs(val_items), references_of(val_items)

            def validate(model):
                return self._cider(model, val_videos, val_refs, self.val_decode_mode)
        self.train_result_ = train(self.model_, examples, self.vocab_, self.train_config(), validate,
                                   log_path, checkpoint_path)
        self.history_ = self.train_result_.history
        return self

    def _cider(self, model, videos, refs, mode):
        cfg = self.decode_config(mode)
        cands = {v.video_id: caption_video(model, v, self.vocab_, cfg).captions for v in videos}
        return cider(cands, {k: refs[k] for k in cands})

    # -- inference -----------------------------------------------------------
    def predict(self, X, mode=None) -> list:
        """Generated paragraphs (:class:`~gemvpc.inference.GeneratedParagraph`) in input order."""
        check_is_fitted(self, "model_")
        cfg = self.decode_config(mode)
        return [caption_video(self.model_, v, self.vocab_, cfg) for v in self.inputs(list(X))]

    def score(self, X, y=None, mode=None) -> float:
        """Corpus CIDEr-D (x100) of the generated paragraphs against the record captions."""
        items = list(X)
        refs = references_of(items)
        cands = {p.video_id: p.captions for p in self.predict(items, mode)}
        return 100.0 * cider(cands, refs)

    # -- persistence -----------------------------------------------------------
    def save(self, path) -> None:
        """Checkpoint with model weights, vocabulary and the fitted graph builders."""
        check_is_fitted(self, "model_")
        extra = {"estimator_params": {k: v for k, v in self.get_params(deep=False).items()
                                      if k not in ("embedder", "pretrained_words")}}
        if self.use_graph:
            extra["graph_builders"] = pickle.dumps((self.vg_builder_, self.tg_builder_))
        save_checkpoint(path, self.model_, self.vocab_, None, extra)

    @classmethod
    def load(cls, path):
        model, vocab, payload = load_checkpoint(path)
        extra = payload["extra"]
        est = cls(**extra["estimator_params"])
        est.vocab_, est.model_ = vocab, model
        if est.use_graph:
            est.vg_builder_, est.tg_builder_ = pickle.loads(extra["graph_builders"])
            est.embedder = est.vg_builder_.embedder_
        return est
