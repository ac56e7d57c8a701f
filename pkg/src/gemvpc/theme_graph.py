"""Per-action-class word graphs weighted by normalised PMI."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .text import HashingTextEmbedder, tokenize
from .video_graph import (FilterConfig, build_action_nodes_asr, build_lexicon, pos_class,
                          representative_action)

logger = logging.getLogger(__name__)

NEVER_COOCCUR = float("-inf")
GLOBAL_THEME = "__global__"


@dataclass
class CooccurrenceStats:
    """Sentence-level document frequencies: #S, #S(i) and #S(i,j)."""

    total_sentences: int
    word_counts: Counter
    pair_counts: Counter

    @classmethod
    def from_sentences(cls, sentences: Iterable[Sequence[str]], words: Optional[Iterable[str]] = None):
        keep = set(words) if words is not None else None
        wc, pc, n = Counter(), Counter(), 0
        for sent in sentences:
            n += 1
            present = set(sent) if keep is None else set(sent) & keep
            wc.update(present)
            pc.update(combinations(sorted(present), 2))
        return cls(n, wc, pc)

    def pair(self, i: str, j: str) -> int:
        if i == j:
            return self.word_counts[i]
        return self.pair_counts[(i, j) if i < j else (j, i)]

    def merge(self, other: "CooccurrenceStats") -> "CooccurrenceStats":
        return CooccurrenceStats(self.total_sentences + other.total_sentences,
                                 self.word_counts + other.word_counts,
                                 self.pair_counts + other.pair_counts)


def compute_npmi(stats: CooccurrenceStats, i: str, j: str) -> float:
    """NPMI of two words; ``-inf`` when they never share a sentence."""
    n, si, sj = stats.total_sentences, stats.word_counts[i], stats.word_counts[j]
    if si == 0 or sj == 0 or n == 0:
        raise KeyError("word absent from corpus")
    sij = stats.pair(i, j)
    if sij == 0:
        return NEVER_COOCCUR
    if sij == n:
        return 1.0
    # marginal logs summed first so that the result is symmetric in i and j
    pmi = math.log(sij) + math.log(n) - (math.log(si) + math.log(sj))
    return pmi / (math.log(n) - math.log(sij))


def build_class_vocab(bundles, class_of_event: Mapping, top_n: int = 100) -> dict:
    """Noun/verb/adverb counts per class, truncated to the ``top_n`` most frequent.

    ``class_of_event`` maps ``(video_id, event_index)`` to a class key. Tokens
    come from the caption POS tags carried by the bundles. Returns
    ``{class: [(word, count), ...]}`` ordered by count then word.
    """
    counts: dict = {}
    skipped = 0
    for b in bundles:
        for ev in b.events:
            key = class_of_event.get((b.video_id, ev.event_index))
            if key is None:
                skipped += 1
                continue
            c = counts.setdefault(key, Counter())
            c.update(tok.lower() for tok, tag in ev.pos_tags if pos_class(tag))
    if skipped:
        logger.warning("%d events without a class mapping were skipped", skipped)
    return {k: _top(c, top_n) for k, c in counts.items()}


def _top(counter: Counter, top_n: int):
    return sorted(counter.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]


@dataclass
class ThemeGraph:
    action_class: str
    nodes: list  # (word, corpus_count)
    features: np.ndarray
    edges: list  # (i, j, npmi) with i < j

    @property
    def words(self) -> list[str]:
        return [w for w, _ in self.nodes]

    def to_json(self) -> dict:
        return {"class": self.action_class,
                "nodes": [{"word": w, "count": c} for w, c in self.nodes],
                "edges": [[i, j, w] for i, j, w in self.edges]}

    @classmethod
    def from_json(cls, d: dict, embedder) -> "ThemeGraph":
        nodes = [(n["word"], n["count"]) for n in d["nodes"]]
        feats = embedder.embed_many([w for w, _ in nodes])
        return cls(d["class"], nodes, feats, [(int(i), int(j), float(w)) for i, j, w in d["edges"]])


def build_theme_graph(class_vocab, support_corpus, threshold: float = 0.10, embedder=None,
                      action_class: str = "") -> ThemeGraph:
    """Connect vocabulary words whose NPMI over ``support_corpus`` exceeds ``threshold``."""
    if not class_vocab:
        raise ValueError("empty class vocabulary")
    embedder = embedder or HashingTextEmbedder()
    words = [w for w, _ in class_vocab]
    stats = CooccurrenceStats.from_sentences(support_corpus, words)
    edges = []
    for a, b in combinations(range(len(words)), 2):
        wa, wb = words[a], words[b]
        if stats.word_counts[wa] == 0 or stats.word_counts[wb] == 0:
            continue
        score = compute_npmi(stats, wa, wb)
        if score > threshold:
            edges.append((a, b, score))
    return ThemeGraph(action_class, list(class_vocab), embedder.embed_many(words), edges)


def save_theme_graphs(graphs: Mapping[str, ThemeGraph], path) -> None:
    payload = [graphs[k].to_json() for k in sorted(graphs)]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def load_theme_graphs(path, embedder) -> dict:
    with open(path, encoding="utf-8") as fh:
        return {d["class"]: ThemeGraph.from_json(d, embedder) for d in json.load(fh)}


def read_support_corpus(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [tokenize(line) for line in fh if line.strip()]


# --------------------------------------------------------------------------- k-means

class ActionKMeans(ClusterMixin, BaseEstimator):
    """Lloyd's k-means with k-means++ seeding and restarts.

    Iterates until the assignment stops changing or ``max_iter`` rounds pass;
    keeps the restart with the lowest within-cluster sum of squares.
    Assignment ties go to the lowest cluster index.
    """

    def __init__(self, n_clusters=300, n_init=10, max_iter=300, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.random_state = random_state

    @staticmethod
    def _assign(X, centroids):
        d = ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
        return np.argmin(d, axis=1), d

    def _init(self, X, rng):
        n = X.shape[0]
        centroids = [X[rng.integers(n)]]
        for _ in range(1, self.n_clusters):
            d = ((X[:, None, :] - np.asarray(centroids)[None]) ** 2).sum(-1).min(1)
            total = d.sum()
            idx = rng.choice(n, p=d / total) if total > 0 else rng.integers(n)
            centroids.append(X[idx])
        return np.asarray(centroids, dtype=float)

    def _lloyd(self, X, rng):
        centroids = self._init(X, rng)
        labels, _ = self._assign(X, centroids)
        for it in range(self.max_iter):
            for c in range(self.n_clusters):
                members = X[labels == c]
                if len(members):
                    centroids[c] = members.mean(0)
            new, _ = self._assign(X, centroids)
            if np.array_equal(new, labels):
                break
            labels = new
        inertia = float(((X - centroids[labels]) ** 2).sum())
        return centroids, labels, inertia, it + 1

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < self.n_clusters:
            raise ValueError(f"need at least {self.n_clusters} points, got {X.shape[0]}")
        rng = np.random.default_rng(self.random_state)
        best = None
        for _ in range(self.n_init):
            run = self._lloyd(X, rng)
            if best is None or run[2] < best[2]:
                best = run
        self.cluster_centers_, self.labels_, self.inertia_, self.n_iter_ = best
        return self

    def predict(self, X):
        check_is_fitted(self, "cluster_centers_")
        X = check_array(X, dtype=float)
        return self._assign(X, self.cluster_centers_)[0]


def kmeans_cluster(embeddings, k: int, seed: int = 0, restarts: int = 10) -> ActionKMeans:
    return ActionKMeans(n_clusters=k, n_init=restarts, random_state=seed).fit(np.asarray(embeddings))


# --------------------------------------------------------------------------- estimator

class ThemeGraphBuilder(BaseEstimator):
    """Learn one theme graph per action class, plus a corpus-global fallback.

    With ``method="vf"`` an event's class is its highest-confidence predicted
    action. With ``method="asr"`` classes are k-means clusters over embeddings
    of each event's first speech-derived action node.
    """

    def __init__(self, method="vf", top_n=100, threshold=0.10, n_clusters=300, n_init=10,
                 random_state=0, embedder=None):
        self.method = method
        self.top_n = top_n
        self.threshold = threshold
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.random_state = random_state
        self.embedder = embedder

    def _asr_text(self, ev) -> str:
        nodes = build_action_nodes_asr(ev, self.lexicon_.verbs, self.lexicon_.nouns_adverbs,
                                       FilterConfig(), self.embedder_)
        return nodes[0].label

    def predict(self, events) -> list:
        """Theme key for each event annotation."""
        check_is_fitted(self, "graphs_")
        if self.method == "vf":
            return [representative_action(ev) or GLOBAL_THEME for ev in events]
        if not events:
            return []
        emb = self.embedder_.embed_many([self._asr_text(ev) for ev in events])
        return [f"cluster{c}" for c in self.cluster_model_.predict(emb)]

    def fit(self, records, bundles, support_corpus=None):
        if self.method not in ("vf", "asr"):
            raise ValueError(f"method must be 'vf' or 'asr', got {self.method!r}")
        self.embedder_ = self.embedder if self.embedder is not None else HashingTextEmbedder()
        self.lexicon_ = build_lexicon(bundles)
        self.graphs_ = {}
        events = [(b.video_id, ev) for b in bundles for ev in b.events]
        if self.method == "asr":
            emb = self.embedder_.embed_many([self._asr_text(ev) for _, ev in events])
            k = min(self.n_clusters, len(events))
            self.cluster_model_ = ActionKMeans(k, self.n_init, random_state=self.random_state).fit(emb)
        keys = self.predict([ev for _, ev in events])
        class_of_event = {(vid, ev.event_index): key for (vid, ev), key in zip(events, keys)}
        if support_corpus is None:
            support_corpus = [cap for r in records for cap in (r.captions or ())]
        self.support_size_ = len(support_corpus)
        vocab = build_class_vocab(bundles, class_of_event, self.top_n)
        for key in sorted(vocab):
            if vocab[key]:
                self.graphs_[key] = build_theme_graph(vocab[key], support_corpus, self.threshold,
                                                      self.embedder_, key)
        everything = build_class_vocab(bundles, {k: GLOBAL_THEME for k in class_of_event}, self.top_n)
        self.global_graph_ = build_theme_graph(everything[GLOBAL_THEME], support_corpus, self.threshold,
                                               self.embedder_, GLOBAL_THEME)
        return self

    def graph_for(self, key) -> ThemeGraph:
        check_is_fitted(self, "graphs_")
        return self.graphs_.get(key, self.global_graph_)

    def transform(self, keys) -> list:
        return [self.graph_for(k) for k in keys]

    def all_graphs(self) -> dict:
        out = dict(self.graphs_)
        out[GLOBAL_THEME] = self.global_graph_
        return out
