"""Commonsense-enhanced temporal video graphs built from annotation bundles.

Two node-construction routes are supported. ``"vf"`` starts from visual
predictions (action classes, VQA locations, detected objects, audio tags);
``"asr"`` starts from OpenIE tuples of the speech transcript and replaces the
location node by a contextual phrase node.
"""
from __future__ import annotations

import enum
import json
import logging
import struct
from collections import Counter
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import ASR_RELATIONS, VF_RELATIONS, AnnotationBundle, EventAnnotation, RelationToken, ValidationError
from .text import HashingTextEmbedder, cosine, levenshtein_ratio, tokenize

logger = logging.getLogger(__name__)

NO_ACTION = "no action"
SPEAKING = "speaking"
STRUCTURAL_RELATIONS = ("occursAfter", "occursBefore", "atLocation", "hasContext", "inScene", "hasSound")
EDGE_RELATIONS = STRUCTURAL_RELATIONS + tuple(r.value for r in RelationToken)
DEFAULT_SPEECH_LABELS = frozenset({"speech", "male speech", "female speech", "conversation", "narration"})


class GraphValidationError(ValidationError):
    pass


class GraphFormatError(ValueError):
    pass


class NodeType(enum.IntEnum):
    Action = 0
    Location = 1
    ContextualPhrase = 2
    Object = 3
    Audio = 4
    Commonsense = 5


@dataclass
class GraphNode:
    id: int
    type: NodeType
    label: str
    timestep: int
    feature: np.ndarray
    source_confidence: Optional[float] = None


@dataclass(frozen=True, order=True)
class GraphEdge:
    src: int
    dst: int
    relation: str


@dataclass
class VideoGraph:
    video_id: str
    nodes: list[GraphNode]
    edges: list[GraphEdge]
    method: str
    n_events: int

    def nodes_at(self, t: int) -> list[GraphNode]:
        return [n for n in self.nodes if n.timestep == t]

    @property
    def features(self) -> np.ndarray:
        return np.stack([n.feature for n in self.nodes])

    def __eq__(self, other) -> bool:
        if not isinstance(other, VideoGraph):
            return NotImplemented
        if (self.video_id, self.method, self.n_events, self.edges) != \
                (other.video_id, other.method, other.n_events, other.edges):
            return False
        if len(self.nodes) != len(other.nodes):
            return False
        for a, b in zip(self.nodes, other.nodes):
            if (a.id, a.type, a.label, a.timestep, a.source_confidence) != \
                    (b.id, b.type, b.label, b.timestep, b.source_confidence):
                return False
            if not np.array_equal(a.feature, b.feature):
                return False
        return True


@dataclass
class FilterConfig:
    no_action_threshold: float = 0.35
    commonsense_min_action_conf: float = 0.5
    object_sim_threshold: float = 0.25
    audio_sim_threshold: float = 0.3
    levenshtein_ratio_max: float = 0.70
    verb_sim_threshold: float = 0.6
    audio_label_allowlist: Optional[frozenset] = None
    speech_labels: frozenset = DEFAULT_SPEECH_LABELS

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not 0.0 <= v <= 1.0:
                raise ValueError(f"{f.name}={v} outside [0, 1]")


@dataclass
class EventNodes:
    """Nodes of one event before ids are assigned.

    ``commonsense`` holds ``(node, parent, relation)``; ``parent`` indexes
    ``actions`` or is -1 for the anchor (contextual phrase) node.
    """

    timestep: int
    actions: list[GraphNode]
    anchor: Optional[GraphNode] = None
    objects: list[GraphNode] = field(default_factory=list)
    audio: list[GraphNode] = field(default_factory=list)
    commonsense: list[tuple] = field(default_factory=list)


@dataclass
class Lexicon:
    """Training-caption word sets used by the speech route."""

    verbs: frozenset
    nouns: frozenset
    adverbs: frozenset

    @property
    def nouns_adverbs(self) -> frozenset:
        return self.nouns | self.adverbs


def pos_class(tag: str) -> Optional[str]:
    """Map universal or Penn tags to noun/verb/adverb."""
    tag = tag.upper()
    if tag in ("NOUN", "PROPN") or tag.startswith("NN"):
        return "noun"
    if tag == "VERB" or tag.startswith("VB"):
        return "verb"
    if tag == "ADV" or tag.startswith("RB"):
        return "adverb"
    return None


def build_lexicon(bundles: Sequence[AnnotationBundle]) -> Lexicon:
    sets = {"noun": set(), "verb": set(), "adverb": set()}
    for b in bundles:
        for ev in b.events:
            for tok, tag in ev.pos_tags:
                cls = pos_class(tag)
                if cls:
                    sets[cls].add(tok.lower())
    return Lexicon(frozenset(sets["verb"]), frozenset(sets["noun"]), frozenset(sets["adverb"]))


def _node(ntype, label, t, embedder, conf=None) -> GraphNode:
    return GraphNode(-1, ntype, label, t, embedder.embed(label), conf)


def _merge_labels(pairs):
    """Merge duplicate labels keeping first position and max confidence."""
    merged: dict[str, Optional[float]] = {}
    for label, conf in pairs:
        if label in merged:
            prev = merged[label]
            if conf is not None and (prev is None or conf > prev):
                merged[label] = conf
        else:
            merged[label] = conf
    return list(merged.items())


# --------------------------------------------------------------------------- node builders

def build_action_nodes_vf(ev: EventAnnotation, cfg: FilterConfig, embedder) -> list[GraphNode]:
    t = ev.event_index
    if not ev.action_preds:
        return [_node(NodeType.Action, NO_ACTION, t, embedder, 0.0)]
    speech = any(lbl.strip().lower() in cfg.speech_labels for lbl, _ in ev.audio_preds)
    low = SPEAKING if speech else NO_ACTION
    raw = _merge_labels((lbl.strip().lower(), c) for lbl, c in ev.action_preds)
    final = [(lbl if conf >= cfg.no_action_threshold else low, conf) for lbl, conf in raw]
    return [_node(NodeType.Action, lbl, t, embedder, conf) for lbl, conf in _merge_labels(final)]


def majority_location(vqa_locations: Sequence[str]) -> str:
    if not vqa_locations:
        raise ValueError("no VQA location answers")
    folded = [s.strip().lower() for s in vqa_locations]
    counts = Counter(folded)
    best = max(counts.values())
    return next(s for s in folded if counts[s] == best)


def build_commonsense_nodes(parents: Sequence[GraphNode], records, cfg: FilterConfig, embedder,
                            method: str = "vf", parent_indices: Optional[Sequence[int]] = None):
    """Commonsense tails attached to the nodes whose label matches their head.

    Returns ``(node, parent_index, relation)`` triples. ``parent_indices``
    overrides the index reported for each parent (the anchor uses -1).
    """
    active = VF_RELATIONS if method == "vf" else ASR_RELATIONS
    by_label = {}
    for i, p in enumerate(parents):
        by_label.setdefault(p.label, (i if parent_indices is None else parent_indices[i], p))
    kept_text: list[str] = []
    out = []
    for head, rel, tails in records:
        hit = by_label.get(head.strip().lower())
        if hit is None:
            logger.debug("commonsense head %r matches no node; skipped", head)
            continue
        idx, parent = hit
        if RelationToken(rel) not in active:
            continue
        if method == "vf" and (parent.source_confidence is None
                               or parent.source_confidence < cfg.commonsense_min_action_conf):
            continue
        for tail in tails:
            text = tail.strip().lower()
            if not text or text == "none":
                continue
            if any(levenshtein_ratio(text, k) > cfg.levenshtein_ratio_max for k in kept_text):
                continue
            kept_text.append(text)
            out.append((_node(NodeType.Commonsense, text, parent.timestep, embedder), idx,
                        RelationToken(rel).value))
    return out


def filter_context_labels(candidates, anchors: Sequence[GraphNode], threshold: float, embedder):
    """Keep ``(label, score)`` candidates close enough to at least one anchor."""
    if not anchors:
        raise ValueError("no anchor nodes")
    anchor_mat = np.stack([a.feature for a in anchors])
    kept = []
    for label, score in candidates:
        vec = embedder.embed(label)
        sims = anchor_mat @ vec / (np.linalg.norm(anchor_mat, axis=1) * np.linalg.norm(vec) + 1e-300)
        if float(sims.max()) >= threshold:
            kept.append((label, score))
    return kept


def build_action_nodes_asr(ev: EventAnnotation, training_verbs, training_noun_adverbs,
                           cfg: FilterConfig, embedder) -> list[GraphNode]:
    t = ev.event_index
    verbs = sorted(training_verbs)
    verb_mat = embedder.embed_many(verbs) if verbs else None
    labels = []
    for verb, args in ev.openie_tuples:
        v = verb.strip().lower()
        if not v or verb_mat is None:
            continue
        sim = float((verb_mat @ embedder.embed(v)).max())
        if sim < cfg.verb_sim_threshold:
            continue
        words = [w for a in args for w in tokenize(a) if w in training_noun_adverbs]
        labels.append((" ".join([v] + words), None))
    if not labels:
        return [_node(NodeType.Action, SPEAKING, t, embedder)]
    return [_node(NodeType.Action, lbl, t, embedder) for lbl, _ in _merge_labels(labels)]


def build_contextual_phrase_node(action_nodes: Sequence[GraphNode], embedder) -> GraphNode:
    if not action_nodes:
        raise ValueError("contextual phrase needs at least one action node")
    label = "; ".join(n.label for n in action_nodes)
    return _node(NodeType.ContextualPhrase, label, action_nodes[0].timestep, embedder)


# --------------------------------------------------------------------------- assembly

def _sort_key(n: GraphNode):
    return (n.timestep, int(n.type), n.label)


def assemble_graph(per_event: Sequence[EventNodes], method: str, video_id: str = "",
                   n_events: Optional[int] = None) -> VideoGraph:
    if method not in ("vf", "asr"):
        raise ValueError(f"unknown method {method!r}")
    anchor_rel = "atLocation" if method == "vf" else "hasContext"
    nodes: list[GraphNode] = []
    edges: list[tuple[int, int, str]] = []

    def add(n: GraphNode) -> int:
        nodes.append(n)
        return len(nodes) - 1

    prev_action = None
    for ev in sorted(per_event, key=lambda e: e.timestep):
        if not ev.actions:
            raise GraphValidationError(f"{video_id}: event {ev.timestep} has no action nodes")
        action_ids = [add(a) for a in ev.actions]
        for a in action_ids:
            if prev_action is not None:
                edges.append((prev_action, a, "occursAfter"))
                edges.append((a, prev_action, "occursBefore"))
            prev_action = a
        anchor_id = None
        if ev.anchor is not None:
            anchor_id = add(ev.anchor)
            for a in action_ids:
                edges.append((a, anchor_id, anchor_rel))
        for node, parent, rel in ev.commonsense:
            src = anchor_id if parent == -1 else action_ids[parent]
            if src is None:
                raise GraphValidationError(f"{video_id}: commonsense parent missing at event {ev.timestep}")
            edges.append((src, add(node), rel))
        for group, rel in ((ev.objects, "inScene"), (ev.audio, "hasSound")):
            if group and anchor_id is None:
                raise GraphValidationError(f"{video_id}: event {ev.timestep} has context nodes but no anchor")
            for node in group:
                edges.append((add(node), anchor_id, rel))

    order = sorted(range(len(nodes)), key=lambda i: _sort_key(nodes[i]))
    remap = {old: new for new, old in enumerate(order)}
    final_nodes = []
    for new, old in enumerate(order):
        n = nodes[old]
        final_nodes.append(GraphNode(new, n.type, n.label, n.timestep, n.feature, n.source_confidence))
    final_edges = sorted(GraphEdge(remap[s], remap[d], r) for s, d, r in edges)
    if n_events is None:
        n_events = 1 + max((n.timestep for n in final_nodes), default=-1)
    g = VideoGraph(video_id, final_nodes, final_edges, method, n_events)
    validate_graph(g)
    return g


def validate_graph(g: VideoGraph) -> None:
    """Raise GraphValidationError unless every structural invariant holds."""
    def fail(msg):
        raise GraphValidationError(f"{g.video_id}: {msg}")

    if g.method not in ("vf", "asr"):
        fail(f"unknown method {g.method!r}")
    ids = [n.id for n in g.nodes]
    if ids != list(range(len(ids))):
        fail("node ids must be 0..n-1 in order")
    by_id = {n.id: n for n in g.nodes}
    forbidden = NodeType.ContextualPhrase if g.method == "vf" else NodeType.Location
    anchor_type = NodeType.Location if g.method == "vf" else NodeType.ContextualPhrase
    anchor_rel = "atLocation" if g.method == "vf" else "hasContext"
    for n in g.nodes:
        if not n.label:
            fail(f"node {n.id} has an empty label")
        if not 0 <= n.timestep < g.n_events:
            fail(f"node {n.id} timestep {n.timestep} outside [0, {g.n_events})")
        if n.type == forbidden:
            fail(f"{n.type.name} node in a {g.method} graph")
    seen = set()
    for e in g.edges:
        if e.src not in by_id or e.dst not in by_id:
            fail(f"edge {e} has a missing endpoint")
        if e.relation not in EDGE_RELATIONS:
            fail(f"edge relation {e.relation!r} not allowed")
        if e.src == e.dst:
            fail(f"self-loop on node {e.src}")
        if e in seen:
            fail(f"duplicate edge {e}")
        seen.add(e)

    actions = [n for n in g.nodes if n.type == NodeType.Action]
    after = [e for e in g.edges if e.relation == "occursAfter"]
    before = {(e.src, e.dst) for e in g.edges if e.relation == "occursBefore"}
    for e in after:
        if by_id[e.src].type != NodeType.Action or by_id[e.dst].type != NodeType.Action:
            fail("occursAfter edge between non-action nodes")
        if (e.dst, e.src) not in before:
            fail(f"occursAfter {e.src}->{e.dst} lacks its reversed occursBefore edge")
    if len(before) != len(after):
        fail("occursBefore count differs from occursAfter count")
    if actions and len(after) != len(actions) - 1:
        fail("action nodes do not form a single chain")
    succ = {e.src: e.dst for e in after}
    if len(succ) != len(after) or len({e.dst for e in after}) != len(after):
        fail("action chain branches")
    if actions:
        heads = [a.id for a in actions if a.id not in {e.dst for e in after}]
        if len(heads) != 1:
            fail("action chain has no unique start")
        cur, visited = heads[0], 1
        while cur in succ:
            nxt = succ[cur]
            if by_id[nxt].timestep < by_id[cur].timestep:
                fail("action chain goes back in time")
            cur, visited = nxt, visited + 1
        if visited != len(actions):
            fail("action chain does not cover every action node")
    ts_with_actions = {a.timestep for a in actions}
    for t in range(g.n_events):
        if t not in ts_with_actions:
            fail(f"event {t} has no action node")

    for n in g.nodes:
        touching = [e for e in g.edges if e.src == n.id or e.dst == n.id]
        if n.type == NodeType.Commonsense:
            ins = [e for e in touching if e.dst == n.id]
            if len(ins) != 1 or len(touching) != 1:
                fail(f"commonsense node {n.id} must have exactly one inbound edge")
            parent = by_id[ins[0].src]
            if parent.type not in (NodeType.Action, anchor_type) or parent.timestep != n.timestep:
                fail(f"commonsense node {n.id} has an invalid parent")
            if ins[0].relation not in RelationToken.__members__:
                fail(f"commonsense edge into {n.id} is not labelled with a relation token")
        elif n.type in (NodeType.Object, NodeType.Audio):
            rel = "inScene" if n.type == NodeType.Object else "hasSound"
            if len(touching) != 1 or touching[0].src != n.id or touching[0].relation != rel:
                fail(f"{n.type.name} node {n.id} must have exactly one {rel} edge")
            dst = by_id[touching[0].dst]
            if dst.type != anchor_type or dst.timestep != n.timestep:
                fail(f"{n.type.name} node {n.id} not attached to its event anchor")
        elif n.type == anchor_type:
            expect = {a.id for a in actions if a.timestep == n.timestep}
            got = {e.src for e in g.edges if e.dst == n.id and e.relation == anchor_rel}
            if got != expect:
                fail(f"anchor node {n.id} not linked to every action of event {n.timestep}")
    anchors = Counter(n.timestep for n in g.nodes if n.type == anchor_type)
    if any(c > 1 for c in anchors.values()):
        fail("more than one anchor node in an event")


# --------------------------------------------------------------------------- serialization

_MAGIC = b"GEMVG\x00"
GRAPH_FORMAT_VERSION = 1
_HEADER = struct.Struct("<6sHI")


def graph_to_json(g: VideoGraph) -> dict:
    return {
        "video_id": g.video_id,
        "method": g.method,
        "n_events": g.n_events,
        "dim": int(g.nodes[0].feature.shape[0]) if g.nodes else 0,
        "nodes": [{"id": n.id, "type": n.type.name, "label": n.label, "t": n.timestep,
                   "conf": n.source_confidence} for n in g.nodes],
        "edges": [{"src": e.src, "dst": e.dst, "rel": e.relation} for e in g.edges],
    }


def serialize_graph(g: VideoGraph) -> bytes:
    """Header, canonical JSON, then node features as little-endian float64 by node id."""
    meta = json.dumps(graph_to_json(g), sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = (np.stack([n.feature for n in g.nodes]).astype("<f8").tobytes()
            if g.nodes else b"")
    return _HEADER.pack(_MAGIC, GRAPH_FORMAT_VERSION, len(meta)) + meta + blob


def deserialize_graph(data: bytes) -> VideoGraph:
    if len(data) < _HEADER.size:
        raise GraphFormatError(f"truncated header at byte offset {len(data)}")
    magic, version, meta_len = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise GraphFormatError("not a video graph file (bad magic at byte offset 0)")
    if version != GRAPH_FORMAT_VERSION:
        raise GraphFormatError(f"schema version {version} != supported {GRAPH_FORMAT_VERSION}")
    end = _HEADER.size + meta_len
    if len(data) < end:
        raise GraphFormatError(f"truncated metadata at byte offset {len(data)} (expected {end})")
    try:
        meta = json.loads(data[_HEADER.size:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise GraphFormatError(f"bad metadata at byte offset {_HEADER.size + pos}") from exc
    n, dim = len(meta["nodes"]), meta["dim"]
    need = end + n * dim * 8
    if len(data) != need:
        raise GraphFormatError(f"feature blob truncated at byte offset {len(data)} (expected {need})")
    feats = np.frombuffer(data, dtype="<f8", count=n * dim, offset=end).reshape(n, dim).astype(float)
    nodes = [GraphNode(d["id"], NodeType[d["type"]], d["label"], d["t"], feats[i].copy(), d["conf"])
             for i, d in enumerate(meta["nodes"])]
    edges = [GraphEdge(e["src"], e["dst"], e["rel"]) for e in meta["edges"]]
    g = VideoGraph(meta["video_id"], nodes, edges, meta["method"], meta["n_events"])
    validate_graph(g)
    return g


# --------------------------------------------------------------------------- estimator

VF_FIELDS = ("action_preds", "vqa_locations")
ASR_FIELDS = ("openie_tuples", "asr_text")


def check_bundle_fields(bundle: AnnotationBundle, method: str) -> None:
    required = VF_FIELDS if method == "vf" else ASR_FIELDS
    missing = [f for f in required if not any(getattr(ev, f) for ev in bundle.events)]
    if missing:
        raise ValidationError(f"{bundle.video_id}: bundle lacks {method} fields: {', '.join(missing)}")


class VideoGraphBuilder(TransformerMixin, BaseEstimator):
    """Compile annotation bundles into validated video graphs.

    ``fit`` collects the training-caption lexicon (tagged verbs, nouns and
    adverbs) that the speech route filters against; ``transform`` maps a list
    of bundles to a list of :class:`VideoGraph`.
    """

    def __init__(self, method="vf", no_action_threshold=0.35, commonsense_min_action_conf=0.5,
                 object_sim_threshold=0.25, audio_sim_threshold=0.3, levenshtein_ratio_max=0.70,
                 verb_sim_threshold=0.6, audio_label_allowlist=None, embedder=None):
        self.method = method
        self.no_action_threshold = no_action_threshold
        self.commonsense_min_action_conf = commonsense_min_action_conf
        self.object_sim_threshold = object_sim_threshold
        self.audio_sim_threshold = audio_sim_threshold
        self.levenshtein_ratio_max = levenshtein_ratio_max
        self.verb_sim_threshold = verb_sim_threshold
        self.audio_label_allowlist = audio_label_allowlist
        self.embedder = embedder

    def filter_config(self) -> FilterConfig:
        allow = self.audio_label_allowlist
        return FilterConfig(self.no_action_threshold, self.commonsense_min_action_conf,
                            self.object_sim_threshold, self.audio_sim_threshold,
                            self.levenshtein_ratio_max, self.verb_sim_threshold,
                            frozenset(a.lower() for a in allow) if allow else None)

    def fit(self, bundles, y=None):
        if self.method not in ("vf", "asr"):
            raise ValueError(f"method must be 'vf' or 'asr', got {self.method!r}")
        self.filter_config()
        self.embedder_ = self.embedder if self.embedder is not None else HashingTextEmbedder()
        self.lexicon_ = build_lexicon(bundles)
        return self

    def transform(self, bundles):
        check_is_fitted(self, "lexicon_")
        return [self.build(b) for b in bundles]

    def build(self, bundle: AnnotationBundle, n_events: Optional[int] = None) -> VideoGraph:
        check_is_fitted(self, "lexicon_")
        check_bundle_fields(bundle, self.method)
        cfg = self.filter_config()
        build = self._event_vf if self.method == "vf" else self._event_asr
        per_event = [build(bundle.video_id, ev, cfg) for ev in bundle.events]
        return assemble_graph(per_event, self.method, bundle.video_id,
                              n_events if n_events is not None else len(bundle.events))

    def _context(self, ev, cfg, anchors, objects, t):
        emb = self.embedder_
        objs = filter_context_labels(objects, anchors, cfg.object_sim_threshold, emb)
        audio = _merge_labels((l.strip().lower(), c) for l, c in ev.audio_preds)
        if cfg.audio_label_allowlist is not None:
            audio = [(l, c) for l, c in audio if l in cfg.audio_label_allowlist]
        audio = filter_context_labels(audio, anchors, cfg.audio_sim_threshold, emb)
        return ([_node(NodeType.Object, l, t, emb, c) for l, c in objs],
                [_node(NodeType.Audio, l, t, emb, c) for l, c in audio])

    def _event_vf(self, vid, ev, cfg) -> EventNodes:
        t, emb = ev.event_index, self.embedder_
        if not ev.vqa_locations:
            raise ValidationError(f"{vid}[{t}]: missing field 'vqa_locations'")
        actions = build_action_nodes_vf(ev, cfg, emb)
        loc = _node(NodeType.Location, majority_location(ev.vqa_locations), t, emb)
        cs = build_commonsense_nodes(actions, ev.commonsense, cfg, emb, "vf")
        candidates = [(o.strip().lower(), None) for o in ev.vqa_objects]
        candidates += [(l.strip().lower(), c) for l, c in ev.detected_objects]
        candidates = [(l, c) for l, c in _merge_labels(candidates) if l]
        anchors = actions + [c[0] for c in cs] + [loc]
        objects, audio = self._context(ev, cfg, anchors, candidates, t)
        return EventNodes(t, actions, loc, objects, audio, cs)

    def _event_asr(self, vid, ev, cfg) -> EventNodes:
        t, emb, lex = ev.event_index, self.embedder_, self.lexicon_
        actions = build_action_nodes_asr(ev, lex.verbs, lex.nouns_adverbs, cfg, emb)
        cp = build_contextual_phrase_node(actions, emb)
        cs = build_commonsense_nodes([cp], ev.commonsense, cfg, emb, "asr", parent_indices=[-1])
        nouns = [(w, None) for w in tokenize(ev.asr_text or "") if w in lex.nouns]
        anchors = actions + [c[0] for c in cs] + [cp]
        objects, audio = self._context(ev, cfg, anchors, _merge_labels(nouns), t)
        return EventNodes(t, actions, cp, objects, audio, cs)


def representative_action(ev: EventAnnotation) -> Optional[str]:
    """Highest-confidence predicted action label (first wins on ties)."""
    if not ev.action_preds:
        return None
    best = max(ev.action_preds, key=lambda p: p[1])
    return best[0].strip().lower()
