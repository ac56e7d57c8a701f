"""Dataset records, annotation bundles and on-disk formats."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol

import numpy as np

from .text import tokenize


class ValidationError(ValueError):
    """Input data violates a format or invariant."""


class RelationToken(str, enum.Enum):
    ObjectUse = "ObjectUse"
    MadeUpOf = "MadeUpOf"
    HasProperty = "HasProperty"
    CapableOf = "CapableOf"
    isAfter = "isAfter"
    HasSubEvent = "HasSubEvent"
    isBefore = "isBefore"
    xNeed = "xNeed"
    xAttr = "xAttr"
    xEffect = "xEffect"
    oEffect = "oEffect"
    xReact = "xReact"
    oReact = "oReact"
    xWant = "xWant"
    oWant = "oWant"
    xIntent = "xIntent"


VF_RELATIONS = frozenset(RelationToken) - {
    RelationToken.isAfter, RelationToken.isBefore, RelationToken.MadeUpOf,
    RelationToken.ObjectUse, RelationToken.HasProperty,
}
ASR_RELATIONS = frozenset(RelationToken) - {
    RelationToken.xReact, RelationToken.oReact, RelationToken.xAttr,
    RelationToken.xWant, RelationToken.oWant,
}
MAX_TAILS_PER_RELATION = 5


@dataclass(frozen=True)
class EventSegment:
    index: int
    start_s: float
    end_s: float

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValidationError(f"event {self.index}: start_s must be < end_s")


@dataclass
class VideoRecord:
    video_id: str
    events: list[EventSegment]
    captions: Optional[list[list[str]]] = None
    category: Optional[str] = None
    duration: Optional[float] = None

    def __post_init__(self):
        for i, ev in enumerate(self.events):
            if ev.index != i:
                raise ValidationError(f"{self.video_id}: event indices must be consecutive from 0")
            if i and ev.start_s < self.events[i - 1].start_s:
                raise ValidationError(f"{self.video_id}: events not ordered by start")
        if self.captions is not None and len(self.captions) != len(self.events):
            raise ValidationError(f"{self.video_id}: caption/event mismatch")

    @property
    def n_events(self) -> int:
        return len(self.events)


@dataclass
class EventAnnotation:
    """Extractor outputs for one event. Produced outside this package."""

    event_index: int
    action_preds: list[tuple[str, float]] = field(default_factory=list)
    vqa_locations: list[str] = field(default_factory=list)
    vqa_objects: list[str] = field(default_factory=list)
    detected_objects: list[tuple[str, float]] = field(default_factory=list)
    audio_preds: list[tuple[str, float]] = field(default_factory=list)
    asr_text: Optional[str] = None
    openie_tuples: list[tuple[str, list[str]]] = field(default_factory=list)
    commonsense: list[tuple[str, RelationToken, list[str]]] = field(default_factory=list)
    pos_tags: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class AnnotationBundle:
    video_id: str
    events: list[EventAnnotation]


class BundleProducer(Protocol):
    """Adapter for real extractors (action, VQA, detector, audio, ASR, OpenIE, commonsense).

    Extractor-side sampling constants are not enforced here: frames at 5 fps,
    step 10, 16-frame clips, centre and last frame for VQA, 10 s audio windows.
    """

    def produce_bundle(self, video: VideoRecord) -> AnnotationBundle: ...


# --------------------------------------------------------------------------- validation

def _check_conf(vid, idx, fieldname, pairs):
    out = []
    for item in pairs:
        try:
            label, conf = item
            conf = float(conf)
        except (TypeError, ValueError):
            raise ValidationError(f"{vid}[{idx}].{fieldname}: expected (label, confidence) pairs")
        if not (0.0 <= conf <= 1.0) or math.isnan(conf):
            raise ValidationError(f"{vid}[{idx}].{fieldname}: confidence {conf} outside [0, 1]")
        out.append((str(label), conf))
    return out


def event_annotation_from_dict(d: dict, video_id: str = "?") -> EventAnnotation:
    idx = d.get("event_index")
    if not isinstance(idx, int) or idx < 0:
        raise ValidationError(f"{video_id}: bad or missing field 'event_index'")
    commonsense = []
    for item in d.get("commonsense", []):
        try:
            head, rel, tails = item
        except (TypeError, ValueError):
            raise ValidationError(f"{video_id}[{idx}].commonsense: expected (head, relation, tails)")
        try:
            rel = RelationToken(rel)
        except ValueError:
            raise ValidationError(f"{video_id}[{idx}].commonsense: unknown relation {rel!r}")
        if len(tails) > MAX_TAILS_PER_RELATION:
            raise ValidationError(
                f"{video_id}[{idx}].commonsense: more than {MAX_TAILS_PER_RELATION} tails for {rel.value}")
        commonsense.append((str(head), rel, [str(t) for t in tails]))
    tuples = []
    for item in d.get("openie_tuples", []):
        try:
            verb, args = item
        except (TypeError, ValueError):
            raise ValidationError(f"{video_id}[{idx}].openie_tuples: expected (verb, args)")
        tuples.append((str(verb), [str(a) for a in args]))
    return EventAnnotation(
        event_index=idx,
        action_preds=_check_conf(video_id, idx, "action_preds", d.get("action_preds", [])),
        vqa_locations=[str(s) for s in d.get("vqa_locations", [])],
        vqa_objects=[str(s) for s in d.get("vqa_objects", [])],
        detected_objects=_check_conf(video_id, idx, "detected_objects", d.get("detected_objects", [])),
        audio_preds=_check_conf(video_id, idx, "audio_preds", d.get("audio_preds", [])),
        asr_text=d.get("asr_text"),
        openie_tuples=tuples,
        commonsense=commonsense,
        pos_tags=[(str(t), str(g)) for t, g in d.get("pos_tags", [])],
    )


def event_annotation_to_dict(video_id: str, ev: EventAnnotation) -> dict:
    return {
        "video_id": video_id,
        "event_index": ev.event_index,
        "action_preds": [[l, c] for l, c in ev.action_preds],
        "vqa_locations": list(ev.vqa_locations),
        "vqa_objects": list(ev.vqa_objects),
        "detected_objects": [[l, c] for l, c in ev.detected_objects],
        "audio_preds": [[l, c] for l, c in ev.audio_preds],
        "asr_text": ev.asr_text,
        "openie_tuples": [[v, list(a)] for v, a in ev.openie_tuples],
        "commonsense": [[h, r.value, list(t)] for h, r, t in ev.commonsense],
        "pos_tags": [[t, g] for t, g in ev.pos_tags],
    }


# --------------------------------------------------------------------------- datasets

def records_from_json(data: dict, allow_overlap: bool = False) -> list[VideoRecord]:
    if not isinstance(data, dict):
        raise ValidationError("dataset root must be a JSON object keyed by video_id")
    records = []
    for vid in sorted(data):
        entry = data[vid]
        if not isinstance(entry, dict):
            raise ValidationError(f"{vid}: record must be an object")
        stamps = entry.get("timestamps")
        if not isinstance(stamps, list) or not stamps:
            raise ValidationError(f"{vid}: missing or empty field 'timestamps'")
        try:
            spans = [(float(s), float(e)) for s, e in stamps]
        except (TypeError, ValueError):
            raise ValidationError(f"{vid}: field 'timestamps' must hold [start, end] pairs")
        sentences = entry.get("sentences")
        if sentences is not None:
            if not isinstance(sentences, list):
                raise ValidationError(f"{vid}: field 'sentences' must be a list")
            if len(sentences) != len(spans):
                raise ValidationError(f"{vid}: caption/event mismatch")
        order = sorted(range(len(spans)), key=lambda i: (spans[i][0], spans[i][1]))
        events = []
        for new_idx, old_idx in enumerate(order):
            s, e = spans[old_idx]
            if not s < e:
                raise ValidationError(f"{vid}: field 'timestamps'[{old_idx}] has start >= end")
            if events and not allow_overlap and s < events[-1].end_s:
                raise ValidationError(f"{vid}: overlapping events at 'timestamps'[{old_idx}]")
            events.append(EventSegment(new_idx, s, e))
        captions = None
        if sentences is not None:
            captions = []
            for old_idx in order:
                toks = tokenize(str(sentences[old_idx]))
                if not toks:
                    raise ValidationError(f"{vid}: field 'sentences'[{old_idx}] is empty")
                captions.append(toks)
        duration = entry.get("duration")
        records.append(VideoRecord(vid, events, captions, entry.get("category"),
                                   None if duration is None else float(duration)))
    return records


def load_dataset(path, allow_overlap: bool = False) -> list[VideoRecord]:
    """Read an ActivityNet-Captions-style JSON file."""
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    return records_from_json(data, allow_overlap=allow_overlap)


def records_to_json(records) -> dict:
    out = {}
    for rec in records:
        entry = {
            "duration": rec.duration if rec.duration is not None else rec.events[-1].end_s,
            "timestamps": [[ev.start_s, ev.end_s] for ev in rec.events],
        }
        if rec.captions is not None:
            entry["sentences"] = [" ".join(c) for c in rec.captions]
        if rec.category is not None:
            entry["category"] = rec.category
        out[rec.video_id] = entry
    return out


def save_dataset(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records_to_json(records), fh, indent=1, sort_keys=True)


# --------------------------------------------------------------------------- bundles

def load_bundles(path) -> dict[str, AnnotationBundle]:
    """Read a JSON-lines bundle file into one bundle per video."""
    per_video: dict[str, dict[int, EventAnnotation]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            vid = d.get("video_id")
            if not isinstance(vid, str):
                raise ValidationError(f"{path}:{lineno}: missing field 'video_id'")
            ev = event_annotation_from_dict(d, vid)
            if ev.event_index in per_video.setdefault(vid, {}):
                raise ValidationError(f"{vid}: duplicate event_index {ev.event_index}")
            per_video[vid][ev.event_index] = ev
    bundles = {}
    for vid, evs in per_video.items():
        idxs = sorted(evs)
        if idxs != list(range(len(idxs))):
            raise ValidationError(f"{vid}: bundle event indices must be 0..N-1")
        bundles[vid] = AnnotationBundle(vid, [evs[i] for i in idxs])
    return bundles


def save_bundles(bundles, path) -> None:
    items = bundles.values() if isinstance(bundles, dict) else bundles
    with open(path, "w", encoding="utf-8") as fh:
        for b in sorted(items, key=lambda b: b.video_id):
            for ev in b.events:
                fh.write(json.dumps(event_annotation_to_dict(b.video_id, ev), sort_keys=True) + "\n")


# --------------------------------------------------------------------------- visual features

@dataclass
class VisualFeatureSeq:
    video_id: str
    events: list[np.ndarray]

    def __post_init__(self):
        if not self.events:
            raise ValidationError(f"{self.video_id}: no feature matrices")
        dims = {m.shape[1] for m in self.events}
        if len(dims) != 1 or any(m.ndim != 2 or m.shape[0] < 1 for m in self.events):
            raise ValidationError(f"{self.video_id}: feature matrices must be (frames x d) with constant d")
        if not all(np.isfinite(m).all() for m in self.events):
            raise ValidationError(f"{self.video_id}: non-finite feature values")

    @property
    def dim(self) -> int:
        return self.events[0].shape[1]


def save_features(feats: VisualFeatureSeq, directory) -> None:
    """Write ``<video_id>.f32`` (little-endian float32, row-major) plus a JSON index."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows, start = [], 0
    for m in feats.events:
        rows.append([start, start + m.shape[0]])
        start += m.shape[0]
    mat = np.concatenate(feats.events, axis=0).astype("<f4")
    (directory / f"{feats.video_id}.f32").write_bytes(mat.tobytes(order="C"))
    index = {"video_id": feats.video_id, "dim": int(mat.shape[1]), "rows": rows}
    (directory / f"{feats.video_id}.json").write_text(json.dumps(index))


def load_features(directory, video_id: str) -> VisualFeatureSeq:
    directory = Path(directory)
    idx_path = directory / f"{video_id}.json"
    bin_path = directory / f"{video_id}.f32"
    if not idx_path.exists() or not bin_path.exists():
        raise FileNotFoundError(f"visual features for {video_id} not found in {directory}")
    index = json.loads(idx_path.read_text())
    flat = np.frombuffer(bin_path.read_bytes(), dtype="<f4")
    dim = index["dim"]
    if flat.size % dim:
        raise ValidationError(f"{video_id}: feature file size not a multiple of dim={dim}")
    mat = flat.reshape(-1, dim)
    events = []
    for s, e in index["rows"]:
        if not 0 <= s < e <= mat.shape[0]:
            raise ValidationError(f"{video_id}: bad row range [{s}, {e})")
        events.append(mat[s:e].astype(np.float32))
    return VisualFeatureSeq(video_id, events)
