"""Deterministic synthetic dataset with extractor-style annotations.

Each event has a latent action class. Its caption comes from a fixed
template, its visual features are the class one-hot plus noise, and its
annotation bundle reports the class with high confidence next to distractors.
The object and location words of a caption are only observable through the
bundle, which is what makes graph inputs useful on this data.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import (AnnotationBundle, EventAnnotation, EventSegment, RelationToken,
                   VideoRecord, VisualFeatureSeq)


@dataclass(frozen=True)
class ToyClass:
    label: str
    verb: str
    objects: tuple
    adverb: str
    sound: str
    category: str


TOY_CLASSES = (
    ToyClass("surfing", "rides", ("surfboard", "wave"), "smoothly", "water", "Sports"),
    ToyClass("chopping vegetables", "chops", ("onion", "carrot"), "quickly", "chopping", "Food"),
    ToyClass("dancing", "dances", ("partner", "floor"), "gracefully", "music", "Arts"),
    ToyClass("painting", "paints", ("wall", "canvas"), "carefully", "brushing", "Arts"),
    ToyClass("riding a bike", "pedals", ("bike", "helmet"), "fast", "wind", "Sports"),
    ToyClass("playing guitar", "strums", ("guitar", "song"), "softly", "guitar", "Music"),
    ToyClass("washing dishes", "washes", ("plate", "cup"), "slowly", "splashing", "Food"),
    ToyClass("skateboarding", "skates", ("skateboard", "ramp"), "skillfully", "rolling", "Sports"),
    ToyClass("swimming", "swims", ("pool", "lane"), "steadily", "splash", "Sports"),
    ToyClass("baking cake", "bakes", ("cake", "bread"), "patiently", "oven", "Food"),
    ToyClass("juggling", "juggles", ("ball", "pin"), "happily", "cheering", "Arts"),
    ToyClass("shaving beard", "shaves", ("beard", "razor"), "gently", "buzzing", "Style"),
)
TOY_LOCATIONS = ("beach", "kitchen", "park", "gym", "studio", "garage", "street", "backyard")
CAPTION_TAGS = ("DET", "NOUN", "VERB", "DET", "NOUN", "ADV", "ADP", "DET", "NOUN")


def n_toy_classes(vocab_size: int) -> int:
    """Number of latent classes used for a requested content vocabulary size."""
    return int(min(len(TOY_CLASSES), max(2, vocab_size // 5)))


def toy_caption(cls: ToyClass, obj: str, location: str) -> list[str]:
    return ["a", "person", cls.verb, "the", obj, cls.adverb, "in", "the", location]


def _action_commonsense(cls: ToyClass) -> list:
    objs = cls.objects
    return [
        (cls.label, RelationToken.CapableOf, [f"{cls.verb} {o}" for o in objs]),
        (cls.label, RelationToken.xNeed, [f"get a {o}" for o in objs]),
        (cls.label, RelationToken.xEffect, [f"hears {cls.sound}", "feels tired"]),
        (cls.label, RelationToken.xIntent, [f"to enjoy {cls.label}"]),
        (cls.label, RelationToken.HasSubEvent, [f"holds the {objs[0]}"]),
        (cls.label, RelationToken.xReact, ["happy"]),
        # only used by the speech-based graphs; inactive for visual ones
        (cls.label, RelationToken.isBefore, [f"puts away the {objs[1]}"]),
    ]


def _phrase_commonsense(phrase: str, cls: ToyClass, obj: str) -> list:
    return [
        (phrase, RelationToken.ObjectUse, [f"use the {obj}"]),
        (phrase, RelationToken.HasSubEvent, [f"hears {cls.sound}"]),
        (phrase, RelationToken.xNeed, [f"find the {obj}"]),
        (phrase, RelationToken.xReact, ["calm"]),
    ]


def generate_toy_dataset(seed: int = 0, n_videos: int = 50, n_events: int = 3,
                         vocab_size: int = 40, noise: float = 0.35):
    """Returns ``(records, features, bundles)`` as aligned lists."""
    if min(n_videos, n_events, vocab_size) < 1:
        raise ValueError("n_videos, n_events and vocab_size must be >= 1")
    rng = np.random.default_rng(seed)
    classes = TOY_CLASSES[:n_toy_classes(vocab_size)]
    k = len(classes)
    records, features, bundles = [], [], []
    for v in range(n_videos):
        vid = f"toy{seed}_{v:04d}"
        location = TOY_LOCATIONS[rng.integers(len(TOY_LOCATIONS))]
        t0 = 0.0
        events, captions, mats, anns = [], [], [], []
        first_cls = None
        for t in range(n_events):
            ci = int(rng.integers(k))
            cls = classes[ci]
            first_cls = first_cls or cls
            obj = cls.objects[rng.integers(len(cls.objects))]
            start = round(t0 + float(rng.uniform(0.0, 2.0)), 2)
            end = round(start + float(rng.uniform(3.0, 12.0)), 2)
            t0 = end
            events.append(EventSegment(t, start, end))
            captions.append(toy_caption(cls, obj, location))

            n_frames = int(rng.integers(4, 7))
            sig = np.zeros(k)
            sig[ci] = 1.0
            mats.append((sig + rng.normal(0.0, noise, size=(n_frames, k))).astype(np.float32))

            speech = bool(rng.random() < 0.3)
            other = classes[(ci + 1 + int(rng.integers(max(k - 1, 1)))) % k]
            n_true = int(rng.integers(1, 3))
            preds = [(cls.label, round(float(rng.uniform(0.6, 1.0)), 3)) for _ in range(n_true)]
            preds.insert(int(rng.integers(n_true + 1)),
                         (other.label, round(float(rng.uniform(0.05, 0.3)), 3)))
            wrong_loc = TOY_LOCATIONS[rng.integers(len(TOY_LOCATIONS))]
            locs = [location, location, wrong_loc]
            rng.shuffle(locs)
            audio = [(cls.sound, round(float(rng.uniform(0.5, 1.0)), 3))]
            if speech:
                audio.append(("speech", round(float(rng.uniform(0.4, 0.9)), 3)))
            else:
                audio.append(("static", round(float(rng.uniform(0.1, 0.4)), 3)))
            phrase = f"{cls.verb} {obj}"
            anns.append(EventAnnotation(
                event_index=t,
                action_preds=preds,
                vqa_locations=[str(x) for x in locs],
                vqa_objects=[obj, "person"],
                detected_objects=[(obj, round(float(rng.uniform(0.5, 1.0)), 3)),
                                  ("person", round(float(rng.uniform(0.5, 1.0)), 3))],
                audio_preds=audio,
                asr_text=f"now i {cls.verb} the {obj} you know",
                openie_tuples=[(cls.verb, ["i", f"the {obj}"]), ("know", ["you"])],
                commonsense=(_action_commonsense(cls) + _action_commonsense(other)
                             + _phrase_commonsense(phrase, cls, obj)),
                pos_tags=list(zip(captions[-1], CAPTION_TAGS)),
            ))
        records.append(VideoRecord(vid, events, captions, first_cls.category, duration=t0 + 1.0))
        features.append(VisualFeatureSeq(vid, mats))
        bundles.append(AnnotationBundle(vid, anns))
    return records, features, bundles


def class_signatures(vocab_size: int) -> np.ndarray:
    return np.eye(n_toy_classes(vocab_size))


class ToyBundleProducer:
    """BundleProducer backed by a generated toy set (looked up by video id)."""

    def __init__(self, bundles):
        self._by_id = {b.video_id: b for b in bundles}

    def produce_bundle(self, video: VideoRecord) -> AnnotationBundle:
        return self._by_id[video.video_id]
