"""Seeded random annotation bundles for property tests."""
import numpy as np

from gemvpc.data import AnnotationBundle, EventAnnotation, RelationToken

ACTIONS = ["surfing", "cooking", "dancing", "running", "chop onions", "playing guitar"]
PLACES = ["beach", "kitchen", "gym", "park"]
THINGS = ["board", "onion", "knife", "guitar", "wave", "pan", "shoe"]
SOUNDS = ["speech", "music", "water", "sizzling", "static", "narration"]
TAILS = ["get a board", "get the board", "feel happy", "be tired", "cook dinner", "cook a dinner",
         "hold the knife", "none", "play music", "make food"]
VERBS = ["chop", "cut", "stir", "surf", "dance", "run", "say"]


def random_bundle(rng: np.random.Generator, vid="rv", n_events=None) -> AnnotationBundle:
    n_events = n_events or int(rng.integers(1, 5))
    events = []
    for t in range(n_events):
        acts = [(str(rng.choice(ACTIONS)), round(float(rng.uniform(0, 1)), 3))
                for _ in range(int(rng.integers(1, 4)))]
        heads = [a for a, _ in acts] + ["unmatched head"]
        cs = []
        for _ in range(int(rng.integers(0, 5))):
            tails = [str(x) for x in rng.choice(TAILS, size=int(rng.integers(1, 6)), replace=False)]
            cs.append((str(rng.choice(heads)), RelationToken(str(rng.choice([r.value for r in RelationToken]))),
                       tails))
        tuples = [(str(rng.choice(VERBS)), [str(rng.choice(THINGS)), "i"])
                  for _ in range(int(rng.integers(1, 3)))]
        words = [str(rng.choice(VERBS)), str(rng.choice(THINGS)), "quickly"]
        events.append(EventAnnotation(
            event_index=t,
            action_preds=acts,
            vqa_locations=[str(rng.choice(PLACES)) for _ in range(3)],
            vqa_objects=[str(rng.choice(THINGS)) for _ in range(int(rng.integers(0, 3)))],
            detected_objects=[(str(rng.choice(THINGS)), round(float(rng.uniform(0, 1)), 3))
                              for _ in range(int(rng.integers(0, 3)))],
            audio_preds=[(str(rng.choice(SOUNDS)), round(float(rng.uniform(0, 1)), 3))
                         for _ in range(int(rng.integers(0, 3)))],
            asr_text=" ".join(words),
            openie_tuples=tuples,
            commonsense=cs,
            pos_tags=list(zip(words, ["VERB", "NOUN", "ADV"])),
        ))
    return AnnotationBundle(vid, events)
