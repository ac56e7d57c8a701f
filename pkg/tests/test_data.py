import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gemvpc.data import (RelationToken, ValidationError, VisualFeatureSeq, event_annotation_from_dict,
                         load_bundles, load_dataset, load_features, records_from_json, save_bundles,
                         save_dataset, save_features, ASR_RELATIONS, VF_RELATIONS)
from gemvpc.text import (SPECIAL_TOKENS, HashingTextEmbedder, Vocabulary, build_vocabulary, levenshtein,
                         levenshtein_ratio, tokenize)
from gemvpc.toy import TOY_CLASSES, class_signatures, generate_toy_dataset


def test_one_video_two_events(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps({"v1": {"duration": 10, "timestamps": [[0, 2], [3, 5]],
                                       "sentences": ["A man runs.", "He stops"]}}))
    recs = load_dataset(path)
    assert len(recs) == 1 and recs[0].n_events == 2
    assert recs[0].captions == [["a", "man", "runs"], ["he", "stops"]]


def test_events_sorted_and_reindexed():
    recs = records_from_json({"v": {"timestamps": [[5, 6], [0, 1]], "sentences": ["late", "early"]}})
    assert [e.index for e in recs[0].events] == [0, 1]
    assert recs[0].events[0].start_s == 0
    assert recs[0].captions == [["early"], ["late"]]


def test_caption_event_mismatch():
    with pytest.raises(ValidationError, match="caption/event mismatch"):
        records_from_json({"v": {"timestamps": [[0, 1]], "sentences": ["a", "b"]}})


def test_overlap_and_malformed_fields_name_the_video():
    with pytest.raises(ValidationError, match="v9.*overlapping"):
        records_from_json({"v9": {"timestamps": [[0, 3], [2, 4]]}})
    with pytest.raises(ValidationError, match="v2.*timestamps"):
        records_from_json({"v2": {"sentences": []}})
    with pytest.raises(ValidationError, match="start >= end"):
        records_from_json({"v3": {"timestamps": [[2, 2]]}})


def test_dataset_round_trip(tmp_path, toy):
    records = toy[0]
    save_dataset(records, tmp_path / "d.json")
    assert load_dataset(tmp_path / "d.json") == records


def test_bundle_round_trip_and_relation_validation(tmp_path, toy):
    bundles = toy[2][:5]
    save_bundles(bundles, tmp_path / "b.jsonl")
    back = load_bundles(tmp_path / "b.jsonl")
    assert [back[b.video_id] for b in bundles] == bundles
    with pytest.raises(ValidationError, match="unknown relation"):
        event_annotation_from_dict({"event_index": 0, "commonsense": [["run", "isFriendOf", ["x"]]]})
    with pytest.raises(ValidationError, match="more than 5 tails"):
        event_annotation_from_dict({"event_index": 0, "commonsense": [["run", "xNeed", list("abcdef")]]})
    with pytest.raises(ValidationError, match="outside"):
        event_annotation_from_dict({"event_index": 0, "action_preds": [["run", 1.5]]})


def test_relation_sets():
    assert len(RelationToken) == 16
    assert {r.value for r in RelationToken} - {r.value for r in VF_RELATIONS} == {
        "isAfter", "isBefore", "MadeUpOf", "ObjectUse", "HasProperty"}
    assert {r.value for r in RelationToken} - {r.value for r in ASR_RELATIONS} == {
        "xReact", "oReact", "xAttr", "xWant", "oWant"}


def test_feature_round_trip_and_layout(tmp_path):
    rng = np.random.default_rng(0)
    seq = VisualFeatureSeq("vid", [rng.normal(size=(3, 4)).astype(np.float32),
                                   rng.normal(size=(2, 4)).astype(np.float32)])
    save_features(seq, tmp_path)
    raw = np.frombuffer((tmp_path / "vid.f32").read_bytes(), dtype="<f4").reshape(5, 4)
    np.testing.assert_array_equal(raw[3:], seq.events[1])
    back = load_features(tmp_path, "vid")
    for a, b in zip(back.events, seq.events):
        np.testing.assert_array_equal(a, b)
    with pytest.raises(ValidationError, match="non-finite"):
        VisualFeatureSeq("x", [np.array([[np.nan]])])


# --------------------------------------------------------------------------- vocabulary

def _rec(*sentences):
    return records_from_json({"v": {"timestamps": [[i, i + 1] for i in range(len(sentences))],
                                    "sentences": list(sentences)}})[0]


def test_vocab_threshold_and_case_folding():
    v = build_vocabulary([_rec("a a b")], min_count=2)
    assert "a" in v and "b" not in v
    assert "run" in build_vocabulary([_rec("Run run RUN")], min_count=3)
    v1 = build_vocabulary([_rec("x y z")], min_count=1)
    assert len(v1) == 3 + len(SPECIAL_TOKENS)
    assert v1.itos[: len(SPECIAL_TOKENS)] == list(SPECIAL_TOKENS)
    assert v1.lookup("never") == v1.unk_id
    with pytest.raises(ValueError, match="empty caption corpus"):
        build_vocabulary([], 1)


def test_vocab_stable_and_serializable(toy):
    a, b = build_vocabulary(toy[0]), build_vocabulary(toy[0])
    assert a.itos == b.itos and a.digest() == b.digest()
    assert Vocabulary.from_dict(a.to_dict()) == a


# --------------------------------------------------------------------------- text embedding

@given(st.text(max_size=40))
def test_embedder_unit_norm_and_pure(text):
    e = HashingTextEmbedder(32)
    v = e.embed(text)
    assert abs(np.linalg.norm(v) - 1) < 1e-6
    np.testing.assert_array_equal(v, HashingTextEmbedder(32).embed(text))


def _lev_oracle(a, b):
    if not a:
        return len(b)
    if not b:
        return len(a)
    return min(_lev_oracle(a[1:], b) + 1, _lev_oracle(a, b[1:]) + 1,
               _lev_oracle(a[1:], b[1:]) + (a[0] != b[0]))


@given(st.text("abc", max_size=6), st.text("abc", max_size=6))
def test_levenshtein_matches_recursive_oracle(a, b):
    assert levenshtein(a, b) == _lev_oracle(a, b)


def test_levenshtein_ratio_fixture():
    # one substitution over 14 characters
    assert levenshtein_ratio("bakes a cake", "bakes the cake") == pytest.approx(1 - 3 / 14)
    assert tokenize("He's OK, right?") == ["he", "s", "ok", "right"]


# --------------------------------------------------------------------------- toy generator

def test_toy_deterministic_and_shaped():
    a, b = generate_toy_dataset(seed=3, n_videos=4), generate_toy_dataset(seed=3, n_videos=4)
    assert a[0] == b[0] and a[2] == b[2]
    for fa, fb in zip(a[1], b[1]):
        assert all(np.array_equal(x, y) for x, y in zip(fa.events, fb.events))
    recs = generate_toy_dataset(seed=1, n_videos=2, n_events=3)[0]
    assert len(recs) == 2 and all(r.n_events == 3 and len(r.captions) == 3 for r in recs)


def test_toy_latent_class_recoverable(toy):
    records, features, bundles = toy
    sig = class_signatures(40)
    hits = total = 0
    for feats, bundle in zip(features, bundles):
        for m, ev in zip(feats.events, bundle.events):
            truth = max(ev.action_preds, key=lambda p: p[1])[0]
            guess = int(np.argmin(((sig - m.mean(0)) ** 2).sum(1)))
            hits += TOY_CLASSES[guess].label == truth
            total += 1
    assert hits / total >= 0.95


def test_toy_confidences_in_range(toy):
    for b in toy[2]:
        for ev in b.events:
            top = max(ev.action_preds, key=lambda p: p[1])
            assert 0.6 <= top[1] <= 1.0
