import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gemvpc.metrics import (MetricReport, bleu4, cider, div2, div2_single, evaluate, meteor_lite,
                            meteor_single, rep4_single, rouge_l, rouge_l_single, stem)
from oracles import cider_oracle


def one(text):
    return {"v": text.split()}


def test_bleu_fixture():
    assert bleu4(one("a b c d e"), one("a b c d f")) == pytest.approx(0.2 ** 0.25, abs=1e-12)
    assert round(bleu4(one("a b c d e"), one("a b c d f")), 4) == 0.6687
    assert bleu4(one("a b c"), one("a b c")) == 0.0  # no 4-gram
    assert bleu4(one("x y z w"), one("x y z w")) == 1.0


def test_bleu_brevity_penalty():
    full = bleu4(one("a b c d e f"), one("a b c d e f g h"))
    assert full == pytest.approx(np.exp(1 - 8 / 6))


def test_rouge_fixture():
    assert rouge_l(one("a b d e"), one("a b c d e")) == pytest.approx(2.44 * 0.8 / (0.8 + 1.44))
    assert round(rouge_l(one("a b d e"), one("a b c d e")), 4) == 0.8714
    assert rouge_l_single([], ["a"]) == 0.0


def test_meteor_fixture_and_stemming():
    assert meteor_single("a b c d".split(), "a b c d".split()) == pytest.approx(1 - 0.5 / 64)
    assert round(meteor_lite(one("a b c d"), one("a b c d")), 4) == 0.9922
    assert stem("running") == "runn" and stem("cities") == "city" and stem("is") == "is"
    assert meteor_single(["jumps"], ["jumped"]) > 0
    # two chunks: fragmentation penalty 0.5 * (2/2)^3
    assert meteor_single("a b".split(), "b a".split()) == pytest.approx(0.5)


def test_div2_and_rep4_fixtures():
    assert div2_single([["a", "b", "a", "b"]]) == pytest.approx(200 / 3)
    assert rep4_single([["a", "b", "c"]]) == 0.0
    assert rep4_single([list("abcdabcd")]) == pytest.approx(100 * 1 / 5)
    assert rep4_single([list("abcdabcd")], variant="repeated") == pytest.approx(100 * 2 / 5)
    # n-grams never straddle a sentence boundary
    assert div2_single([["a", "b"], ["b", "a"]]) == 100.0


@given(st.lists(st.sampled_from("abcde"), min_size=4, max_size=10))
def test_repeating_a_sentence(sentence):
    once, twice = [sentence], [sentence, sentence]
    assert div2_single(twice) == pytest.approx(div2_single(once) / 2)
    grams = {tuple(sentence[i:i + 4]) for i in range(len(sentence) - 3)}
    n = len(sentence) - 3
    assert rep4_single(twice) == pytest.approx(100 * (2 * n - len(grams)) / (2 * n))


words = st.lists(st.sampled_from("abcdef"), min_size=0, max_size=8)
corpora = st.integers(1, 5).flatmap(lambda n: st.tuples(
    st.lists(words, min_size=n, max_size=n),
    st.lists(st.lists(words, min_size=1, max_size=3), min_size=n, max_size=n)))


@given(corpora)
@settings(max_examples=200)
def test_cider_matches_oracle(corpus):
    cands_l, refs_l = corpus
    cands = {f"v{i}": c for i, c in enumerate(cands_l)}
    refs = {f"v{i}": r for i, r in enumerate(refs_l)}
    # each reference is its own one-sentence paragraph
    paragraphs = {k: [[r] for r in rs] for k, rs in refs.items()}
    mean, per = cider(cands, paragraphs, per_video=True)
    o_mean, o_per = cider_oracle(cands, refs)
    assert abs(mean - o_mean) < 1e-9
    assert all(abs(per[k] - o_per[k]) < 1e-9 for k in cands)


@given(corpora, st.randoms())
@settings(max_examples=50)
def test_corpus_metrics_ignore_video_order(corpus, rnd):
    cands_l, refs_l = corpus
    keys = [f"v{i}" for i in range(len(cands_l))]
    cands = dict(zip(keys, cands_l))
    refs = {k: [[r] for r in rs] for k, rs in zip(keys, refs_l)}
    shuffled = list(keys)
    rnd.shuffle(shuffled)
    c2, r2 = {k: cands[k] for k in shuffled}, {k: refs[k] for k in reversed(shuffled)}
    for fn in (bleu4, cider, rouge_l, meteor_lite):
        assert fn(cands, refs) == fn(c2, r2)


def test_identity_scores_maximal():
    refs = {"v1": [["a", "man", "surfs"]], "v2": [["a", "dog", "runs", "fast"]]}
    same = {k: r[0] for k, r in refs.items()}
    other = {"v1": ["a", "man", "runs"], "v2": ["a", "dog", "surfs", "fast"]}
    assert rouge_l(same, refs) == 1.0
    assert cider(same, refs) >= cider(other, refs)
    assert evaluate(same, refs).rouge_l == 100.0


def test_missing_references_and_empty_corpus():
    with pytest.raises(KeyError):
        bleu4({"a": ["x"]}, {"b": [["x"]]})
    with pytest.raises(ValueError):
        cider({}, {})


def test_report_round_trip(tmp_path):
    cands = {"v1": [["a", "b", "c", "d"]], "v2": [["e", "f", "g", "h"]]}
    refs = {"v1": [["a", "b", "c", "d"]], "v2": [["e", "f", "x", "h"]]}
    rep = evaluate(cands, refs, {"v1": "Sports"})
    assert set(rep.per_category) == {"Sports", "unknown"} and rep.n_videos == 2
    rep.save(tmp_path / "r.json")
    rep.save_category_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("category,n_videos") and len(lines) == 3
    assert isinstance(rep, MetricReport) and rep.per_video["v1"]["rouge_l"] == 100.0
    assert div2(cands) == 100.0
