"""Paragraph-level caption metrics: BLEU-4, METEOR-lite, CIDEr-D, ROUGE-L, Div2, R4.

Inputs are keyed by video id. A candidate is a list of event captions (each a
token list); references are one such list or several. Event captions are
joined into one paragraph per video before scoring, except for Div2/R4,
which count n-grams inside each sentence.
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

BLEU_N = 4
CIDER_N = 4
CIDER_SIGMA = 6.0
ROUGE_BETA = 1.2
METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA = 0.9, 3.0, 0.5


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _flatten(sentences) -> list[str]:
    """A paragraph given as a token list or as a list of token lists."""
    if sentences and isinstance(sentences[0], (list, tuple)):
        return [tok for s in sentences for tok in s]
    return list(sentences)


def _as_sentences(sentences) -> list[list[str]]:
    if sentences and isinstance(sentences[0], (list, tuple)):
        return [list(s) for s in sentences]
    return [list(sentences)]


def _references(refs) -> list[list[str]]:
    """Normalise one or many reference paragraphs to a list of flat token lists."""
    if not refs:
        return [[]]
    first = refs[0]
    if isinstance(first, str):
        return [list(refs)]
    if first and isinstance(first[0], (list, tuple)):
        return [_flatten(r) for r in refs]
    return [_flatten(refs)]


def _paired(candidates: Mapping, references: Mapping):
    if not candidates:
        raise ValueError("empty candidate corpus")
    missing = set(candidates) - set(references)
    if missing:
        raise KeyError(f"no references for {sorted(missing)[:3]}")
    keys = sorted(candidates)
    return keys, [_flatten(candidates[k]) for k in keys], [_references(references[k]) for k in keys]


# --------------------------------------------------------------------------- BLEU

def bleu4(candidates: Mapping, references: Mapping) -> float:
    """Corpus BLEU-4: clipped n-gram precisions, geometric mean, brevity penalty, no smoothing."""
    _, cands, refs = _paired(candidates, references)
    match, total = [0] * BLEU_N, [0] * BLEU_N
    cand_len = ref_len = 0
    for cand, rs in zip(cands, refs):
        cand_len += len(cand)
        ref_len += min((abs(len(r) - len(cand)), len(r)) for r in rs)[1]
        for n in range(1, BLEU_N + 1):
            c = ngrams(cand, n)
            max_ref = Counter()
            for r in rs:
                max_ref |= ngrams(r, n)
            match[n - 1] += sum(min(v, max_ref[g]) for g, v in c.items())
            total[n - 1] += max(len(cand) - n + 1, 0)
    if cand_len == 0 or min(match) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(match, total)) / BLEU_N
    bp = 1.0 if cand_len > ref_len else math.exp(1 - ref_len / cand_len)
    return bp * math.exp(log_p)


# --------------------------------------------------------------------------- ROUGE-L

def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l_single(cand, ref, beta: float = ROUGE_BETA) -> float:
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return (1 + beta ** 2) * p * r / (r + beta ** 2 * p)


def rouge_l(candidates: Mapping, references: Mapping, per_video: bool = False):
    keys, cands, refs = _paired(candidates, references)
    scores = [max(rouge_l_single(c, r) for r in rs) for c, rs in zip(cands, refs)]
    mean = sum(scores) / len(scores)
    return (mean, dict(zip(keys, scores))) if per_video else mean


# --------------------------------------------------------------------------- CIDEr-D

def _cider_vec(tokens, df, log_n):
    vec, norm = [], []
    for n in range(1, CIDER_N + 1):
        v = {g: tf * (log_n - math.log(max(1.0, df[g]))) for g, tf in ngrams(tokens, n).items()}
        vec.append(v)
        norm.append(math.sqrt(sum(x * x for x in v.values())))
    return vec, norm


def cider(candidates: Mapping, references: Mapping, per_video: bool = False):
    """CIDEr-D with document frequencies from the reference corpus; range [0, 10]."""
    keys, cands, refs = _paired(candidates, references)
    df = Counter()
    for rs in refs:
        df.update({g for r in rs for n in range(1, CIDER_N + 1) for g in ngrams(r, n)})
    log_n = math.log(float(len(refs)))
    scores = []
    for cand, rs in zip(cands, refs):
        cv, cn = _cider_vec(cand, df, log_n)
        acc = 0.0
        for r in rs:
            rv, rn = _cider_vec(r, df, log_n)
            delta = len(cand) - len(r)
            sims = []
            for n in range(CIDER_N):
                val = sum(min(x, rv[n][g]) * rv[n][g] for g, x in cv[n].items() if g in rv[n])
                if cn[n] != 0 and rn[n] != 0:
                    val /= cn[n] * rn[n]
                sims.append(val * math.exp(-(delta ** 2) / (2 * CIDER_SIGMA ** 2)))
            acc += sum(sims) / CIDER_N
        scores.append(10.0 * acc / len(rs))
    mean = sum(scores) / len(scores)
    return (mean, dict(zip(keys, scores))) if per_video else mean


# --------------------------------------------------------------------------- METEOR-lite

_SUFFIXES = ("ingly", "edly", "ing", "ies", "ied", "ed", "es", "ly", "s")


def stem(word: str) -> str:
    """Fixed suffix stripper; keeps at least three characters of stem."""
    for suf in _SUFFIXES:
        if word.endswith(suf) and len(word) - len(suf) >= 3:
            base = word[: -len(suf)]
            if suf in ("ies", "ied"):
                base += "y"
            return base
    return word


def _align(cand, ref):
    """Exact matches first, then stem matches; left-to-right, first free position."""
    used, pairs = set(), {}
    for key in (lambda w: w, stem):
        for i, w in enumerate(cand):
            if i in pairs:
                continue
            kw = key(w)
            for j, r in enumerate(ref):
                if j not in used and key(r) == kw:
                    pairs[i] = j
                    used.add(j)
                    break
    return sorted(pairs.items())


def meteor_single(cand, ref) -> float:
    pairs = _align(cand, ref)
    m = len(pairs)
    if m == 0:
        return 0.0
    p, r = m / len(cand), m / len(ref)
    f_mean = p * r / (METEOR_ALPHA * p + (1 - METEOR_ALPHA) * r)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    penalty = METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    return f_mean * (1 - penalty)


def meteor_lite(candidates: Mapping, references: Mapping, per_video: bool = False):
    keys, cands, refs = _paired(candidates, references)
    scores = [max(meteor_single(c, r) for r in rs) for c, rs in zip(cands, refs)]
    mean = sum(scores) / len(scores)
    return (mean, dict(zip(keys, scores))) if per_video else mean


# --------------------------------------------------------------------------- diversity

def _sentence_ngrams(paragraph, n):
    grams = []
    for s in _as_sentences(paragraph):
        grams += [tuple(s[i:i + n]) for i in range(len(s) - n + 1)]
    return grams


def div2_single(paragraph) -> float:
    grams = _sentence_ngrams(paragraph, 2)
    return 100.0 * len(set(grams)) / len(grams) if grams else 0.0


def rep4_single(paragraph, variant: str = "distinct") -> float:
    """Share of repeated 4-grams, ``(total - distinct) / total`` by default.

    ``variant="repeated"`` instead counts the occurrences whose 4-gram appears
    more than once in the paragraph.
    """
    grams = _sentence_ngrams(paragraph, 4)
    if not grams:
        return 0.0
    if variant == "repeated":
        counts = Counter(grams)
        return 100.0 * sum(c for c in counts.values() if c > 1) / len(grams)
    return 100.0 * (len(grams) - len(set(grams))) / len(grams)


def div2(paragraphs) -> float:
    items = list(paragraphs.values()) if isinstance(paragraphs, Mapping) else list(paragraphs)
    return sum(div2_single(p) for p in items) / len(items)


def rep4(paragraphs, variant: str = "distinct") -> float:
    items = list(paragraphs.values()) if isinstance(paragraphs, Mapping) else list(paragraphs)
    return sum(rep4_single(p, variant) for p in items) / len(items)


# --------------------------------------------------------------------------- report

@dataclass
class MetricReport:
    """Scores on the percentage scale (BLEU/METEOR/ROUGE/CIDEr x100; Div2/R4 already 0-100)."""

    bleu4: float
    meteor: float
    cider: float
    rouge_l: float
    div2: float
    rep4: float
    n_videos: int
    per_video: dict = field(default_factory=dict)
    per_category: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    def save_category_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["category", "n_videos", "bleu4", "meteor", "cider", "rouge_l", "sum"])
            for cat in sorted(self.per_category):
                row = self.per_category[cat]
                w.writerow([cat, row["n_videos"], *(f"{row[k]:.4f}" for k in
                                                     ("bleu4", "meteor", "cider", "rouge_l", "sum"))])


def evaluate(candidates: Mapping, references: Mapping,
             categories: Optional[Mapping] = None) -> MetricReport:
    keys = sorted(candidates)
    b4 = bleu4(candidates, references)
    m, m_vid = meteor_lite(candidates, references, per_video=True)
    c, c_vid = cider(candidates, references, per_video=True)
    r, r_vid = rouge_l(candidates, references, per_video=True)
    per_video = {}
    for k in keys:
        per_video[k] = {
            "bleu4": 100 * bleu4({k: candidates[k]}, {k: references[k]}),
            "meteor": 100 * m_vid[k], "cider": 100 * c_vid[k], "rouge_l": 100 * r_vid[k],
            "div2": div2_single(candidates[k]), "rep4": rep4_single(candidates[k]),
        }
    per_category = {}
    if categories:
        groups = defaultdict(list)
        for k in keys:
            groups[categories.get(k) or "unknown"].append(k)
        for cat, ks in groups.items():
            sub_c = {k: candidates[k] for k in ks}
            sub_r = {k: references[k] for k in ks}
            row = {"n_videos": len(ks), "bleu4": 100 * bleu4(sub_c, sub_r),
                   "meteor": 100 * meteor_lite(sub_c, sub_r), "cider": 100 * cider(sub_c, sub_r),
                   "rouge_l": 100 * rouge_l(sub_c, sub_r)}
            row["sum"] = row["bleu4"] + row["meteor"] + row["cider"] + row["rouge_l"]
            per_category[cat] = row
    return MetricReport(100 * b4, 100 * m, 100 * c, 100 * r, div2(candidates), rep4(candidates),
                        len(keys), per_video, per_category)
