"""Tokenization, vocabulary and text embedding providers."""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from functools import lru_cache
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

PAD, BOS, EOS, UNK, CLS, SEP = "[PAD]", "[BOS]", "[EOS]", "[UNK]", "[CLS]", "[SEP]"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK, CLS, SEP)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    """Dense token/id map with the special tokens first."""

    def __init__(self, tokens: Sequence[str], min_count: int = 3):
        self.min_count = min_count
        self.itos: list[str] = list(SPECIAL_TOKENS)
        for tok in tokens:
            if tok in SPECIAL_TOKENS:
                continue
            self.itos.append(tok)
        self.stoi = {tok: i for i, tok in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate tokens in vocabulary")

    pad_id = property(lambda self: self.stoi[PAD])
    bos_id = property(lambda self: self.stoi[BOS])
    eos_id = property(lambda self: self.stoi[EOS])
    unk_id = property(lambda self: self.stoi[UNK])
    cls_id = property(lambda self: self.stoi[CLS])
    sep_id = property(lambda self: self.stoi[SEP])

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def lookup(self, token: str) -> int:
        return self.stoi.get(token, self.stoi[UNK])

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.lookup(t) for t in tokens]

    def decode(self, ids: Iterable[int], strip_special: bool = True) -> list[str]:
        out = []
        for i in ids:
            tok = self.itos[int(i)]
            if strip_special and tok in SPECIAL_TOKENS:
                continue
            out.append(tok)
        return out

    def digest(self) -> str:
        """Stable hash of the token list, stored in checkpoints."""
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()

    def to_dict(self) -> dict:
        return {"min_count": self.min_count, "tokens": self.itos[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        return cls(d["tokens"], min_count=d["min_count"])

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos


def build_vocabulary(records, min_count: int = 3) -> Vocabulary:
    """Collect caption tokens from ``records`` and keep those seen ``min_count`` times.

    Ids are assigned by descending count, then alphabetically, so the result
    only depends on the corpus and the threshold.
    """
    counts: Counter = Counter()
    for rec in records:
        for cap in rec.captions or ():
            counts.update(t.lower() for t in cap)
    if not counts:
        raise ValueError("empty caption corpus")
    kept = [t for t, c in counts.items() if c >= min_count]
    kept.sort(key=lambda t: (-counts[t], t))
    return Vocabulary(kept, min_count=min_count)


@runtime_checkable
class TextEmbedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


class HashingTextEmbedder:
    """Seeded signed feature hashing over words and character trigrams.

    Stand-in for a pretrained sentence encoder: identical text always maps to
    the same unit vector, and strings sharing words or character n-grams get
    positive cosine similarity.
    """

    def __init__(self, dim: int = 64, seed: int = 0, word_weight: float = 2.0):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self.seed = seed
        self.word_weight = word_weight
        self._key = seed.to_bytes(8, "little", signed=True)
        self._cached = lru_cache(maxsize=65536)(self._embed)

    def _features(self, text: str):
        words = tokenize(text)
        if not words:
            yield "<empty>", 1.0
            return
        for w in words:
            yield "w:" + w, self.word_weight
            padded = f"#{w}#"
            for i in range(len(padded) - 2):
                yield "c:" + padded[i:i + 3], 1.0

    def _embed(self, text: str) -> tuple:
        vec = np.zeros(self.dim)
        for feat, weight in self._features(text):
            h = hashlib.blake2b(feat.encode("utf-8"), digest_size=8, key=self._key).digest()
            v = int.from_bytes(h, "little")
            sign = 1.0 if (v >> 63) & 1 else -1.0
            vec[v % self.dim] += sign * weight
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            # every feature cancelled out; fall back to a fixed axis
            vec[0] = 1.0
            norm = 1.0
        return tuple(vec / norm)

    def embed(self, text: str) -> np.ndarray:
        return np.array(self._cached(text))

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dim))
        return np.stack([self.embed(t) for t in texts])

    def get_params(self) -> dict:
        return {"dim": self.dim, "seed": self.seed, "word_weight": self.word_weight}

    def __getstate__(self):
        return self.get_params()

    def __setstate__(self, state):
        self.__init__(**state)

    def __repr__(self) -> str:
        return f"HashingTextEmbedder(dim={self.dim}, seed={self.seed})"


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def levenshtein(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_ratio(a: str, b: str) -> float:
    """``1 - distance / max(len)``; two empty strings count as identical."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def load_glove(path, vocab: Vocabulary, dim: int = 300, seed: int = 0) -> np.ndarray:
    """Word-vector matrix for ``vocab`` from a GloVe-style text file.

    Tokens missing from the file keep a seeded random initialisation.
    """
    rng = np.random.default_rng(seed)
    mat = rng.normal(0.0, 0.1, size=(len(vocab), dim))
    mat[vocab.pad_id] = 0.0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip().split(" ")
            if len(parts) != dim + 1:
                continue
            if parts[0] in vocab.stoi:
                mat[vocab.stoi[parts[0]]] = np.asarray(parts[1:], dtype=float)
    return mat
