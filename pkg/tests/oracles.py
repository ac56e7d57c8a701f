"""Brute-force reference implementations used only by the tests."""
import itertools
import math


def npmi_oracle(sentences, i, j):
    """NPMI from sentence-set membership, evaluated straight from probabilities."""
    sets = [set(s) for s in sentences]
    n = len(sets)
    p_i = sum(i in s for s in sets) / n
    p_j = sum(j in s for s in sets) / n
    p_ij = sum(i in s and j in s for s in sets) / n
    if p_ij == 0:
        return float("-inf")
    if p_ij == 1:
        return 1.0
    return math.log(p_ij / (p_i * p_j)) / -math.log(p_ij)


def _grams(tokens, n):
    out = {}
    for k in range(len(tokens) - n + 1):
        g = " ".join(tokens[k:k + n])
        out[g] = out.get(g, 0) + 1
    return out


def cider_oracle(cands, refs, n_max=4, sigma=6.0):
    """CIDEr-D written from the metric definition with explicit loops over n-gram strings."""
    vids = sorted(cands)
    n_docs = len(vids)
    doc_freq = {}
    for v in vids:
        seen = set()
        for r in refs[v]:
            for n in range(1, n_max + 1):
                seen |= {(n, g) for g in _grams(r, n)}
        for key in seen:
            doc_freq[key] = doc_freq.get(key, 0) + 1

    def tfidf(tokens, n):
        return {g: c * (math.log(n_docs) - math.log(max(1, doc_freq.get((n, g), 0))))
                for g, c in _grams(tokens, n).items()}

    def norm(vec):
        return math.sqrt(sum(x * x for x in vec.values()))

    scores = {}
    for v in vids:
        c = cands[v]
        total = 0.0
        for r in refs[v]:
            per_n = 0.0
            for n in range(1, n_max + 1):
                vc, vr = tfidf(c, n), tfidf(r, n)
                dot = 0.0
                for g in vc:
                    if g in vr:
                        dot += min(vc[g], vr[g]) * vr[g]
                nc, nr = norm(vc), norm(vr)
                if nc > 0 and nr > 0:
                    dot /= nc * nr
                per_n += dot * math.exp(-((len(c) - len(r)) ** 2) / (2 * sigma ** 2))
            total += per_n / n_max
        scores[v] = 10.0 * total / len(refs[v])
    return sum(scores.values()) / len(scores), scores


def best_two_partition_cost(points):
    """Minimum within-cluster sum of squares over every split into two non-empty groups."""
    import numpy as np
    pts = np.asarray(points, dtype=float)
    best, best_split = float("inf"), None
    idx = range(len(pts))
    for r in range(1, len(pts)):
        for group in itertools.combinations(idx, r):
            a = pts[list(group)]
            b = pts[[k for k in idx if k not in group]]
            cost = ((a - a.mean(0)) ** 2).sum() + ((b - b.mean(0)) ** 2).sum()
            if cost < best:
                best, best_split = cost, frozenset(group)
    return best, best_split
