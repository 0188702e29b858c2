"""Independent oracle for the diversity report golden in data/golden.json."""
import json
import math
import sys
from collections import Counter
from itertools import combinations

SETS = {
    "copies": [["a", "b", "c", "d"]] * 3,
    "disjoint": [["a", "b"], ["c", "d"], ["e", "f"]],
    "shared prefix": [["a", "b", "c"], ["a", "b", "d"], ["a", "e", "f", "g"]],
    "repeats": [["x", "x", "x"], ["x", "y", "x", "y"], ["y", "x"]],
    "mixed lengths": [["p"], ["p", "q", "r", "s", "t", "u"], ["q", "r", "s"], ["u", "p"]],
}
VOCAB = 32


def grams(seq, n):
    return Counter(tuple(seq[i:i + n]) for i in range(len(seq) - n + 1))


def levels(comps, n):
    distinct, total = set(), 0
    for c in comps:
        g = grams(c, n)
        distinct |= set(g)
        total += sum(g.values())
    return len(distinct), total


def distinct(comps, max_n=5):
    out = 1.0
    for n in range(1, max_n + 1):
        d, t = levels(comps, n)
        if t:
            out *= d / t
    return out


def ead(comps, v=VOCAB, max_n=5):
    terms = []
    for n in range(1, max_n + 1):
        d, t = levels(comps, n)
        if t:
            terms.append(d / (v * (1 - ((v - 1) / v) ** t)))
    return sum(terms) / len(terms)


def bleu(hyp, refs, max_n=4):
    ref_len = min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
    bp = 1.0 if len(hyp) > ref_len else math.exp(1 - ref_len / len(hyp))
    logs = []
    for n in range(1, max_n + 1):
        h = grams(hyp, n)
        total = sum(h.values())
        if not total:
            continue
        clipped = sum(min(k, max(grams(r, n)[g] for r in refs)) for g, k in h.items())
        logs.append(math.log(clipped / total if clipped else 1e-9 / total))
    return bp * math.exp(sum(logs) / len(logs))


def self_bleu(comps):
    return sum(bleu(c, comps[:i] + comps[i + 1:]) for i, c in enumerate(comps)) / len(comps)


def fnv(s):
    h = 2166136261
    for ch in s.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


def embed(tokens, dim=512):
    text = " " + " ".join(tokens) + " "
    v = [0.0] * dim
    for i in range(len(text) - 2):
        v[fnv(text[i:i + 3]) % dim] += 1
    return v


def cos(a, b):
    dot = sum(x * y for x, y in zip(a, b))
    return dot / math.sqrt(sum(x * x for x in a) * sum(y * y for y in b))


def embed_cos(comps):
    pairs = list(combinations([embed(c) for c in comps], 2))
    return sum(cos(a, b) for a, b in pairs) / len(pairs)


def mean(xs):
    return sum(xs) / len(xs)


def report(pooled):
    rows = list(SETS.values())
    if pooled:
        d = [distinct(c) for c in rows]
        e = [ead(c) for c in rows]
    else:
        d = [mean([distinct([x]) for x in c]) for c in rows]
        e = [mean([ead([x]) for x in c]) for c in rows]
    return {"distinct": mean(d), "ead": mean(e), "selfbleu": mean([self_bleu(c) for c in rows]),
            "sentbert": mean([embed_cos(c) for c in rows])}


if __name__ == "__main__":
    path = sys.argv[1]
    golden = json.load(open(path))
    golden["report"] = {"vocab": VOCAB, "sets": SETS, "pooled": report(True), "per_completion": report(False)}
    with open(path, "w") as f:
        json.dump(golden, f, indent=1)
        f.write("\n")
