"""Reference BLEU-4 and CIDEr-D values for the metric tests.

BLEU comes from nltk's corpus_bleu and a direct evaluation of the formula;
CIDEr-D from pycocoevalcap and a direct TF-IDF evaluation. Both routes must
agree before a value is frozen into the C++ tests.
"""
import math
import string
from collections import Counter

from nltk.translate.bleu_score import corpus_bleu
from pycocoevalcap.cider.cider import Cider


def tok(s):
    s = s.lower()
    s = "".join(" " if c in string.punctuation else c for c in s)
    return s.split()


BLEU_CORPUS = [
    ("the cat sat on the mat", ["the cat is on the mat", "there is a cat on the mat"]),
    ("a dog runs in the park", ["a dog is running in the park", "the dog runs through a park"]),
    ("two birds fly over the blue lake today", ["two birds are flying over a blue lake", "birds fly over the lake"]),
]

CIDER_CORPUS = [
    ("a man riding a horse on a beach",
     ["a man rides a horse along the beach", "a person on horseback at the shore", "man riding horse near ocean"]),
    ("a plate of food with broccoli",
     ["a plate with broccoli and rice", "food on a white plate", "a dish of vegetables and meat"]),
    ("two dogs playing in the snow",
     ["two dogs play in snow", "dogs running through the snow", "a pair of dogs in a snowy field"]),
    ("a red bus on the street",
     ["a red double decker bus", "a bus driving down a city street", "red bus parked on the road"]),
    ("a cat sleeping on a couch",
     ["a cat asleep on the sofa", "a kitten lying on a couch", "cat resting on furniture"]),
]

CIDER_PAIR = [
    ("a dog runs on the grass", ["a dog runs on the grass"]),
    ("a red car parked outside", ["a blue boat on the water"]),
]


def ngrams(words, n):
    return Counter(tuple(words[i:i + n]) for i in range(len(words) - n + 1))


def bleu_direct(corpus):
    match = [0] * 4
    total = [0] * 4
    c_len = r_len = 0
    for cand, refs in corpus:
        c = tok(cand)
        rs = [tok(r) for r in refs]
        c_len += len(c)
        r_len += min((abs(len(r) - len(c)), len(r)) for r in rs)[1]
        for n in range(1, 5):
            cn = ngrams(c, n)
            maxref = Counter()
            for r in rs:
                for g, k in ngrams(r, n).items():
                    maxref[g] = max(maxref[g], k)
            match[n - 1] += sum(min(k, maxref[g]) for g, k in cn.items())
            total[n - 1] += max(len(c) - n + 1, 0)
    p = [m / t for m, t in zip(match, total)]
    bp = 1.0 if c_len > r_len else math.exp(1 - r_len / c_len)
    score = 0.0 if min(p) == 0 else bp * math.exp(sum(math.log(x) for x in p) / 4)
    return p, bp, score


def cider_direct(corpus, sigma=6.0):
    refs = [[tok(r) for r in rs] for _, rs in corpus]
    df = Counter()
    for rs in refs:
        seen = set()
        for r in rs:
            for n in range(1, 5):
                seen.update(ngrams(r, n).keys())
        df.update(seen)
    log_n = math.log(len(corpus))

    def vec(words):
        out = []
        for n in range(1, 5):
            v = {g: k * (log_n - math.log(max(1.0, df[g]))) for g, k in ngrams(words, n).items()}
            out.append((v, math.sqrt(sum(x * x for x in v.values()))))
        return out

    scores = []
    for (cand, _), rs in zip(corpus, refs):
        c = tok(cand)
        cv = vec(c)
        acc = [0.0] * 4
        for r in rs:
            rv = vec(r)
            delta = len(c) - len(r)
            for n in range(4):
                (hv, hn), (refv, rn) = cv[n], rv[n]
                val = sum(min(x, refv.get(g, 0.0)) * refv.get(g, 0.0) for g, x in hv.items())
                if hn != 0 and rn != 0:
                    val /= hn * rn
                acc[n] += val * math.exp(-(delta ** 2) / (2 * sigma ** 2))
        scores.append(sum(a / len(rs) for a in acc) / 4 * 10.0)
    return sum(scores) / len(scores), scores


def cider_coco(corpus):
    gts = {i: [" ".join(tok(r)) for r in rs] for i, (_, rs) in enumerate(corpus)}
    res = {i: [" ".join(tok(c))] for i, (c, _) in enumerate(corpus)}
    return Cider().compute_score(gts, res)


if __name__ == "__main__":
    refs = [[tok(r) for r in rs] for _, rs in BLEU_CORPUS]
    hyps = [tok(c) for c, _ in BLEU_CORPUS]
    p, bp, score = bleu_direct(BLEU_CORPUS)
    nl = corpus_bleu(refs, hyps)
    print("bleu precisions", [repr(x) for x in p], "bp", repr(bp))
    print("bleu direct", repr(score), "nltk", repr(nl), "diff", abs(score - nl))
    for name, corpus in (("cider5", CIDER_CORPUS), ("cider2", CIDER_PAIR)):
        d, ds = cider_direct(corpus)
        c, cs = cider_coco(corpus)
        print(name, "direct", repr(d), "coco", repr(c), "diff", abs(d - c))
        print(name, "per-image", [repr(x) for x in ds])
