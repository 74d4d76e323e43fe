"""Independent reference implementations used as test oracles.

These deliberately do NOT import the code paths they check (beyond shared
third-party libraries); each is a from-scratch restatement of the
documented contract.
"""

import math
from collections import Counter

import numpy as np


def reference_permute(tokens, p, seed):
    """Reference pair-swap shuffle: lexicographic pairs, PCG64 permutation
    prefix of floor(p * C(L,2)) pair indices, swaps applied in that order."""
    toks = list(tokens)
    length = len(toks)
    if length <= 1:
        return toks
    pairs = []
    for i in range(length):
        for j in range(i + 1, length):
            pairs.append((i, j))
    m = math.floor(p * len(pairs))
    gen = np.random.default_rng(seed)
    chosen = list(gen.permutation(len(pairs)))[:m]
    for k in chosen:
        i, j = pairs[k]
        toks[i], toks[j] = toks[j], toks[i]
    return toks


def kendall_tau_distance(order_a, order_b):
    """Number of discordant pairs between two orderings of the same items
    (items assumed distinct)."""
    pos = {item: i for i, item in enumerate(order_b)}
    ranks = [pos[item] for item in order_a]
    inversions = 0
    for i in range(len(ranks)):
        for j in range(i + 1, len(ranks)):
            if ranks[i] > ranks[j]:
                inversions += 1
    return inversions


def recount_words(sentences):
    """One-pass recount of whitespace word frequencies and lengths."""
    counts = Counter()
    lengths = Counter()
    for s in sentences:
        ws = s.split()
        for w in ws:
            counts[w] += 1
        lengths[len(ws)] += 1
    return counts, lengths


def best_segmentation_bruteforce(text, logp, unk_logp):
    """Enumerate all 2^(n-1) segmentations; return (best_score, pieces).

    A piece scores logp[piece] when present; single unknown characters
    score unk_logp; any multi-character piece absent from the vocabulary
    is an invalid segmentation.
    """
    n = len(text)
    if n == 0:
        return 0.0, []
    best = (-math.inf, None)
    for mask in range(1 << (n - 1)):
        cuts = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
        score = 0.0
        pieces = []
        ok = True
        for a, b in zip(cuts, cuts[1:]):
            piece = text[a:b]
            if piece in logp:
                score += logp[piece]
            elif len(piece) == 1:
                score += unk_logp
            else:
                ok = False
                break
            pieces.append(piece)
        if ok and score > best[0]:
            best = (score, pieces)
    return best


def crf_enumerate(emissions, transitions, start, end):
    """Brute-force log partition and best path over all K^L tag sequences."""
    length, k = emissions.shape
    scores = []
    best_score, best_path = -math.inf, None
    stack = [([], 0.0)]
    for path_len in range(length):
        new_stack = []
        for path, score in stack:
            for tag in range(k):
                s = score + emissions[path_len, tag]
                if path:
                    s += transitions[path[-1], tag]
                else:
                    s += start[tag]
                new_stack.append((path + [tag], s))
        stack = new_stack
    for path, score in stack:
        total = score + end[path[-1]]
        scores.append(total)
        if total > best_score:
            best_score, best_path = total, path
    arr = np.array(scores, dtype=np.float64)
    m = arr.max()
    log_z = m + math.log(np.exp(arr - m).sum())
    return log_z, best_score, best_path
