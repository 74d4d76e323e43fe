"""Deterministic corpus transformations for controlled bilingual ablations.

Three families of transforms, all pure functions of their inputs:

* a character bijection that rewrites a corpus into a disjoint script
  ("fake" language: same structure, zero shared vocabulary),
* word-order destruction by swapping a sampled fraction of token pairs,
* frequency-only synthesis that keeps unigram statistics and sentence
  lengths but nothing else.

Corpus file format: UTF-8 plain text, one sentence per line, a blank
line between documents.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Protocol, Sequence, Tuple

import numpy as np

from .numcore import derive_seed

_SURROGATE_LO, _SURROGATE_HI = 0xD800, 0xDFFF
_MAX_SCALAR = 0x10FFFF


def _is_noncharacter(cp: int) -> bool:
    return 0xFDD0 <= cp <= 0xFDEF or (cp & 0xFFFE) == 0xFFFE


# ---------------------------------------------------------------------------
# Corpus
# ---------------------------------------------------------------------------

@dataclass
class Corpus:
    """Ordered documents of sentences; the substrate of every ablation."""

    documents: List[List[str]]

    def sentences(self) -> Iterator[str]:
        for doc in self.documents:
            yield from doc

    @property
    def n_sentences(self) -> int:
        return sum(len(doc) for doc in self.documents)

    @property
    def n_documents(self) -> int:
        return len(self.documents)

    def words(self) -> Iterator[str]:
        for sent in self.sentences():
            yield from sent.split()


def normalize_sentence(text: str) -> str:
    """NFC-normalize and collapse runs of whitespace to single spaces."""
    return " ".join(unicodedata.normalize("NFC", text).split())


def normalize_corpus(documents: Iterable[Iterable[str]]) -> Corpus:
    """Normalize every sentence, dropping sentences and documents left empty."""
    docs: List[List[str]] = []
    for doc in documents:
        norm = [s for s in (normalize_sentence(x) for x in doc) if s]
        if norm:
            docs.append(norm)
    for sent in (s for d in docs for s in d):
        for ch in sent:
            cp = ord(ch)
            if _SURROGATE_LO <= cp <= _SURROGATE_HI or _is_noncharacter(cp):
                raise ValueError(f"corpus contains invalid code point U+{cp:04X}")
    return Corpus(docs)


def load_corpus(path) -> Corpus:
    text = Path(path).read_text(encoding="utf-8")
    docs: List[List[str]] = []
    current: List[str] = []
    for line in text.split("\n"):
        if line.strip():
            current.append(line)
        elif current:
            docs.append(current)
            current = []
    if current:
        docs.append(current)
    return normalize_corpus(docs)


def save_corpus(corpus: Corpus, path) -> None:
    blocks = ["\n".join(doc) for doc in corpus.documents]
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Fake language (character bijection)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharBijection:
    """Injective code-point shift onto a range disjoint from the source.

    Code points inside [source_lo, source_hi] move by `shift`; anything
    outside is first replaced by `placeholder` (then shifted), so the
    output alphabet never intersects the input alphabet.  The default
    lands in the BMP private-use area: above the surrogates and below
    U+FFFE/U+FFFF.
    """

    shift: int = 0xE000
    source_lo: int = 0x0020
    source_hi: int = 0x1FFD
    placeholder: int = 0x0001

    def __post_init__(self):
        if self.source_lo > self.source_hi:
            raise ValueError("empty source range")
        lo, hi = self.source_lo + self.shift, self.source_hi + self.shift
        for cp in (lo, hi, self.placeholder + self.shift):
            if cp > _MAX_SCALAR:
                raise ValueError(f"image code point U+{cp:X} beyond Unicode")
        if lo <= _SURROGATE_HI and hi >= _SURROGATE_LO:
            raise ValueError("image range overlaps the surrogate block")
        if lo <= self.source_hi and hi >= self.source_lo:
            raise ValueError("image range overlaps the source range")
        for cp in (lo, hi, self.placeholder + self.shift):
            if _is_noncharacter(cp):
                raise ValueError(f"image includes noncharacter U+{cp:04X}")
        if self.source_lo <= self.placeholder <= self.source_hi:
            raise ValueError("placeholder must lie outside the source range")

    def map_char(self, ch: str) -> str:
        cp = ord(ch)
        if not (self.source_lo <= cp <= self.source_hi):
            cp = self.placeholder
        out = cp + self.shift
        if _is_noncharacter(out) or _SURROGATE_LO <= out <= _SURROGATE_HI:
            raise ValueError(f"U+{ord(ch):04X} would map to invalid code point U+{out:04X}")
        return chr(out)

    def unmap_char(self, ch: str) -> str:
        cp = ord(ch) - self.shift
        if cp < 0 or cp > _MAX_SCALAR:
            raise ValueError(f"U+{ord(ch):04X} is not in the bijection image")
        return chr(cp)

    def map_text(self, text: str) -> str:
        """Shift the characters of every word; inter-word spaces are corpus
        structure, not content, and survive so the image stays segmentable."""
        return " ".join("".join(self.map_char(c) for c in w) for w in text.split())

    def unmap_text(self, text: str) -> str:
        return " ".join("".join(self.unmap_char(c) for c in w) for w in text.split())


def make_fake_language(corpus: Corpus, bijection: CharBijection = CharBijection()) -> Corpus:
    """Rewrite every sentence through the bijection; structure is unchanged."""
    docs = [[bijection.map_text(s) for s in doc] for doc in corpus.documents]
    return Corpus(docs)


def invert_fake_language(corpus: Corpus, bijection: CharBijection = CharBijection()) -> Corpus:
    docs = [[bijection.unmap_text(s) for s in doc] for doc in corpus.documents]
    return Corpus(docs)


def corpus_alphabet(corpus: Corpus) -> set:
    """Content code points (word characters; separating spaces excluded)."""
    return {ch for sent in corpus.sentences() for word in sent.split() for ch in word}


# ---------------------------------------------------------------------------
# Word-order destruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PermutationSpec:
    """Fraction p of the C(L,2) token pairs to swap, and the master seed."""

    p: float
    seed: int

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0):
            raise ValueError(f"p must be in [0, 1], got {self.p}")


class TokenizerHandle(Protocol):
    def encode_pieces(self, text: str) -> List[str]: ...

    def join_pieces(self, pieces: Sequence[str]) -> str: ...


class WhitespaceHandle:
    """Trivial tokenizer handle: whitespace words."""

    def encode_pieces(self, text: str) -> List[str]:
        return text.split()

    def join_pieces(self, pieces: Sequence[str]) -> str:
        return " ".join(pieces)


def permute_sentence(tokens: Sequence, spec: PermutationSpec) -> List:
    """Swap floor(p * C(L,2)) distinct index pairs, in sampled order.

    The sampling procedure is part of the contract (reruns and any
    reimplementation must agree exactly): enumerate pairs (i, j), i < j,
    in lexicographic order; draw a permutation of the pair indices from
    numpy's default PCG64 generator seeded with `spec.seed`; apply the
    first floor(p * C(L,2)) swaps in that order.
    """
    out = list(tokens)
    n = len(out)
    if n <= 1:
        return out
    n_pairs = n * (n - 1) // 2
    m = math.floor(spec.p * n_pairs)
    if m == 0:
        return out
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    order = np.random.default_rng(spec.seed).permutation(n_pairs)[:m]
    for k in order:
        i, j = pairs[k]
        out[i], out[j] = out[j], out[i]
    return out


def permute_corpus(corpus: Corpus, tokenizer: TokenizerHandle, spec: PermutationSpec) -> Corpus:
    """Permute every sentence with its own seed derived from (seed, doc, sent).

    Deterministic for a given (corpus, spec) regardless of how iteration
    is parallelized, because each sentence seed depends only on indices.
    """
    docs: List[List[str]] = []
    for di, doc in enumerate(corpus.documents):
        new_doc = []
        for si, sent in enumerate(doc):
            pieces = tokenizer.encode_pieces(sent)
            sent_spec = PermutationSpec(spec.p, derive_seed(spec.seed, "permute", di, si))
            new_doc.append(tokenizer.join_pieces(permute_sentence(pieces, sent_spec)))
        docs.append(new_doc)
    return Corpus(docs)


# ---------------------------------------------------------------------------
# Frequency-only synthesis
# ---------------------------------------------------------------------------

@dataclass
class UnigramTable:
    """Word counts plus the sentence-length histogram of a corpus."""

    counts: Dict[str, int]
    total: int
    length_histogram: Dict[int, int]

    def __post_init__(self):
        if self.total != sum(self.counts.values()):
            raise ValueError("total does not match the sum of counts")
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("all counts must be >= 1")
        if any(k < 1 for k in self.length_histogram):
            raise ValueError("length histogram keys must be >= 1")


def collect_unigram_table(corpus: Corpus) -> UnigramTable:
    """Whitespace-word counts and sentence lengths over the whole corpus."""
    if corpus.n_sentences == 0:
        raise ValueError("cannot collect a unigram table from an empty corpus")
    counts: Counter = Counter()
    lengths: Counter = Counter()
    for sent in corpus.sentences():
        words = sent.split()
        counts.update(words)
        lengths[len(words)] += 1
    return UnigramTable(dict(counts), sum(counts.values()), dict(lengths))


def synthesize_frequency_corpus(table: UnigramTable, n_sentences: int, seed: int,
                                sentences_per_document: int = 20) -> Corpus:
    """Sample sentences that match only the unigram and length statistics.

    Sentence lengths are drawn from the length histogram and words i.i.d.
    from the unigram distribution; every other regularity of the source
    corpus is destroyed.
    """
    if not table.counts:
        raise ValueError("cannot synthesize from an empty unigram table")
    if n_sentences < 1:
        raise ValueError("n_sentences must be >= 1")
    words = sorted(table.counts)
    word_p = np.array([table.counts[w] for w in words], dtype=np.float64)
    word_p /= word_p.sum()
    lengths = sorted(table.length_histogram)
    length_p = np.array([table.length_histogram[k] for k in lengths], dtype=np.float64)
    length_p /= length_p.sum()

    rng = np.random.default_rng(seed)
    docs: List[List[str]] = []
    current: List[str] = []
    for _ in range(n_sentences):
        n_words = int(rng.choice(len(lengths), p=length_p))
        n_words = lengths[n_words]
        idx = rng.choice(len(words), size=n_words, p=word_p)
        current.append(" ".join(words[i] for i in idx))
        if len(current) == sentences_per_document:
            docs.append(current)
            current = []
    if current:
        docs.append(current)
    return Corpus(docs)


# ---------------------------------------------------------------------------
# Derived scores
# ---------------------------------------------------------------------------

def wordpiece_contribution(perf_real: float, perf_fake: float) -> float:
    """Performance lost by removing all shared vocabulary (real minus fake)."""
    return perf_real - perf_fake
