"""Subword, character, and word tokenization over normalized corpora.

The main tokenizer is a unigram language model trained with hard EM
(Viterbi counts) and iterative pruning, decoded with Viterbi search over
prefix positions.  Words carry a leading boundary marker so piece
concatenation reproduces the input text exactly.

Determinism matters here beyond reproducibility: a corpus and its
character-shifted image must train to structurally identical
vocabularies, so every tie-break uses counts and first-occurrence order,
never string comparison (which the shift does not preserve across the
boundary marker).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .corpuslab import Corpus, normalize_sentence

BOUNDARY = "▁"  # marks the start of a word inside a piece

PAD, UNK, CLS, SEP, MASK = "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"
_BASE_SPECIALS = (PAD, UNK, CLS, SEP, MASK)

# score assigned to a single out-of-alphabet character during decoding,
# relative to the worst in-vocabulary piece
_UNK_PENALTY = 10.0


def sep_token(language: str) -> str:
    return f"[SEP-{language}]"


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

@dataclass
class Vocabulary:
    """Ordered piece list with special tokens at the lowest ids."""

    pieces: List[str]
    n_specials: int
    languages: Tuple[str, ...] = ()
    ids: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.ids:
            self.ids = {p: i for i, p in enumerate(self.pieces)}
        if len(self.ids) != len(self.pieces):
            dupes = [p for p, c in Counter(self.pieces).items() if c > 1]
            raise ValueError(f"duplicate pieces in vocabulary: {dupes[:5]}")

    @classmethod
    def build(cls, content_pieces: Sequence[str], languages: Sequence[str] = ()) -> "Vocabulary":
        specials = list(_BASE_SPECIALS) + [sep_token(l) for l in languages]
        return cls(specials + list(content_pieces), len(specials), tuple(languages))

    def __len__(self) -> int:
        return len(self.pieces)

    @property
    def pad_id(self) -> int:
        return self.ids[PAD]

    @property
    def unk_id(self) -> int:
        return self.ids[UNK]

    @property
    def cls_id(self) -> int:
        return self.ids[CLS]

    @property
    def sep_id(self) -> int:
        return self.ids[SEP]

    @property
    def mask_id(self) -> int:
        return self.ids[MASK]

    def sep_id_for(self, language: Optional[str]) -> int:
        if language is None:
            return self.sep_id
        tok = sep_token(language)
        if tok not in self.ids:
            raise KeyError(f"vocabulary has no separator for language {language!r}")
        return self.ids[tok]

    def is_special(self, piece_id: int) -> bool:
        return piece_id < self.n_specials

    def piece(self, piece_id: int) -> str:
        return self.pieces[piece_id]


# ---------------------------------------------------------------------------
# Unigram LM
# ---------------------------------------------------------------------------

@dataclass
class Segmentation:
    """Result of decoding one text: piece ids and the summed log-probability."""

    piece_ids: List[int]
    score: float


@dataclass
class PruneDecision:
    round_index: int
    pruned: List[Tuple[str, float]]        # (piece, loss) removed this round
    retained_min_loss: float               # smallest loss among survivors


@dataclass
class UnigramLM:
    vocabulary: Vocabulary
    logp: np.ndarray                        # aligned with vocabulary.pieces; specials 0.0
    max_piece_len: int = 8
    prune_log: List[PruneDecision] = field(default_factory=list)

    def __post_init__(self):
        self._scores = {
            self.vocabulary.pieces[i]: float(self.logp[i])
            for i in range(self.vocabulary.n_specials, len(self.vocabulary))
        }
        content = self.logp[self.vocabulary.n_specials:]
        self._unk_logp = (float(content.min()) if content.size else 0.0) - _UNK_PENALTY

    def piece_logp(self, piece: str) -> Optional[float]:
        return self._scores.get(piece)


def _marked_words(sentence: str) -> List[str]:
    return [BOUNDARY + w for w in sentence.split()]


def _viterbi_word(word: str, scores: Dict[str, float], max_len: int,
                  unk_logp: float, exclude: Optional[str] = None) -> Tuple[List[str], float]:
    """Best-scoring segmentation of one marked word.

    Ties go to the longer final piece, a rule that is stable under any
    order-preserving character renaming of the corpus.  `exclude` hides
    one piece, used when measuring what pruning it would cost.
    """
    n = len(word)
    neg_inf = -math.inf
    best_score = [neg_inf] * (n + 1)
    best_piece: List[Optional[str]] = [None] * (n + 1)
    best_score[0] = 0.0
    for i in range(1, n + 1):
        score_i = neg_inf
        piece_i = None
        lo = max(0, i - max_len)
        for j in range(i - 1, lo - 1, -1):
            prev = best_score[j]
            if prev == neg_inf:
                continue
            piece = word[j:i]
            if piece == exclude:
                continue
            sc = scores.get(piece)
            if sc is None:
                continue
            cand = prev + sc
            if cand >= score_i:
                score_i = cand
                piece_i = piece
        if piece_i is None and best_score[i - 1] > neg_inf:
            # unknown character: consume one scalar as [UNK]
            score_i = best_score[i - 1] + unk_logp
            piece_i = word[i - 1]
        best_score[i] = score_i
        best_piece[i] = piece_i
    pieces: List[str] = []
    i = n
    while i > 0:
        piece = best_piece[i]
        assert piece is not None
        pieces.append(piece)
        i -= len(piece)
    pieces.reverse()
    return pieces, best_score[n]


def encode_unigram(lm: UnigramLM, text: str) -> Segmentation:
    """Maximum-score segmentation via Viterbi over prefix positions."""
    ids: List[int] = []
    score = 0.0
    vocab = lm.vocabulary
    for word in _marked_words(normalize_sentence(text)):
        pieces, word_score = _viterbi_word(word, lm._scores, lm.max_piece_len, lm._unk_logp)
        score += word_score
        for piece in pieces:
            ids.append(vocab.ids.get(piece, vocab.unk_id))
    return Segmentation(ids, score)


def _collect_word_counts(corpus: Corpus) -> Tuple[Dict[str, int], Dict[str, int]]:
    """Marked-word frequencies plus first-occurrence ranks."""
    counts: Dict[str, int] = {}
    intro: Dict[str, int] = {}
    for sent in corpus.sentences():
        for word in _marked_words(sent):
            if word not in counts:
                counts[word] = 0
                intro[word] = len(intro)
            counts[word] += 1
    return counts, intro


def train_unigram_vocab(corpus: Corpus, target_size: int, languages: Sequence[str] = (),
                        max_piece_len: int = 8, seed_multiplier: int = 10,
                        prune_fraction: float = 0.2, em_iterations: int = 2) -> UnigramLM:
    """Train a unigram-LM piece vocabulary of exactly `target_size` entries.

    Candidates are all characters plus the most frequent substrings up to
    `max_piece_len` (seed_multiplier x target_size in total).  Each round
    runs `em_iterations` hard-EM sweeps (Viterbi counts, renormalize) and
    then drops the `prune_fraction` of multi-character pieces that cost
    the corpus likelihood the least, until the target size is reached.
    Single characters are never pruned, so any in-alphabet text stays
    segmentable without [UNK].
    """
    word_counts, word_intro = _collect_word_counts(corpus)
    if not word_counts:
        raise ValueError("cannot train a vocabulary on an empty corpus")
    n_specials = len(_BASE_SPECIALS) + len(languages)

    char_counts: Dict[str, int] = {}
    char_intro: Dict[str, int] = {}
    sub_counts: Dict[str, int] = {}
    sub_intro: Dict[str, int] = {}
    for word, cnt in word_counts.items():
        base = word_intro[word]
        for offset, ch in enumerate(word):
            char_counts[ch] = char_counts.get(ch, 0) + cnt
            if ch not in char_intro:
                char_intro[ch] = base * 64 + offset
        n = len(word)
        for length in range(2, min(max_piece_len, n) + 1):
            for start in range(0, n - length + 1):
                piece = word[start:start + length]
                sub_counts[piece] = sub_counts.get(piece, 0) + cnt
                key = base * 64 + start
                if piece not in sub_intro or key < sub_intro[piece]:
                    sub_intro[piece] = key

    floor = len(char_counts) + n_specials
    if target_size < floor:
        raise ValueError(
            f"target_size {target_size} below floor {floor} "
            f"({len(char_counts)} characters + {n_specials} specials)"
        )

    budget = max(0, seed_multiplier * target_size - floor)
    ranked = sorted(sub_counts, key=lambda p: (-sub_counts[p], sub_intro[p]))[:budget]
    ranked = [p for p in ranked if p not in char_counts]

    pieces = list(char_counts) + ranked
    counts0 = {p: char_counts.get(p, 0) + sub_counts.get(p, 0) for p in pieces}
    total0 = sum(counts0.values())
    logp = {p: math.log(counts0[p] / total0) for p in pieces}
    intro = {**{c: char_intro[c] for c in char_counts}, **{p: sub_intro[p] for p in ranked}}
    single_chars = set(char_counts)

    target_content = target_size - n_specials
    zero_logp_floor = math.log(1e-40)
    prune_log: List[PruneDecision] = []
    round_index = 0

    def em_sweeps(current: Dict[str, float]) -> Dict[str, float]:
        for _ in range(em_iterations):
            piece_counts: Dict[str, float] = {}
            for word, cnt in word_counts.items():
                path, _ = _viterbi_word(word, current, max_piece_len, zero_logp_floor - _UNK_PENALTY)
                for piece in path:
                    piece_counts[piece] = piece_counts.get(piece, 0.0) + cnt
            total = sum(piece_counts.values())
            current = {
                p: (math.log(piece_counts[p] / total) if piece_counts.get(p, 0.0) > 0 else zero_logp_floor)
                for p in current
            }
        return current

    while True:
        logp = em_sweeps(logp)
        n_current = len(logp)
        if n_current <= target_content:
            break
        # likelihood loss of removing each multi-character piece, measured on
        # the words whose Viterbi path currently uses it
        usage: Dict[str, List[str]] = {}
        base_scores: Dict[str, float] = {}
        for word, cnt in word_counts.items():
            path, score = _viterbi_word(word, logp, max_piece_len, zero_logp_floor - _UNK_PENALTY)
            base_scores[word] = score
            for piece in set(path):
                if piece not in single_chars:
                    usage.setdefault(piece, []).append(word)
        losses: Dict[str, float] = {}
        for piece in logp:
            if piece in single_chars:
                continue
            affected = usage.get(piece)
            if not affected:
                losses[piece] = 0.0
                continue
            loss = 0.0
            for word in affected:
                _, alt = _viterbi_word(word, logp, max_piece_len,
                                       zero_logp_floor - _UNK_PENALTY, exclude=piece)
                loss += word_counts[word] * (base_scores[word] - alt)
            losses[piece] = loss

        n_prunable = len(losses)
        k = min(max(1, int(prune_fraction * n_current)), n_current - target_content, n_prunable)
        by_loss = sorted(losses, key=lambda p: (losses[p], counts0.get(p, 0), intro[p]))
        doomed = by_loss[:k]
        survivors_losses = [losses[p] for p in by_loss[k:]]
        prune_log.append(PruneDecision(
            round_index,
            [(p, losses[p]) for p in doomed],
            min(survivors_losses) if survivors_losses else math.inf,
        ))
        for p in doomed:
            del logp[p]
        round_index += 1

    ordered = sorted(logp, key=lambda p: (-logp[p], intro[p]))
    vocab = Vocabulary.build(ordered, languages)
    arr = np.zeros(len(vocab), dtype=np.float64)
    for i, piece in enumerate(ordered):
        arr[vocab.n_specials + i] = logp[piece]
    return UnigramLM(vocab, arr, max_piece_len, prune_log)


# ---------------------------------------------------------------------------
# Tokenizer front ends (shared interface)
# ---------------------------------------------------------------------------

class UnigramTokenizer:
    mode = "wordpiece"

    def __init__(self, lm: UnigramLM):
        self.lm = lm
        self.vocab = lm.vocabulary

    def encode(self, text: str) -> List[int]:
        return encode_unigram(self.lm, text).piece_ids

    def encode_pieces(self, text: str) -> List[str]:
        return [self.vocab.piece(i) for i in self.encode(text)]

    def join_pieces(self, pieces: Sequence[str]) -> str:
        joined = "".join(pieces).replace(BOUNDARY, " ")
        return joined[1:] if joined.startswith(" ") else joined

    def decode(self, ids: Sequence[int]) -> str:
        return self.join_pieces([self.vocab.piece(i) for i in ids])


class CharTokenizer:
    """One piece per Unicode scalar value, alphabet fixed at training time."""

    mode = "char"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def encode(self, text: str) -> List[int]:
        ids = self.vocab.ids
        unk = self.vocab.unk_id
        return [ids.get(ch, unk) for ch in normalize_sentence(text)]

    def encode_pieces(self, text: str) -> List[str]:
        return [self.vocab.piece(i) for i in self.encode(text)]

    def join_pieces(self, pieces: Sequence[str]) -> str:
        return "".join(pieces)

    def decode(self, ids: Sequence[int]) -> str:
        return self.join_pieces([self.vocab.piece(i) for i in ids])


class WordTokenizer:
    """One piece per whitespace word, restricted to the top-k training words."""

    mode = "word"

    def __init__(self, vocab: Vocabulary):
        self.vocab = vocab

    def encode(self, text: str) -> List[int]:
        ids = self.vocab.ids
        unk = self.vocab.unk_id
        return [ids.get(w, unk) for w in normalize_sentence(text).split()]

    def encode_pieces(self, text: str) -> List[str]:
        return [self.vocab.piece(i) for i in self.encode(text)]

    def join_pieces(self, pieces: Sequence[str]) -> str:
        return " ".join(pieces)

    def decode(self, ids: Sequence[int]) -> str:
        return self.join_pieces([self.vocab.piece(i) for i in ids])


def train_char_vocab(corpus: Corpus, languages: Sequence[str] = ()) -> CharTokenizer:
    chars = sorted({ch for sent in corpus.sentences() for ch in sent})
    return CharTokenizer(Vocabulary.build(chars, languages))


def train_word_vocab(corpus: Corpus, vocab_size: int, languages: Sequence[str] = ()) -> WordTokenizer:
    counts: Dict[str, int] = {}
    intro: Dict[str, int] = {}
    for sent in corpus.sentences():
        for w in sent.split():
            if w not in counts:
                counts[w] = 0
                intro[w] = len(intro)
            counts[w] += 1
    top = sorted(counts, key=lambda w: (-counts[w], intro[w]))[:vocab_size]
    return WordTokenizer(Vocabulary.build(top, languages))


def train_tokenizer(mode: str, corpus: Corpus, size: int,
                    languages: Sequence[str] = ()):
    if mode == "wordpiece":
        return UnigramTokenizer(train_unigram_vocab(corpus, size, languages))
    if mode == "char":
        return train_char_vocab(corpus, languages)
    if mode == "word":
        return train_word_vocab(corpus, size, languages)
    raise ValueError(f"unknown tokenizer mode {mode!r}")


# ---------------------------------------------------------------------------
# Vocabulary files
# ---------------------------------------------------------------------------

def save_vocab(tokenizer, path) -> None:
    """One line per piece: "<piece>\\t<logp>", specials first (id order)."""
    vocab = tokenizer.vocab
    logp = tokenizer.lm.logp if isinstance(tokenizer, UnigramTokenizer) else np.zeros(len(vocab))
    lines = [f"{piece}\t{float(logp[i]):.17g}" for i, piece in enumerate(vocab.pieces)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_vocab_lines(path) -> Tuple[List[str], List[float]]:
    pieces: List[str] = []
    logps: List[float] = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        try:
            piece, val = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{ln}: expected '<piece>\\t<logp>'")
        pieces.append(piece)
        logps.append(float(val))
    return pieces, logps


def _split_specials(pieces: List[str]) -> Tuple[int, Tuple[str, ...]]:
    n = 0
    languages: List[str] = []
    for piece in pieces:
        if piece in _BASE_SPECIALS:
            n += 1
        elif piece.startswith("[SEP-") and piece.endswith("]"):
            languages.append(piece[5:-1])
            n += 1
        else:
            break
    return n, tuple(languages)


def load_vocab(path, mode: str):
    """Rebuild a tokenizer from a vocabulary file; ids follow line order."""
    pieces, logps = _read_vocab_lines(path)
    n_specials, languages = _split_specials(pieces)
    vocab = Vocabulary(pieces, n_specials, languages)
    if mode == "wordpiece":
        return UnigramTokenizer(UnigramLM(vocab, np.array(logps, dtype=np.float64)))
    if mode == "char":
        return CharTokenizer(vocab)
    if mode == "word":
        return WordTokenizer(vocab)
    raise ValueError(f"unknown tokenizer mode {mode!r}")
