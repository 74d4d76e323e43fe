"""Deterministic synthetic language for desk-scale experiments.

Real corpora are out of scope, so the lab generates its own: a small
templated language with topical vocabulary, function words, antonym
pairs, and name-like entity spans.  Sentences have genuine word-order
and co-occurrence structure (subject/verb/object templates, topic-pure
documents), which is exactly what the corpus ablations are designed to
destroy; paired tasks (entailment, tagging) are derived from the same
generator so every language variant of an example stays line-aligned.

Everything is a pure function of the seeds passed in.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .corpuslab import Corpus

_ONSETS = list("bdfgklmnprstvz")
_VOWELS = list("aeiou")

ENTAILMENT, CONTRADICTION, NEUTRAL = "entailment", "contradiction", "neutral"
LABELS = (ENTAILMENT, CONTRADICTION, NEUTRAL)


def _make_word(rng: np.random.Generator, n_syllables: int) -> str:
    return "".join(_ONSETS[int(rng.integers(len(_ONSETS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
                   for _ in range(n_syllables))


def _unique_words(rng: np.random.Generator, n: int, taken: set, n_syllables=(2, 3)) -> List[str]:
    out: List[str] = []
    while len(out) < n:
        w = _make_word(rng, int(rng.integers(n_syllables[0], n_syllables[1] + 1)))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


@dataclass
class Topic:
    nouns: List[str]
    verbs: List[str]
    adjectives: List[str]

    def content(self) -> List[str]:
        return self.nouns + self.verbs + self.adjectives


@dataclass
class SynthLanguage:
    seed: int
    determiners: List[str]
    particles: List[str]
    conjunctions: List[str]
    topics: List[Topic]
    antonym: Dict[str, str]
    person_names: List[str]
    place_names: List[str]

    @classmethod
    def generate(cls, seed: int, n_topics: int = 10, nouns_per_topic: int = 12,
                 verbs_per_topic: int = 8, adjectives_per_topic: int = 6) -> "SynthLanguage":
        # per-topic word-group sizes stay even so every content word gets an
        # antonym partner (contradiction generation relies on it)
        rng = np.random.default_rng(seed)
        taken: set = set()
        determiners = _unique_words(rng, 4, taken, (1, 1))
        particles = _unique_words(rng, 5, taken, (1, 1))
        conjunctions = _unique_words(rng, 3, taken, (1, 1))
        topics: List[Topic] = []
        antonym: Dict[str, str] = {}
        for _ in range(n_topics):
            topic = Topic(
                _unique_words(rng, nouns_per_topic, taken),
                _unique_words(rng, verbs_per_topic, taken),
                _unique_words(rng, adjectives_per_topic, taken),
            )
            topics.append(topic)
            for group in (topic.nouns, topic.verbs, topic.adjectives):
                for a, b in zip(group[0::2], group[1::2]):
                    antonym[a] = b
                    antonym[b] = a
        person = _unique_words(rng, 24, taken, (2, 3))
        place = _unique_words(rng, 24, taken, (2, 3))
        return cls(seed, determiners, particles, conjunctions, topics, antonym, person, place)

    def vocabulary(self) -> List[str]:
        words = self.determiners + self.particles + self.conjunctions
        for t in self.topics:
            words += t.content()
        return words + self.person_names + self.place_names


def _clause(rng: np.random.Generator, lang: SynthLanguage, topic: Topic) -> List[str]:
    words = [lang.determiners[int(rng.integers(len(lang.determiners)))]]
    if rng.random() < 0.5:
        words.append(topic.adjectives[int(rng.integers(len(topic.adjectives)))])
    words.append(topic.nouns[int(rng.integers(len(topic.nouns)))])
    words.append(topic.verbs[int(rng.integers(len(topic.verbs)))])
    words.append(lang.determiners[int(rng.integers(len(lang.determiners)))])
    if rng.random() < 0.35:
        words.append(topic.adjectives[int(rng.integers(len(topic.adjectives)))])
    words.append(topic.nouns[int(rng.integers(len(topic.nouns)))])
    if rng.random() < 0.4:
        words.append(lang.particles[int(rng.integers(len(lang.particles)))])
        words.append(topic.nouns[int(rng.integers(len(topic.nouns)))])
    return words


def make_sentence(rng: np.random.Generator, lang: SynthLanguage, topic_index: int) -> str:
    topic = lang.topics[topic_index]
    words = _clause(rng, lang, topic)
    # a mild topic-dependent tendency toward longer sentences
    if rng.random() < 0.25 + 0.04 * (topic_index % 5):
        words.append(lang.conjunctions[int(rng.integers(len(lang.conjunctions)))])
        words.extend(_clause(rng, lang, topic))
    return " ".join(words)


def make_corpus(lang: SynthLanguage, n_documents: int, seed: int,
                sentences_per_document: Tuple[int, int] = (6, 14)) -> Corpus:
    """Topic-pure documents of templated sentences."""
    rng = np.random.default_rng(seed)
    docs: List[List[str]] = []
    for _ in range(n_documents):
        topic_index = int(rng.integers(len(lang.topics)))
        n = int(rng.integers(sentences_per_document[0], sentences_per_document[1] + 1))
        docs.append([make_sentence(rng, lang, topic_index) for _ in range(n)])
    return Corpus(docs)


# ---------------------------------------------------------------------------
# entailment triples
# ---------------------------------------------------------------------------

@dataclass
class EntailmentTriple:
    premise: str
    hypothesis: str
    label: str


def make_entailment(lang: SynthLanguage, n_examples: int, seed: int) -> List[EntailmentTriple]:
    """Balanced 3-way data whose label never correlates with lengths.

    entailment: hypothesis words all appear in the premise (original order);
    contradiction: like entailment but with words flipped to their antonyms;
    neutral: words of another topic, unrelated to the premise.  The
    hypothesis length is drawn before the label so surface statistics carry
    no label signal.
    """
    rng = np.random.default_rng(seed)
    out: List[EntailmentTriple] = []
    labels_cycle = [LABELS[i % 3] for i in range(n_examples)]
    for label in labels_cycle:
        topic_index = int(rng.integers(len(lang.topics)))
        topic = lang.topics[topic_index]
        premise_words = _clause(rng, lang, topic)
        if rng.random() < 0.5:
            premise_words += [lang.conjunctions[int(rng.integers(len(lang.conjunctions)))]]
            premise_words += _clause(rng, lang, topic)
        content = [w for w in premise_words if w in set(topic.content())]
        k = int(rng.integers(2, 5))
        k = min(k, len(content))
        pick = sorted(rng.choice(len(content), size=k, replace=False).tolist())
        hyp = [content[i] for i in pick]
        if label == CONTRADICTION:
            n_flip = 1 + int(rng.random() < 0.35)
            flip_at = rng.choice(len(hyp), size=min(n_flip, len(hyp)), replace=False)
            for i in flip_at:
                hyp[i] = lang.antonym[hyp[i]]
        elif label == NEUTRAL:
            other = int(rng.integers(len(lang.topics) - 1))
            if other >= topic_index:
                other += 1
            pool = list(lang.topics[other].content())
            rng.shuffle(pool)
            hyp = pool[:k]
        out.append(EntailmentTriple(" ".join(premise_words), " ".join(hyp), label))
    return out


# ---------------------------------------------------------------------------
# tagged sentences (named spans)
# ---------------------------------------------------------------------------

def make_tagged_sentences(lang: SynthLanguage, n_sentences: int, seed: int
                          ) -> List[Tuple[List[str], List[str]]]:
    """Sentences with 1-2 name-like spans; BIO tags over PER and LOC."""
    rng = np.random.default_rng(seed)
    out: List[Tuple[List[str], List[str]]] = []
    for _ in range(n_sentences):
        topic = lang.topics[int(rng.integers(len(lang.topics)))]
        clause = _clause(rng, lang, topic)
        # the clause opens with DET (ADJ)? NOUN; that subject phrase becomes a name
        subject_len = 3 if clause[1] in topic.adjectives else 2
        span_len = 1 + int(rng.random() < 0.4)
        name = [lang.person_names[int(rng.integers(len(lang.person_names)))] for _ in range(span_len)]
        words = name + clause[subject_len:]
        tags = ["B-PER"] + ["I-PER"] * (span_len - 1) + ["O"] * (len(clause) - subject_len)
        if rng.random() < 0.6:
            place_len = 1 + int(rng.random() < 0.3)
            place = [lang.place_names[int(rng.integers(len(lang.place_names)))] for _ in range(place_len)]
            particle = lang.particles[int(rng.integers(len(lang.particles)))]
            words = words + [particle] + place
            tags = tags + ["O", "B-LOC"] + ["I-LOC"] * (place_len - 1)
        out.append((words, tags))
    return out
