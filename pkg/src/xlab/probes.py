"""Downstream and intrinsic probes over pretrained encoders.

Four measurement families:

* textual entailment: a 3-way head fine-tuned on one language, evaluated
  on any (premise language, hypothesis language) combination of aligned
  test files;
* sequence tagging: a frozen encoder feeds one self-attention mixer layer
  plus a linear-chain CRF, trained by maximum likelihood and scored with
  exact-boundary span F1 over five seeds;
* parallel-sentence retrieval: cosine ranking of mean-pooled sentence
  vectors, reported as top-1/top-3 accuracy;
* the cross-lingual gap (source minus target performance).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numcore as nc
from .encoder import EncoderConfig, ModelState, build, forward
from .pretrain import Checkpoint, load_checkpoint, restore_into, save_checkpoint

ENTAILMENT_LABELS = ("entailment", "contradiction", "neutral")


# ---------------------------------------------------------------------------
# entailment data
# ---------------------------------------------------------------------------

@dataclass
class EntailmentExample:
    premise: str
    hypothesis: str
    label: str
    premise_language: str
    hypothesis_language: str

    def __post_init__(self):
        if self.label not in ENTAILMENT_LABELS:
            raise ValueError(f"label must be one of {ENTAILMENT_LABELS}, got {self.label!r}")


def load_entailment_tsv(path, language: str) -> List[EntailmentExample]:
    """Read "premise<TAB>hypothesis<TAB>label" lines."""
    out: List[EntailmentExample] = []
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{ln}: expected 3 tab-separated fields, got {len(parts)}")
        premise, hypothesis, label = parts
        try:
            out.append(EntailmentExample(premise, hypothesis, label, language, language))
        except ValueError as e:
            raise ValueError(f"{path}:{ln}: {e}")
    return out


def save_entailment_tsv(path, examples: Sequence[EntailmentExample]) -> None:
    lines = [f"{ex.premise}\t{ex.hypothesis}\t{ex.label}" for ex in examples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def check_parallel(test_sets: Dict[str, List[EntailmentExample]]) -> int:
    """Aligned parallel sets share line counts and per-line labels."""
    lengths = {lang: len(exs) for lang, exs in test_sets.items()}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"parallel sets are not line-aligned: {lengths}")
    langs = sorted(test_sets)
    n = lengths[langs[0]]
    for i in range(n):
        labels = {test_sets[l][i].label for l in langs}
        if len(labels) != 1:
            raise ValueError(f"label mismatch across languages at line {i + 1}: {labels}")
    return n


# ---------------------------------------------------------------------------
# entailment classifier
# ---------------------------------------------------------------------------

@dataclass
class FinetuneConfig:
    epochs: int = 3
    batch_size: int = 16
    lr: float = 3e-4
    seed: int = 0
    window: int = 64
    clip_norm: float = 1.0


@dataclass
class EntailmentClassifier:
    model: ModelState
    head_w: nc.Tensor
    head_b: nc.Tensor
    lang_id: bool
    window: int

    def trainable(self) -> Dict[str, nc.Tensor]:
        out = dict(self.model.params)
        out["cls.w"] = self.head_w
        out["cls.b"] = self.head_b
        return out


def encode_pair(tokenizer, premise: str, hypothesis: str,
                premise_language: Optional[str], hypothesis_language: Optional[str],
                window: int) -> Tuple[np.ndarray, np.ndarray]:
    """[CLS] premise [SEP] hypothesis [SEP] with 0/1 segments; the separators
    carry language identity when the vocabulary was trained with it."""
    vocab = tokenizer.vocab
    a = tokenizer.encode(premise)
    b = tokenizer.encode(hypothesis)
    budget = window - 3
    while len(a) + len(b) > budget:
        longer = a if len(a) >= len(b) else b
        if len(longer) <= 1:
            longer = b if longer is a else a
        longer.pop()
    sep_a = vocab.sep_id_for(premise_language)
    sep_b = vocab.sep_id_for(hypothesis_language)
    ids = [vocab.cls_id] + a + [sep_a] + b + [sep_b]
    segs = [0] * (len(a) + 2) + [1] * (len(b) + 1)
    return np.array(ids, dtype=np.int64), np.array(segs, dtype=np.int64)


def _collate_pairs(encoded: Sequence[Tuple[np.ndarray, np.ndarray]], pad_id: int):
    batch = len(encoded)
    length = max(len(ids) for ids, _ in encoded)
    out_ids = np.full((batch, length), pad_id, dtype=np.int64)
    out_segs = np.zeros((batch, length), dtype=np.int64)
    out_mask = np.zeros((batch, length), dtype=np.int64)
    for i, (ids, segs) in enumerate(encoded):
        out_ids[i, :len(ids)] = ids
        out_segs[i, :len(ids)] = segs
        out_mask[i, :len(ids)] = 1
    return out_ids, out_segs, out_mask


def finetune_entailment(model: ModelState, tokenizer, examples: Sequence[EntailmentExample],
                        config: FinetuneConfig, lang_id: bool = False,
                        log_every: int = 0) -> EntailmentClassifier:
    """Fine-tune every encoder parameter plus a fresh 3-way head."""
    languages = {ex.premise_language for ex in examples} | {ex.hypothesis_language for ex in examples}
    if len(languages) != 1:
        raise ValueError(f"training examples must be in one language, got {sorted(languages)}")
    rng = np.random.default_rng(config.seed)
    hidden = model.config.hidden
    head_w = nc.parameter(rng.normal(0.0, 0.02, size=(hidden, 3)), "cls.w")
    head_b = nc.parameter(np.zeros(3), "cls.b")
    clf = EntailmentClassifier(model, head_w, head_b, lang_id, config.window)

    encoded = [encode_pair(tokenizer, ex.premise, ex.hypothesis,
                           ex.premise_language if lang_id else None,
                           ex.hypothesis_language if lang_id else None,
                           config.window) for ex in examples]
    labels = np.array([ENTAILMENT_LABELS.index(ex.label) for ex in examples], dtype=np.int64)
    params = clf.trainable()
    adam = nc.AdamState.for_params(params, lr=config.lr)
    pad = tokenizer.vocab.pad_id
    n = len(examples)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            pick = order[s:s + config.batch_size]
            ids, segs, mask = _collate_pairs([encoded[i] for i in pick], pad)
            nc.zero_grads(params)
            result = forward(model, ids, segs, mask)
            logits = nc.matmul(result.pooled, head_w) + head_b
            loss = nc.cross_entropy(logits, labels[pick])
            nc.backward(loss)
            nc.clip_global_norm(params, config.clip_norm)
            nc.adam_step(params, adam)
        if log_every and (epoch + 1) % log_every == 0:
            acc = float(np.mean(predict_entailment(clf, tokenizer,
                                                   [(ex.premise, ex.hypothesis) for ex in examples],
                                                   None, None) == labels))
            print(f"epoch {epoch + 1}/{config.epochs} train acc {acc:.3f}", flush=True)
    return clf


def predict_entailment(clf: EntailmentClassifier, tokenizer,
                       pairs: Sequence[Tuple[str, str]],
                       premise_language: Optional[str], hypothesis_language: Optional[str],
                       batch_size: int = 64) -> np.ndarray:
    pad = tokenizer.vocab.pad_id
    p_lang = premise_language if clf.lang_id else None
    h_lang = hypothesis_language if clf.lang_id else None
    out = np.zeros(len(pairs), dtype=np.int64)
    with nc.no_grad():
        for s in range(0, len(pairs), batch_size):
            chunk = pairs[s:s + batch_size]
            enc = [encode_pair(tokenizer, p, h, p_lang, h_lang, clf.window) for p, h in chunk]
            ids, segs, mask = _collate_pairs(enc, pad)
            result = forward(clf.model, ids, segs, mask)
            logits = nc.matmul(result.pooled, clf.head_w) + clf.head_b
            out[s:s + len(chunk)] = np.argmax(logits.data, axis=1)
    return out


def eval_entailment(clf: EntailmentClassifier, tokenizer,
                    test_sets: Dict[str, List[EntailmentExample]],
                    premise_language: str, hypothesis_language: str,
                    dump_path=None) -> float:
    """Accuracy with the premise drawn from one language file and the
    hypothesis from another (line-aligned); labels are shared."""
    for lang in (premise_language, hypothesis_language):
        if lang not in test_sets:
            raise ValueError(f"no test set for language {lang!r} "
                             f"(have {sorted(test_sets)})")
    n = check_parallel({l: test_sets[l] for l in {premise_language, hypothesis_language}})
    premises = [test_sets[premise_language][i].premise for i in range(n)]
    hypotheses = [test_sets[hypothesis_language][i].hypothesis for i in range(n)]
    gold = np.array([ENTAILMENT_LABELS.index(test_sets[premise_language][i].label)
                     for i in range(n)], dtype=np.int64)
    pred = predict_entailment(clf, tokenizer, list(zip(premises, hypotheses)),
                              premise_language, hypothesis_language)
    if dump_path is not None:
        lines = [f"{premises[i]}\t{hypotheses[i]}\t{ENTAILMENT_LABELS[gold[i]]}"
                 f"\t{ENTAILMENT_LABELS[pred[i]]}" for i in range(n)]
        Path(dump_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return float(np.mean(pred == gold))


def save_classifier(path, clf: EntailmentClassifier, meta: Optional[dict] = None) -> None:
    info = {"kind": "entailment-classifier", "lang_id": clf.lang_id, "window": clf.window}
    info.update(meta or {})
    save_checkpoint(path, clf.model, None, step=0, meta=info,
                    extra_tensors={"cls.w": clf.head_w.data, "cls.b": clf.head_b.data})


def load_classifier(path) -> EntailmentClassifier:
    ckpt = load_checkpoint(path)
    if ckpt.meta.get("kind") != "entailment-classifier":
        raise ValueError(f"{path} is not an entailment classifier checkpoint")
    head_w = ckpt.tensors.pop("cls.w")
    head_b = ckpt.tensors.pop("cls.b")
    model = build(ckpt.config, seed=0)
    restore_into(model, ckpt)
    return EntailmentClassifier(model,
                                nc.parameter(head_w, "cls.w"),
                                nc.parameter(head_b, "cls.b"),
                                bool(ckpt.meta["lang_id"]), int(ckpt.meta["window"]))


# ---------------------------------------------------------------------------
# linear-chain CRF
# ---------------------------------------------------------------------------

@dataclass
class CrfParams:
    emission_w: nc.Tensor      # (features, K)
    emission_b: nc.Tensor      # (K,)
    transitions: nc.Tensor     # (K, K): score of tag j following tag i
    start: nc.Tensor           # (K,)
    end: nc.Tensor             # (K,)

    @classmethod
    def init(cls, n_features: int, n_tags: int, rng: np.random.Generator) -> "CrfParams":
        return cls(
            nc.parameter(rng.normal(0.0, 0.02, size=(n_features, n_tags)), "crf.emission.w"),
            nc.parameter(np.zeros(n_tags), "crf.emission.b"),
            nc.parameter(np.zeros((n_tags, n_tags)), "crf.transitions"),
            nc.parameter(np.zeros(n_tags), "crf.start"),
            nc.parameter(np.zeros(n_tags), "crf.end"),
        )

    @property
    def n_tags(self) -> int:
        return self.transitions.shape[0]

    def tensors(self) -> Dict[str, nc.Tensor]:
        return {"crf.emission.w": self.emission_w, "crf.emission.b": self.emission_b,
                "crf.transitions": self.transitions, "crf.start": self.start, "crf.end": self.end}


def _log_partition_tensor(params: CrfParams, emissions: nc.Tensor) -> nc.Tensor:
    """Forward recursion in log space; differentiable end to end."""
    length, k = emissions.shape
    idx = np.arange(k)
    alpha = nc.reshape(params.start, (1, k)) + nc.take_pairs(emissions, np.zeros(k, dtype=np.int64), idx)
    alpha = nc.reshape(alpha, (1, k))
    for i in range(1, length):
        row = nc.take_pairs(emissions, np.full(k, i), idx)
        scores = nc.transpose(alpha, (1, 0)) + params.transitions      # (K, K): prev x next
        alpha = nc.reshape(nc.logsumexp(scores, axis=0) + row, (1, k))
    total = nc.logsumexp(alpha + nc.reshape(params.end, (1, k)), axis=-1)
    return nc.reshape(total, ())


def crf_log_partition(params: CrfParams, emissions) -> float:
    """log of the summed exp score over all K^L tag sequences (float64 path)."""
    arr = emissions.data if isinstance(emissions, nc.Tensor) else np.asarray(emissions)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise ValueError(f"emissions must be (length, tags) with length >= 1, got {arr.shape}")
    with nc.no_grad(), nc.precision(np.float64):
        return float(_log_partition_tensor(params, nc.tensor(arr)).data)


def crf_gold_score(params: CrfParams, emissions: nc.Tensor, tags: np.ndarray) -> nc.Tensor:
    length = emissions.shape[0]
    k = params.n_tags
    score = nc.sum_all(nc.take_pairs(emissions, np.arange(length), tags))
    start = nc.take_pairs(nc.reshape(params.start, (1, k)), np.zeros(1, dtype=np.int64), tags[:1])
    end = nc.take_pairs(nc.reshape(params.end, (1, k)), np.zeros(1, dtype=np.int64), tags[-1:])
    score = score + nc.sum_all(start) + nc.sum_all(end)
    if length > 1:
        trans = nc.take_pairs(params.transitions, tags[:-1], tags[1:])
        score = score + nc.sum_all(trans)
    return score


def crf_viterbi(params: CrfParams, emissions) -> Tuple[List[int], float]:
    """Best tag sequence and its unnormalized log score."""
    emis = emissions.data if isinstance(emissions, nc.Tensor) else np.asarray(emissions)
    if emis.ndim != 2 or emis.shape[0] < 1:
        raise ValueError(f"emissions must be (length, tags), got {emis.shape}")
    emis = emis.astype(np.float64)
    length, k = emis.shape
    trans = params.transitions.data.astype(np.float64)
    score = params.start.data.astype(np.float64) + emis[0]
    back = np.zeros((length, k), dtype=np.int64)
    for i in range(1, length):
        cand = score[:, None] + trans                 # prev x next
        back[i] = np.argmax(cand, axis=0)
        score = cand[back[i], np.arange(k)] + emis[i]
    score = score + params.end.data.astype(np.float64)
    last = int(np.argmax(score))
    best = float(score[last])
    path = [last]
    for i in range(length - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()
    return path, best


# ---------------------------------------------------------------------------
# tagged sentences and span F1
# ---------------------------------------------------------------------------

@dataclass
class TaggedSentence:
    tokens: List[str]
    tags: List[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.tags):
            raise ValueError(f"{len(self.tokens)} tokens vs {len(self.tags)} tags")
        validate_bio(self.tags)


def validate_bio(tags: Sequence[str]) -> None:
    prev = "O"
    for i, tag in enumerate(tags):
        if tag != "O" and not (tag.startswith("B-") or tag.startswith("I-")):
            raise ValueError(f"position {i}: malformed tag {tag!r}")
        if tag.startswith("I-"):
            if prev == "O" or prev[2:] != tag[2:]:
                raise ValueError(f"position {i}: {tag!r} continues nothing")
        prev = tag


def load_conll(path) -> List[TaggedSentence]:
    """CoNLL-style "token<TAB>tag" lines, blank line between sentences."""
    sentences: List[TaggedSentence] = []
    tokens: List[str] = []
    tags: List[str] = []
    start_line = 1
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            if tokens:
                try:
                    sentences.append(TaggedSentence(tokens, tags))
                except ValueError as e:
                    raise ValueError(f"{path}: sentence starting at line {start_line}: {e}")
            tokens, tags = [], []
            start_line = ln + 1
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{ln}: expected 'token<TAB>tag', got {line!r}")
        tokens.append(parts[0])
        tags.append(parts[1])
    if tokens:
        try:
            sentences.append(TaggedSentence(tokens, tags))
        except ValueError as e:
            raise ValueError(f"{path}: sentence starting at line {start_line}: {e}")
    return sentences


def save_conll(path, sentences: Sequence[TaggedSentence]) -> None:
    blocks = ["\n".join(f"{t}\t{g}" for t, g in zip(s.tokens, s.tags)) for s in sentences]
    Path(path).write_text("\n\n".join(blocks) + "\n", encoding="utf-8")


def bio_spans(tags: Sequence[str]) -> set:
    """Exact-boundary (type, start, end_inclusive) spans."""
    spans = set()
    start = None
    kind = None
    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.add((kind, start, i - 1))
            start, kind = i, tag[2:]
        elif tag.startswith("I-") and start is not None and tag[2:] == kind:
            continue
        else:
            if start is not None:
                spans.add((kind, start, i - 1))
            start, kind = None, None
    if start is not None:
        spans.add((kind, start, len(tags) - 1))
    return spans


def span_f1(gold: Sequence[Sequence[str]], pred: Sequence[Sequence[str]]) -> Tuple[float, float, float]:
    n_gold = n_pred = n_hit = 0
    for g, p in zip(gold, pred):
        gs, ps = bio_spans(g), bio_spans(p)
        n_gold += len(gs)
        n_pred += len(ps)
        n_hit += len(gs & ps)
    precision = n_hit / n_pred if n_pred else 0.0
    recall = n_hit / n_gold if n_gold else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


# ---------------------------------------------------------------------------
# tagger: frozen features -> attention mixer -> CRF
# ---------------------------------------------------------------------------

@dataclass
class TaggerConfig:
    epochs: int = 40
    batch_size: int = 8
    lr: float = 1e-3
    n_seeds: int = 5
    window: int = 64
    clip_norm: float = 1.0
    seed: int = 0


@dataclass
class Tagger:
    mixer: Dict[str, nc.Tensor]
    crf: CrfParams
    tagset: List[str]

    def trainable(self) -> Dict[str, nc.Tensor]:
        out = dict(self.mixer)
        out.update(self.crf.tensors())
        return out


@dataclass
class TaggerResult:
    tagger: Tagger
    f1_mean: float
    f1_std: float
    f1_per_seed: List[float]


def extract_word_features(model: ModelState, tokenizer, sentences: Sequence[Sequence[str]],
                          window: int) -> List[np.ndarray]:
    """Frozen final-layer vectors at the first piece of each word."""
    vocab = tokenizer.vocab
    feats: List[np.ndarray] = []
    with nc.no_grad():
        for words in sentences:
            ids = [vocab.cls_id]
            firsts: List[int] = []
            for w in words:
                pieces = tokenizer.encode(w)
                if not pieces:
                    pieces = [vocab.unk_id]
                if len(ids) + len(pieces) + 1 > window:
                    raise ValueError(f"sentence of {len(words)} words exceeds window {window}")
                firsts.append(len(ids))
                ids.extend(pieces)
            ids.append(vocab.sep_id)
            arr = np.array([ids], dtype=np.int64)
            result = forward(model, arr, np.zeros_like(arr), np.ones_like(arr))
            feats.append(result.hidden.data[0, firsts, :].copy())
    return feats


def _mixer_init(hidden: int, rng: np.random.Generator) -> Dict[str, nc.Tensor]:
    p = {}
    for name in ("q", "k", "v", "o"):
        p[f"mixer.{name}.w"] = nc.parameter(rng.normal(0.0, 0.02, size=(hidden, hidden)), f"mixer.{name}.w")
        p[f"mixer.{name}.b"] = nc.parameter(np.zeros(hidden), f"mixer.{name}.b")
    p["mixer.norm.gain"] = nc.parameter(np.ones(hidden), "mixer.norm.gain")
    p["mixer.norm.bias"] = nc.parameter(np.zeros(hidden), "mixer.norm.bias")
    return p


def mixer_emissions(tagger: Tagger, features: np.ndarray) -> nc.Tensor:
    """One self-attention layer over frozen features, then tag scores."""
    m = tagger.mixer
    x = nc.tensor(features)
    q = nc.matmul(x, m["mixer.q.w"]) + m["mixer.q.b"]
    k = nc.matmul(x, m["mixer.k.w"]) + m["mixer.k.b"]
    v = nc.matmul(x, m["mixer.v.w"]) + m["mixer.v.b"]
    scores = nc.matmul(q, nc.transpose(k, (1, 0))) * (1.0 / math.sqrt(x.shape[1]))
    ctx = nc.matmul(nc.softmax(scores, axis=-1), v)
    out = nc.matmul(ctx, m["mixer.o.w"]) + m["mixer.o.b"]
    h = nc.layer_norm(x + out, m["mixer.norm.gain"], m["mixer.norm.bias"])
    return nc.matmul(h, tagger.crf.emission_w) + tagger.crf.emission_b


def sentence_log_likelihood(tagger: Tagger, features: np.ndarray, tag_ids: np.ndarray) -> nc.Tensor:
    emissions = mixer_emissions(tagger, features)
    gold = crf_gold_score(tagger.crf, emissions, tag_ids)
    return gold - _log_partition_tensor(tagger.crf, emissions)


def tag_sentence(tagger: Tagger, features: np.ndarray) -> List[str]:
    with nc.no_grad():
        emissions = mixer_emissions(tagger, features)
    path, _ = crf_viterbi(tagger.crf, emissions.data)
    return [tagger.tagset[i] for i in path]


def train_tagger(model: ModelState, tokenizer, train_sentences: Sequence[TaggedSentence],
                 heldout_sentences: Sequence[TaggedSentence], config: TaggerConfig,
                 log_every: int = 0) -> TaggerResult:
    """Maximum-likelihood mixer+CRF over frozen features, repeated over
    `n_seeds` seeds; F1 is reported as mean and standard deviation."""
    tagset = sorted({t for s in train_sentences for t in s.tags})
    tag_index = {t: i for i, t in enumerate(tagset)}
    for s in heldout_sentences:
        for t in s.tags:
            if t not in tag_index:
                raise ValueError(f"held-out tag {t!r} never seen in training data")
    hidden = model.config.hidden
    train_feats = extract_word_features(model, tokenizer, [s.tokens for s in train_sentences], config.window)
    held_feats = extract_word_features(model, tokenizer, [s.tokens for s in heldout_sentences], config.window)
    train_tags = [np.array([tag_index[t] for t in s.tags], dtype=np.int64) for s in train_sentences]

    scores: List[float] = []
    first: Optional[Tagger] = None
    n = len(train_sentences)
    for seed_offset in range(config.n_seeds):
        rng = np.random.default_rng(nc.derive_seed(config.seed, "tagger", seed_offset))
        tagger = Tagger(_mixer_init(hidden, rng), CrfParams.init(hidden, len(tagset), rng), tagset)
        params = tagger.trainable()
        adam = nc.AdamState.for_params(params, lr=config.lr)
        for epoch in range(config.epochs):
            order = rng.permutation(n)
            for s in range(0, n, config.batch_size):
                pick = order[s:s + config.batch_size]
                nc.zero_grads(params)
                total = None
                for i in pick:
                    nll = sentence_log_likelihood(tagger, train_feats[i], train_tags[i]) * -1.0
                    total = nll if total is None else total + nll
                loss = total * (1.0 / len(pick))
                nc.backward(loss)
                nc.clip_global_norm(params, config.clip_norm)
                nc.adam_step(params, adam)
        pred = [tag_sentence(tagger, f) for f in held_feats]
        _, _, f1 = span_f1([s.tags for s in heldout_sentences], pred)
        scores.append(f1)
        if log_every:
            print(f"seed {seed_offset}: held-out span F1 {f1:.3f}", flush=True)
        if first is None:
            first = tagger
    arr = np.array(scores)
    return TaggerResult(first, float(arr.mean()), float(arr.std()), scores)


# ---------------------------------------------------------------------------
# parallel-sentence retrieval
# ---------------------------------------------------------------------------

@dataclass
class RetrievalReport:
    top1: float
    top3: float
    n_pairs: int

    def __post_init__(self):
        if not (0.0 <= self.top1 <= self.top3 <= 1.0):
            raise ValueError(f"accuracies out of order: top1={self.top1}, top3={self.top3}")


def sentence_vectors(model: ModelState, tokenizer, sentences: Sequence[str],
                     window: int, language: Optional[str] = None,
                     batch_size: int = 64) -> np.ndarray:
    """Mean of final-layer vectors over non-special positions."""
    vocab = tokenizer.vocab
    sep = vocab.sep_id_for(language)
    encoded = []
    for s in sentences:
        ids = tokenizer.encode(s)[: window - 2]
        encoded.append(np.array([vocab.cls_id] + ids + [sep], dtype=np.int64))
    out = np.zeros((len(sentences), model.config.hidden), dtype=np.float64)
    with nc.no_grad():
        for start in range(0, len(encoded), batch_size):
            chunk = encoded[start:start + batch_size]
            length = max(len(e) for e in chunk)
            ids = np.full((len(chunk), length), vocab.pad_id, dtype=np.int64)
            mask = np.zeros((len(chunk), length), dtype=np.int64)
            for i, e in enumerate(chunk):
                ids[i, :len(e)] = e
                mask[i, :len(e)] = 1
            hidden = forward(model, ids, np.zeros_like(ids), mask).hidden.data
            for i, e in enumerate(chunk):
                content = np.flatnonzero(e >= vocab.n_specials)
                rows = hidden[i, content, :] if content.size else hidden[i, :len(e), :]
                out[start + i] = rows.mean(axis=0)
    return out


def retrieval_from_vectors(queries: np.ndarray, candidates: np.ndarray, k: int = 3) -> RetrievalReport:
    n = queries.shape[0]
    if candidates.shape[0] != n:
        raise ValueError(f"{n} queries vs {candidates.shape[0]} candidates; pairs must align")
    if n < k:
        raise ValueError(f"need at least k={k} candidates, got {n}")
    qn = queries / np.maximum(np.linalg.norm(queries, axis=1, keepdims=True), 1e-12)
    cn = candidates / np.maximum(np.linalg.norm(candidates, axis=1, keepdims=True), 1e-12)
    sim = qn @ cn.T
    order = np.argsort(-sim, axis=1)
    ranks = np.array([int(np.flatnonzero(order[i] == i)[0]) for i in range(n)])
    top1 = float(np.mean(ranks < 1))
    topk = float(np.mean(ranks < k))
    return RetrievalReport(top1, topk, n)


def intrinsic_retrieval(model: ModelState, tokenizer, pairs: Sequence[Tuple[str, str]],
                        window: int, k: int = 3,
                        language_a: Optional[str] = None,
                        language_b: Optional[str] = None) -> RetrievalReport:
    """Rank every language-B sentence against each language-A query by cosine."""
    if len(pairs) < k:
        raise ValueError(f"need at least k={k} pairs, got {len(pairs)}")
    a = sentence_vectors(model, tokenizer, [p[0] for p in pairs], window, language_a)
    b = sentence_vectors(model, tokenizer, [p[1] for p in pairs], window, language_b)
    return retrieval_from_vectors(a, b, k)


# ---------------------------------------------------------------------------
# cross-lingual gap
# ---------------------------------------------------------------------------

@dataclass
class GapReport:
    perf_source: float
    perf_target: float

    @property
    def delta(self) -> float:
        return self.perf_source - self.perf_target


def cross_lingual_gap(perf_source: float, perf_target: float) -> GapReport:
    """Source minus target performance; smaller means better transfer."""
    return GapReport(perf_source, perf_target)
