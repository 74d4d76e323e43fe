"""Pretraining: example construction, the MLM(+NSP) loop, checkpoints.

Examples are a pure function of (config seed, example index), so the
stream is identical no matter how many workers build it and training can
resume from any step bit-exactly.  Checkpoints are a small binary format
(magic "XLB1") holding the encoder config, every named tensor as raw
little-endian float32, and the optimizer state.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import numcore as nc
from .corpuslab import Corpus
from .encoder import EncoderConfig, ModelState, build, forward, mlm_nsp_logits

CHECKPOINT_MAGIC = b"XLB1"


@dataclass
class PretrainConfig:
    steps: int
    batch_size: int = 32
    lr: float = 1e-4
    window: int = 128               # max tokens per example, <= encoder max_positions
    nsp: bool = True
    lang_id: bool = False
    smoothing: float = 0.7          # language sampling exponent on corpus sizes
    mask_rate: float = 0.15
    mask_split: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    warmup_frac: float = 0.0        # linear LR warmup over this fraction of steps
    clip_norm: float = 1.0
    checkpoint_every: int = 0       # 0 = only final
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.mask_rate <= 1.0):
            raise ValueError(f"mask_rate must be in [0, 1], got {self.mask_rate}")
        if len(self.mask_split) != 3 or abs(sum(self.mask_split) - 1.0) > 1e-9:
            raise ValueError(f"mask_split must be three fractions summing to 1, got {self.mask_split}")
        if any(not 0.0 <= x <= 1.0 for x in self.mask_split):
            raise ValueError("mask_split fractions must be in [0, 1]")
        if self.steps < 0 or self.batch_size < 1 or self.window < 4:
            raise ValueError("steps must be >= 0, batch_size >= 1, window >= 4")
        if not (0.0 <= self.warmup_frac <= 1.0):
            raise ValueError("warmup_frac must be in [0, 1]")


@dataclass
class TrainingExample:
    token_ids: np.ndarray
    segment_ids: np.ndarray
    masked_positions: np.ndarray
    masked_labels: np.ndarray
    is_next: Optional[bool]
    languages: Tuple[str, ...]


class ExampleStream:
    """Deterministic random-access stream of pretraining examples.

    Each language keeps its sentences pre-encoded; example i draws its own
    RNG from (seed, i) and picks a language with probability proportional
    to (sentence count)^smoothing.
    """

    def __init__(self, corpora: Dict[str, Corpus], tokenizer, config: PretrainConfig):
        if not corpora:
            raise ValueError("at least one language corpus is required")
        self.config = config
        self.tokenizer = tokenizer
        self.vocab = tokenizer.vocab
        self.languages = sorted(corpora)
        self.docs: Dict[str, List[List[List[int]]]] = {}
        for lang in self.languages:
            corpus = corpora[lang]
            if corpus.n_sentences == 0:
                raise ValueError(f"corpus for language {lang!r} is empty")
            self.docs[lang] = [[tokenizer.encode(s) for s in doc] for doc in corpus.documents]
        if config.nsp:
            for lang in self.languages:
                if not any(len(d) >= 2 for d in self.docs[lang]):
                    raise ValueError(f"language {lang!r} has no multi-sentence document for pair sampling")
        sizes = np.array([sum(len(d) for d in self.docs[l]) for l in self.languages], dtype=np.float64)
        weights = sizes ** config.smoothing
        self.language_p = weights / weights.sum()

    def language_probabilities(self) -> Dict[str, float]:
        return dict(zip(self.languages, self.language_p))

    # -- example construction ------------------------------------------------

    def build(self, index: int) -> TrainingExample:
        rng = np.random.default_rng(nc.derive_seed(self.config.seed, "example", index))
        lang = self.languages[int(rng.choice(len(self.languages), p=self.language_p))]
        if self.config.nsp:
            return self._pair_example(rng, lang)
        return self._single_example(rng, lang)

    def batch(self, step: int) -> List[TrainingExample]:
        base = step * self.config.batch_size
        return [self.build(base + i) for i in range(self.config.batch_size)]

    def _sep_id(self, lang: str) -> int:
        return self.vocab.sep_id_for(lang if self.config.lang_id else None)

    def _pair_example(self, rng, lang: str) -> TrainingExample:
        docs = self.docs[lang]
        eligible = [i for i, d in enumerate(docs) if len(d) >= 2]
        d = eligible[int(rng.integers(len(eligible)))]
        i = int(rng.integers(len(docs[d]) - 1))
        a = list(docs[d][i])
        is_next = bool(rng.random() < 0.5)
        if is_next:
            b = list(docs[d][i + 1])
        else:
            while True:
                d2 = int(rng.integers(len(docs)))
                if d2 != d or len(docs) == 1:
                    break
            sent = docs[d2][int(rng.integers(len(docs[d2])))]
            b = list(sent)
        budget = self.config.window - 3
        while len(a) + len(b) > budget:
            longer = a if len(a) >= len(b) else b
            if len(longer) <= 1:
                longer = b if longer is a else a
            longer.pop()
        sep = self._sep_id(lang)
        tokens = [self.vocab.cls_id] + a + [sep] + b + [sep]
        segments = [0] * (len(a) + 2) + [1] * (len(b) + 1)
        return self._finish(rng, tokens, segments, is_next, (lang, lang))

    def _single_example(self, rng, lang: str) -> TrainingExample:
        docs = self.docs[lang]
        d = int(rng.integers(len(docs)))
        start = int(rng.integers(len(docs[d])))
        budget = self.config.window - 2
        body: List[int] = []
        j = start
        while j < len(docs[d]) and len(body) < budget:
            body.extend(docs[d][j])
            j += 1
        body = body[:budget]
        tokens = [self.vocab.cls_id] + body + [self._sep_id(lang)]
        segments = [0] * len(tokens)
        return self._finish(rng, tokens, segments, None, (lang,))

    def _finish(self, rng, tokens: List[int], segments: List[int],
                is_next: Optional[bool], languages: Tuple[str, ...]) -> TrainingExample:
        ids = np.array(tokens, dtype=np.int64)
        segs = np.array(segments, dtype=np.int64)
        n_specials = self.vocab.n_specials
        maskable = np.flatnonzero(ids >= n_specials)
        n_mask = int(round(self.config.mask_rate * maskable.size)) if maskable.size else 0
        n_mask = max(1, n_mask) if maskable.size else 0
        positions = np.sort(rng.choice(maskable, size=n_mask, replace=False)) if n_mask else \
            np.zeros(0, dtype=np.int64)
        labels = ids[positions].copy()
        p_mask, p_random, _ = self.config.mask_split
        vocab_size = len(self.vocab)
        for pos in positions:
            r = rng.random()
            if r < p_mask:
                ids[pos] = self.vocab.mask_id
            elif r < p_mask + p_random:
                ids[pos] = int(rng.integers(n_specials, vocab_size))
            # else: keep the original token
        return TrainingExample(ids, segs, positions, labels, is_next, languages)


def collate(examples: Sequence[TrainingExample], pad_id: int):
    """Pad a batch to its longest example; returns arrays for the encoder."""
    batch = len(examples)
    length = max(len(ex.token_ids) for ex in examples)
    ids = np.full((batch, length), pad_id, dtype=np.int64)
    segs = np.zeros((batch, length), dtype=np.int64)
    mask = np.zeros((batch, length), dtype=np.int64)
    b_idx: List[int] = []
    p_idx: List[int] = []
    labels: List[int] = []
    for bi, ex in enumerate(examples):
        n = len(ex.token_ids)
        ids[bi, :n] = ex.token_ids
        segs[bi, :n] = ex.segment_ids
        mask[bi, :n] = 1
        b_idx.extend([bi] * len(ex.masked_positions))
        p_idx.extend(ex.masked_positions.tolist())
        labels.extend(ex.masked_labels.tolist())
    return ids, segs, mask, np.array(b_idx, dtype=np.int64), \
        np.array(p_idx, dtype=np.int64), np.array(labels, dtype=np.int64)


# ---------------------------------------------------------------------------
# training loop
# ---------------------------------------------------------------------------

class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, last_checkpoint: Optional[str]):
        super().__init__(f"non-finite loss at step {step}"
                         + (f"; last good checkpoint: {last_checkpoint}" if last_checkpoint else ""))
        self.step = step
        self.last_checkpoint = last_checkpoint


@dataclass
class TrainResult:
    model: ModelState
    adam: nc.AdamState
    curve: List[dict]
    checkpoint_path: Optional[str]
    final_mlm_loss: float


def train(model: ModelState, stream: ExampleStream, config: PretrainConfig,
          out_dir: Optional[str] = None, start_step: int = 0,
          adam: Optional[nc.AdamState] = None, log_every: int = 0,
          checkpoint_meta: Optional[dict] = None) -> TrainResult:
    """Run MLM(+NSP) training from `start_step` to `config.steps`.

    Loss curve entries are appended to <out_dir>/curve.jsonl and periodic
    checkpoints written under out_dir when given.  A non-finite loss
    aborts immediately; the last periodic checkpoint stays on disk.
    """
    if config.window > model.config.max_positions:
        raise ValueError(f"window {config.window} exceeds encoder max_positions "
                         f"{model.config.max_positions}")
    params = model.params
    if adam is None:
        adam = nc.AdamState.for_params(params, lr=config.lr)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    curve: List[dict] = []
    curve_file = (out / "curve.jsonl").open("a", encoding="utf-8") if out is not None else None
    last_checkpoint: Optional[str] = None
    warmup_steps = int(round(config.warmup_frac * config.steps))
    pad_id = stream.vocab.pad_id
    final_mlm = math.nan
    meta = {"languages": stream.languages, "lang_id": config.lang_id,
            "window": config.window, "nsp": config.nsp}
    meta.update(checkpoint_meta or {})

    try:
        for step in range(start_step, config.steps):
            examples = stream.batch(step)
            ids, segs, mask, b_idx, p_idx, labels = collate(examples, pad_id)
            nc.zero_grads(params)
            result = forward(model, ids, segs, mask)
            mlm_logits, nsp_logits = mlm_nsp_logits(model, result.hidden, b_idx, p_idx)
            loss = nc.cross_entropy(mlm_logits, labels)
            mlm_loss = loss.item()
            entry = {"step": step, "mlm_loss": mlm_loss}
            if config.nsp:
                nsp_targets = np.array([int(ex.is_next) for ex in examples], dtype=np.int64)
                nsp_loss = nc.cross_entropy(nsp_logits, nsp_targets)
                entry["nsp_loss"] = nsp_loss.item()
                loss = loss + nsp_loss
            if not math.isfinite(loss.item()):
                raise TrainingDiverged(step, last_checkpoint)
            nc.backward(loss)
            nc.clip_global_norm(params, config.clip_norm)
            lr = config.lr
            if warmup_steps > 0 and step < warmup_steps:
                lr = config.lr * (step + 1) / warmup_steps
            nc.adam_step(params, adam, lr=lr)
            final_mlm = mlm_loss
            curve.append(entry)
            if curve_file is not None:
                curve_file.write(json.dumps(entry) + "\n")
            if log_every and (step + 1) % log_every == 0:
                print(f"step {step + 1}/{config.steps} mlm_loss {mlm_loss:.4f}", flush=True)
            if out is not None and config.checkpoint_every and (step + 1) % config.checkpoint_every == 0 \
                    and (step + 1) < config.steps:
                path = out / f"step{step + 1:07d}.ckpt"
                save_checkpoint(path, model, adam, step + 1, meta=meta)
                last_checkpoint = str(path)
    finally:
        if curve_file is not None:
            curve_file.close()

    checkpoint_path = None
    if out is not None:
        checkpoint_path = str(out / "final.ckpt")
        save_checkpoint(checkpoint_path, model, adam, config.steps, meta=meta)
    return TrainResult(model, adam, curve, checkpoint_path, final_mlm)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    config: EncoderConfig
    step: int
    tensors: Dict[str, np.ndarray]
    adam_step: int
    adam_hyper: Dict[str, float]
    adam_m: Dict[str, np.ndarray]
    adam_v: Dict[str, np.ndarray]
    meta: Dict[str, object] = field(default_factory=dict)


def _tensor_manifest(arrays: Dict[str, np.ndarray]) -> List[dict]:
    return [{"name": name, "shape": list(arr.shape)} for name, arr in arrays.items()]


def save_checkpoint(path, model: ModelState, adam: Optional[nc.AdamState],
                    step: int, meta: Optional[dict] = None,
                    extra_tensors: Optional[Dict[str, np.ndarray]] = None) -> None:
    tensors = {name: p.data for name, p in model.params.items()}
    if extra_tensors:
        overlap = set(tensors) & set(extra_tensors)
        if overlap:
            raise ValueError(f"extra tensors clash with model tensors: {sorted(overlap)[:3]}")
        tensors.update(extra_tensors)
    if adam is None:
        adam = nc.AdamState.for_params(model.params)
    header = {
        "format": 1,
        "step": int(step),
        "config": asdict(model.config),
        "meta": meta or {},
        "tensors": _tensor_manifest(tensors),
        "adam": {
            "step": int(adam.step),
            "lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
            "tensors": _tensor_manifest(adam.m),
        },
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for t in header["tensors"]:
            f.write(np.ascontiguousarray(tensors[t["name"]], dtype="<f4").tobytes())
        for t in header["adam"]["tensors"]:
            f.write(np.ascontiguousarray(adam.m[t["name"]], dtype="<f4").tobytes())
        for t in header["adam"]["tensors"]:
            f.write(np.ascontiguousarray(adam.v[t["name"]], dtype="<f4").tobytes())


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise ValueError(f"truncated checkpoint: expected {n} bytes for {what}, got {len(data)}")
    return data


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"bad checkpoint magic {magic!r} (expected {CHECKPOINT_MAGIC!r})")
        (header_len,) = struct.unpack("<I", _read_exact(f, 4, "header length"))
        header = json.loads(_read_exact(f, header_len, "header").decode("utf-8"))
        if header.get("format") != 1:
            raise ValueError(f"unsupported checkpoint format {header.get('format')!r}")

        def read_block(manifest, what):
            out: Dict[str, np.ndarray] = {}
            for t in manifest:
                shape = tuple(t["shape"])
                n = int(np.prod(shape)) if shape else 1
                raw = _read_exact(f, 4 * n, f"{what} tensor {t['name']!r}")
                out[t["name"]] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
            return out

        tensors = read_block(header["tensors"], "model")
        adam_m = read_block(header["adam"]["tensors"], "adam.m")
        adam_v = read_block(header["adam"]["tensors"], "adam.v")
    cfg = EncoderConfig(**header["config"])
    a = header["adam"]
    return Checkpoint(cfg, int(header["step"]), tensors, int(a["step"]),
                      {"lr": a["lr"], "beta1": a["beta1"], "beta2": a["beta2"], "eps": a["eps"]},
                      adam_m, adam_v, header.get("meta", {}))


def model_from_checkpoint(ckpt: Checkpoint) -> Tuple[ModelState, nc.AdamState]:
    """Rebuild a model and optimizer; shapes are validated tensor by tensor."""
    model = build(ckpt.config, seed=0)
    restore_into(model, ckpt)
    adam = nc.AdamState(step=ckpt.adam_step, **ckpt.adam_hyper)
    for name in model.params:
        adam.m[name] = ckpt.adam_m[name].astype(nc.default_dtype())
        adam.v[name] = ckpt.adam_v[name].astype(nc.default_dtype())
    return model, adam


def restore_into(model: ModelState, ckpt: Checkpoint) -> None:
    for name, p in model.params.items():
        if name not in ckpt.tensors:
            raise ValueError(f"checkpoint is missing tensor {name!r}")
        arr = ckpt.tensors[name]
        if tuple(arr.shape) != tuple(p.data.shape):
            raise ValueError(f"checkpoint tensor {name!r} has shape {arr.shape}, "
                             f"model expects {tuple(p.data.shape)}")
    extra = set(ckpt.tensors) - set(model.params)
    if extra:
        raise ValueError(f"checkpoint has unexpected tensors: {sorted(extra)[:3]}")
    for name, p in model.params.items():
        p.data = ckpt.tensors[name].astype(nc.default_dtype())
