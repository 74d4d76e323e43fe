"""Configurable transformer encoder with masked-LM and pair-classification heads.

The architecture knobs under study are depth, attention heads, and total
parameter count; `hidden_for_target_params` solves for the width that
holds the parameter budget (nearly) constant while one of the other axes
moves.  Everything trainable is a numcore Tensor so gradients flow
through the whole stack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import numcore as nc

INIT_STD = 0.02
ATTENTION_MASK_BIAS = -1e9


@dataclass
class EncoderConfig:
    depth: int
    heads: int
    hidden: int
    vocab_size: int
    max_positions: int = 128
    intermediate: Optional[int] = None   # defaults to 4 x hidden
    segment_types: int = 2
    language_id_mode: bool = False

    def __post_init__(self):
        if self.intermediate is None:
            self.intermediate = 4 * self.hidden
        problems = []
        if self.depth < 1:
            problems.append(f"depth must be >= 1 (got {self.depth})")
        if self.heads < 1:
            problems.append(f"heads must be >= 1 (got {self.heads})")
        if self.hidden < 1 or self.hidden % self.heads != 0:
            problems.append(f"hidden ({self.hidden}) must be a positive multiple of heads ({self.heads})")
        if self.vocab_size < 1:
            problems.append("vocab_size must be >= 1")
        if self.max_positions < 1:
            problems.append("max_positions must be >= 1")
        if self.segment_types < 1:
            problems.append("segment_types must be >= 1")
        if problems:
            raise ValueError("invalid encoder config: " + "; ".join(problems))

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads


@dataclass
class ModelState:
    config: EncoderConfig
    params: Dict[str, nc.Tensor]

    def total_params(self) -> int:
        return sum(p.data.size for p in self.params.values())


def param_count(config: EncoderConfig) -> int:
    """Closed-form count of trainable scalars for a config."""
    h, i, v = config.hidden, config.intermediate, config.vocab_size
    embeddings = v * h + config.max_positions * h + config.segment_types * h + 2 * h
    attention = 4 * (h * h + h) + 2 * h
    ffn = (h * i + i) + (i * h + h) + 2 * h
    per_layer = attention + ffn
    pooler = h * h + h
    mlm_head = (h * h + h) + 2 * h + v   # transform + norm + tied output bias
    nsp_head = h * 2 + 2
    return embeddings + config.depth * per_layer + pooler + mlm_head + nsp_head


def hidden_for_target_params(depth: int, heads: int, vocab_size: int, target: int,
                             max_positions: int = 128, segment_types: int = 2,
                             max_hidden: int = 8192) -> int:
    """Width (a multiple of heads) whose parameter count lands closest to target."""
    best_h, best_err = heads, None
    for h in range(heads, max_hidden + 1, heads):
        cfg = EncoderConfig(depth=depth, heads=heads, hidden=h, vocab_size=vocab_size,
                            max_positions=max_positions, segment_types=segment_types)
        err = abs(param_count(cfg) - target)
        if best_err is None or err < best_err:
            best_h, best_err = h, err
    return best_h


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2 * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2 * std
    return out


def build(config: EncoderConfig, seed: int) -> ModelState:
    """Initialize all parameters (truncated normal, layer norms at identity)."""
    rng = np.random.default_rng(seed)
    h, i = config.hidden, config.intermediate
    params: Dict[str, nc.Tensor] = {}

    def weight(name, shape):
        params[name] = nc.parameter(_truncated_normal(rng, shape, INIT_STD), name)

    def zeros(name, shape):
        params[name] = nc.parameter(np.zeros(shape), name)

    def norm(prefix):
        params[f"{prefix}.gain"] = nc.parameter(np.ones(h), f"{prefix}.gain")
        params[f"{prefix}.bias"] = nc.parameter(np.zeros(h), f"{prefix}.bias")

    weight("embed.token", (config.vocab_size, h))
    weight("embed.position", (config.max_positions, h))
    weight("embed.segment", (config.segment_types, h))
    norm("embed.norm")
    for l in range(config.depth):
        p = f"layer{l:02d}"
        for mat in ("q", "k", "v", "o"):
            weight(f"{p}.attn.{mat}.w", (h, h))
            zeros(f"{p}.attn.{mat}.b", (h,))
        norm(f"{p}.attn.norm")
        weight(f"{p}.ffn.in.w", (h, i))
        zeros(f"{p}.ffn.in.b", (i,))
        weight(f"{p}.ffn.out.w", (i, h))
        zeros(f"{p}.ffn.out.b", (h,))
        norm(f"{p}.ffn.norm")
    weight("pooler.w", (h, h))
    zeros("pooler.b", (h,))
    weight("mlm.transform.w", (h, h))
    zeros("mlm.transform.b", (h,))
    norm("mlm.norm")
    zeros("mlm.bias", (config.vocab_size,))
    weight("nsp.w", (h, 2))
    zeros("nsp.b", (2,))

    model = ModelState(config, params)
    expected = param_count(config)
    actual = model.total_params()
    assert actual == expected, f"parameter accounting drifted: {actual} vs {expected}"
    return model


@dataclass
class ForwardResult:
    hidden: nc.Tensor                 # (batch, length, hidden)
    pooled: nc.Tensor                 # (batch, hidden)
    attentions: List[np.ndarray] = field(default_factory=list)


def _validate_inputs(config: EncoderConfig, token_ids, segment_ids, attention_mask):
    token_ids = np.asarray(token_ids)
    segment_ids = np.asarray(segment_ids)
    attention_mask = np.asarray(attention_mask)
    if token_ids.ndim != 2:
        raise ValueError(f"token ids must be (batch, length), got {token_ids.shape}")
    if segment_ids.shape != token_ids.shape or attention_mask.shape != token_ids.shape:
        raise ValueError("token/segment/mask shapes must agree, got "
                         f"{token_ids.shape}/{segment_ids.shape}/{attention_mask.shape}")
    if token_ids.shape[1] > config.max_positions:
        raise ValueError(f"sequence length {token_ids.shape[1]} exceeds max_positions {config.max_positions}")
    if token_ids.size and (token_ids.min() < 0 or token_ids.max() >= config.vocab_size):
        raise ValueError(f"token id out of range [0, {config.vocab_size})")
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= config.segment_types):
        raise ValueError(f"segment id out of range [0, {config.segment_types})")
    return token_ids, segment_ids, attention_mask


def forward(model: ModelState, token_ids, segment_ids, attention_mask,
            collect_attention: bool = False) -> ForwardResult:
    """Encode a padded batch; padding is excluded from attention via a large
    negative score bias, and the pooled vector is the projected first token."""
    cfg = model.config
    token_ids, segment_ids, attention_mask = _validate_inputs(cfg, token_ids, segment_ids, attention_mask)
    p = model.params
    batch, length = token_ids.shape

    x = nc.embedding_lookup(p["embed.token"], token_ids)
    x = x + nc.embedding_lookup(p["embed.position"], np.arange(length))
    x = x + nc.embedding_lookup(p["embed.segment"], segment_ids)
    x = nc.layer_norm(x, p["embed.norm.gain"], p["embed.norm.bias"])

    mask_bias = nc.tensor(((1.0 - attention_mask.astype(x.data.dtype))
                           * ATTENTION_MASK_BIAS).reshape(batch, 1, 1, length))
    scale = 1.0 / math.sqrt(cfg.head_dim)
    attentions: List[np.ndarray] = []

    def split_heads(t):
        t = nc.reshape(t, (batch, length, cfg.heads, cfg.head_dim))
        return nc.transpose(t, (0, 2, 1, 3))

    for l in range(cfg.depth):
        prefix = f"layer{l:02d}"
        q = split_heads(nc.matmul(x, p[f"{prefix}.attn.q.w"]) + p[f"{prefix}.attn.q.b"])
        k = split_heads(nc.matmul(x, p[f"{prefix}.attn.k.w"]) + p[f"{prefix}.attn.k.b"])
        v = split_heads(nc.matmul(x, p[f"{prefix}.attn.v.w"]) + p[f"{prefix}.attn.v.b"])
        scores = nc.matmul(q, nc.transpose(k, (0, 1, 3, 2))) * scale + mask_bias
        probs = nc.softmax(scores, axis=-1)
        if collect_attention:
            attentions.append(probs.data.copy())
        ctx = nc.transpose(nc.matmul(probs, v), (0, 2, 1, 3))
        ctx = nc.reshape(ctx, (batch, length, cfg.hidden))
        attn_out = nc.matmul(ctx, p[f"{prefix}.attn.o.w"]) + p[f"{prefix}.attn.o.b"]
        x = nc.layer_norm(x + attn_out, p[f"{prefix}.attn.norm.gain"], p[f"{prefix}.attn.norm.bias"])
        ffn = nc.gelu(nc.matmul(x, p[f"{prefix}.ffn.in.w"]) + p[f"{prefix}.ffn.in.b"])
        ffn = nc.matmul(ffn, p[f"{prefix}.ffn.out.w"]) + p[f"{prefix}.ffn.out.b"]
        x = nc.layer_norm(x + ffn, p[f"{prefix}.ffn.norm.gain"], p[f"{prefix}.ffn.norm.bias"])

    first = nc.take_pairs(x, np.arange(batch), np.zeros(batch, dtype=np.int64))
    pooled = nc.tanh(nc.matmul(first, p["pooler.w"]) + p["pooler.b"])
    return ForwardResult(x, pooled, attentions)


def mlm_nsp_logits(model: ModelState, hidden: nc.Tensor,
                   masked_batch_idx, masked_pos_idx) -> Tuple[nc.Tensor, nc.Tensor]:
    """Masked-token logits (tied to the token embedding) and pair logits.

    `masked_batch_idx`/`masked_pos_idx` are parallel index arrays naming the
    masked slots; an empty selection yields (0, vocab) MLM logits while the
    pair head still runs.
    """
    p = model.params
    masked_batch_idx = np.asarray(masked_batch_idx, dtype=np.int64)
    masked_pos_idx = np.asarray(masked_pos_idx, dtype=np.int64)
    batch, length = hidden.shape[0], hidden.shape[1]
    if masked_pos_idx.size:
        if masked_pos_idx.min() < 0 or masked_pos_idx.max() >= length:
            raise ValueError(f"masked position out of range [0, {length})")
        if masked_batch_idx.min() < 0 or masked_batch_idx.max() >= batch:
            raise ValueError(f"masked batch index out of range [0, {batch})")

    rows = nc.take_pairs(hidden, masked_batch_idx, masked_pos_idx)
    t = nc.gelu(nc.matmul(rows, p["mlm.transform.w"]) + p["mlm.transform.b"])
    t = nc.layer_norm(t, p["mlm.norm.gain"], p["mlm.norm.bias"])
    mlm = nc.matmul(t, nc.transpose(p["embed.token"], (1, 0))) + p["mlm.bias"]

    first = nc.take_pairs(hidden, np.arange(batch), np.zeros(batch, dtype=np.int64))
    pooled = nc.tanh(nc.matmul(first, p["pooler.w"]) + p["pooler.b"])
    nsp = nc.matmul(pooled, p["nsp.w"]) + p["nsp.b"]
    return mlm, nsp
