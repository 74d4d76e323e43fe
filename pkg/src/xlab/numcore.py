"""Dense-tensor numerics: reverse-mode autodiff, training primitives, Adam.

Tensors wrap contiguous numpy float arrays and record a tape of parent
links so that `backward()` can push gradients through any composition of
the primitives below.  Training runs in float32; a float64 "verification"
mode (see `precision`) exists so finite-difference gradient checks are
not drowned in rounding noise.

Integer data (token ids, index arrays) is passed around as plain numpy
arrays, never as Tensors.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

_DEFAULT_DTYPE = np.dtype(np.float32)

_GELU_C = math.sqrt(2.0 / math.pi)


class ShapeError(ValueError):
    """Raised when an operation receives shape-incompatible inputs."""


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


def set_default_dtype(dtype) -> None:
    global _DEFAULT_DTYPE
    dt = np.dtype(dtype)
    if dt not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dt}; use float32 or float64")
    _DEFAULT_DTYPE = dt


@contextmanager
def precision(dtype):
    """Temporarily switch the default dtype (float64 = verification mode)."""
    prev = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(prev)


_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Skip tape construction inside the block (evaluation-only forwards)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


# ---------------------------------------------------------------------------
# Tensor and tape
# ---------------------------------------------------------------------------

class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        # leaf tensors always take the active default dtype; only op results
        # (built via _make) carry the dtype of their computation
        arr = np.asarray(data)
        if arr.dtype != _DEFAULT_DTYPE:
            arr = arr.astype(_DEFAULT_DTYPE)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype)
        else:
            self.grad += g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # light operator sugar; everything routes through the module primitives
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)


def tensor(data, requires_grad: bool = False, name: Optional[str] = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


def parameter(data, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _make(data: np.ndarray, parents: Tuple[Tensor, ...], backward) -> Tensor:
    """Wrap an op result; the tape link is dropped when no parent needs grads."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def stop_gradient(x: Tensor) -> Tensor:
    """Detach from the tape (frozen features)."""
    return Tensor(x.data)


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; accumulates into `.grad`."""
    if loss.data.size != 1:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    # iterative topological order (graphs can be deep, e.g. CRF recursions)
    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            stack.append((p, False))
    loss.accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (undo numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2))
            a.accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.matmul(a.data.swapaxes(-1, -2), g)
            b.accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), bwd)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(shape)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g.reshape(x.shape))

    return _make(data, (x,), bwd)


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    x = _as_tensor(x)
    axes = tuple(axes)
    data = np.ascontiguousarray(x.data.transpose(axes))
    inverse = tuple(np.argsort(axes))

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g.transpose(inverse))

    return _make(data, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * (1.0 - data * data))

    return _make(data, (x,), bwd)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation: 0.5 x (1 + tanh(c (x + 0.044715 x^3)))."""
    x = _as_tensor(x)
    xd = x.data
    sq = xd * xd
    inner = _GELU_C * (xd + 0.044715 * sq * xd)
    t = np.tanh(inner)
    data = 0.5 * xd * (1.0 + t)

    def bwd(g):
        if x.requires_grad:
            sech2 = 1.0 - t * t
            d = 0.5 * (1.0 + t) + 0.5 * xd * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * sq)
            x.accumulate(g * d)

    return _make(data, (x,), bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        if x.requires_grad:
            dot = (g * data).sum(axis=axis, keepdims=True)
            x.accumulate(data * (g - dot))

    return _make(data, (x,), bwd)


def logsumexp(x: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    m = x.data.max(axis=axis, keepdims=True)
    e = np.exp(x.data - m)
    s = e.sum(axis=axis, keepdims=True)
    data = np.log(s) + m
    if not keepdims:
        data = np.squeeze(data, axis=axis)

    def bwd(g):
        if x.requires_grad:
            gg = g if keepdims else np.expand_dims(g, axis)
            x.accumulate(gg * (e / s))

    return _make(data, (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeError(
            f"layer_norm: gain/bias {gain.shape}/{bias.shape} must match last dim of {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def bwd(g):
        n = x.shape[-1]
        if gain.requires_grad:
            gain.accumulate((g * xhat).reshape(-1, n).sum(axis=0))
        if bias.requires_grad:
            bias.accumulate(g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            gx = g * gain.data
            term = gx - gx.mean(axis=-1, keepdims=True) - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
            x.accumulate(term * inv)

    return _make(data, (x, gain, bias), bwd)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup; backward scatter-adds with a deterministic np.add.at."""
    table = _as_tensor(table)
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(
            f"embedding_lookup: id out of range [0, {table.shape[0]}), got min {ids.min()} max {ids.max()}"
        )
    data = table.data[ids]

    def bwd(g):
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[-1]))

    return _make(data, (table,), bwd)


def take_pairs(x: Tensor, idx0: np.ndarray, idx1: np.ndarray) -> Tensor:
    """Select x[idx0[n], idx1[n]] rows/elements; the gather behind masking and pooling."""
    x = _as_tensor(x)
    idx0 = np.asarray(idx0)
    idx1 = np.asarray(idx1)
    if idx0.shape != idx1.shape:
        raise ShapeError(f"take_pairs: index shapes differ {idx0.shape} vs {idx1.shape}")
    if idx1.size and (idx1.min() < 0 or idx1.max() >= x.shape[1]):
        raise ShapeError(f"take_pairs: position out of range for axis of size {x.shape[1]}")
    data = x.data[idx0, idx1]

    def bwd(g):
        if x.requires_grad:
            if x.grad is None:
                x.grad = np.zeros_like(x.data)
            np.add.at(x.grad, (idx0, idx1), g)

    return _make(data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g, x.shape).astype(x.data.dtype))

    return _make(data, (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    data = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(np.broadcast_to(g / n, x.shape).astype(x.data.dtype))

    return _make(data, (x,), bwd)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer targets under row softmax."""
    logits = _as_tensor(logits)
    targets = np.asarray(targets)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: logits must be 2-D, got {logits.shape}")
    n, c = logits.shape
    if targets.shape != (n,):
        raise ShapeError(f"cross_entropy: targets shape {targets.shape} != ({n},)")
    if n == 0:
        return _make(np.asarray(0.0, dtype=logits.data.dtype), (logits,), lambda g: None)
    if targets.min() < 0 or targets.max() >= c:
        raise ShapeError(f"cross_entropy: target id out of range [0, {c})")
    m = logits.data.max(axis=1, keepdims=True)
    e = np.exp(logits.data - m)
    z = e.sum(axis=1, keepdims=True)
    logp = logits.data - m - np.log(z)
    rows = np.arange(n)
    data = np.asarray(-logp[rows, targets].mean(), dtype=logits.data.dtype)

    def bwd(g):
        if logits.requires_grad:
            p = e / z
            p[rows, targets] -= 1.0
            logits.accumulate(p * (g / n))

    return _make(data, (logits,), bwd)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Dict[str, Tensor], lr: float = 1e-4,
                   beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adam_step(params: Dict[str, Tensor], state: AdamState, lr: Optional[float] = None) -> None:
    """One bias-corrected Adam update from the accumulated `.grad` buffers.

    Parameters with no gradient this step are skipped (their moments do not
    decay either, which keeps untouched heads exactly at initialization).
    """
    state.step += 1
    step_lr = state.lr if lr is None else lr
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = p.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if g.shape != p.data.shape:
            raise ShapeError(f"adam_step: gradient shape {g.shape} != param {p.data.shape} for {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        mhat = m / c1
        vhat = v / c2
        p.data -= (step_lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.data.dtype)


def global_grad_norm(params: Dict[str, Tensor]) -> float:
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) ** 2))
    return math.sqrt(total)


def clip_global_norm(params: Dict[str, Tensor], max_norm: float = 1.0) -> float:
    """Scale all gradients so the global L2 norm is at most `max_norm`."""
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0.0:
        scale = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= scale
    return norm


def zero_grads(params: Dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckFailure:
    param: str
    index: Tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    n_checked: int
    max_rel_error: float
    tol: float
    failures: List[GradCheckFailure]

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        status = "PASS" if self.ok else f"FAIL ({len(self.failures)} entries)"
        return f"grad_check: {status}, {self.n_checked} entries, max rel err {self.max_rel_error:.3e}"


def grad_check(loss_fn: Callable[[], Tensor], params: Dict[str, Tensor],
               n_samples: int = 200, eps: float = 1e-5, tol: float = 1e-4,
               seed: int = 0) -> GradCheckReport:
    """Compare analytic gradients against central differences.

    Checks |analytic - numeric| / max(1, |analytic|) < tol on a random
    subset of at least `n_samples` parameter entries (all entries when the
    model is smaller than that).  Meant to run in float64 mode.
    """
    if default_dtype() != np.dtype(np.float64):
        raise RuntimeError("grad_check requires float64 verification mode (see precision())")
    zero_grads(params)
    loss = loss_fn()
    backward(loss)
    analytic = {name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for name, p in params.items()}

    entries: List[Tuple[str, Tuple[int, ...]]] = []
    for name, p in params.items():
        for flat in range(p.data.size):
            entries.append((name, np.unravel_index(flat, p.data.shape)))
    rng = np.random.default_rng(seed)
    if len(entries) > n_samples:
        picks = rng.choice(len(entries), size=n_samples, replace=False)
        entries = [entries[i] for i in picks]

    failures: List[GradCheckFailure] = []
    max_rel = 0.0
    for name, index in entries:
        p = params[name]
        orig = p.data[index]
        p.data[index] = orig + eps
        plus = loss_fn().item()
        p.data[index] = orig - eps
        minus = loss_fn().item()
        p.data[index] = orig
        numeric = (plus - minus) / (2.0 * eps)
        a = float(analytic[name][index])
        rel = abs(a - numeric) / max(1.0, abs(a))
        max_rel = max(max_rel, rel)
        if rel >= tol:
            failures.append(GradCheckFailure(name, tuple(int(i) for i in index), a, numeric, rel))
    return GradCheckReport(n_checked=len(entries), max_rel_error=max_rel, tol=tol, failures=failures)


# ---------------------------------------------------------------------------
# Seed derivation
# ---------------------------------------------------------------------------

def derive_seed(master: int, *parts) -> int:
    """Stable 64-bit sub-seed from a master seed and any hashable context.

    SHA-256 over the repr of the tuple; used everywhere a stage or item
    needs its own RNG so that results do not depend on iteration order or
    worker count.
    """
    import hashlib

    payload = repr((int(master),) + tuple(parts)).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")
