"""Minimal reverse-mode autodiff on numpy arrays.

Covers exactly what the planning networks need: dense layers, embedding
lookups, layer norm, GELU (tanh form), tanh, softmax / log-softmax, softmax
cross-entropy, multi-head self-attention building blocks, residual adds, and
an AdamW optimizer with decoupled weight decay and global-norm clipping.

Float32 by default; arrays that arrive as float64 keep their dtype, which the
finite-difference checks use for tighter tolerances.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

DEFAULT_DTYPE = np.float32
LAYERNORM_EPS = 1e-5
_GELU_C = 0.7978845608028654  # sqrt(2 / pi)

PARAM_STORE_VERSION = 1


class AutodiffError(Exception):
    pass


def _as_array(value, like: np.ndarray | None = None) -> np.ndarray:
    arr = np.asarray(value)
    if not np.issubdtype(arr.dtype, np.floating):
        dtype = like.dtype if like is not None else DEFAULT_DTYPE
        arr = arr.astype(dtype)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False) -> None:
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self) -> None:
        """Populate gradients of everything this scalar loss depends on."""
        if self.data.size != 1:
            raise AutodiffError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape).astype(a.data.dtype))
        _accumulate(b, _unbroadcast(g, b.shape).astype(b.data.dtype))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape).astype(a.data.dtype))
        _accumulate(b, _unbroadcast(g * a.data, b.shape).astype(b.data.dtype))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    data = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.shape))
        _accumulate(b, _unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def reshape(x: Tensor, shape) -> Tensor:
    x = _wrap(x)
    data = x.data.reshape(shape)

    def backward(g):
        _accumulate(x, g.reshape(x.shape))

    return _make(data, (x,), backward)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    x = _wrap(x)
    data = np.swapaxes(x.data, a, b)

    def backward(g):
        _accumulate(x, np.swapaxes(g, a, b))

    return _make(data, (x,), backward)


def index(x: Tensor, key) -> Tensor:
    """Basic (slice / integer) indexing."""
    x = _wrap(x)
    data = x.data[key]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        _accumulate(x, full)

    return _make(data, (x,), backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [_wrap(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(sl)])

    return _make(data, tuple(tensors), backward)


def tsum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            g = np.expand_dims(g, axes)
        _accumulate(x, np.broadcast_to(g, x.shape).astype(x.data.dtype))

    return _make(data, (x,), backward)


def tmean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _wrap(x)
    count = x.data.size if axis is None else np.prod(
        [x.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))]
    )
    return mul(tsum(x, axis=axis, keepdims=keepdims), 1.0 / float(count))


def embed(table: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather: table (V, D) indexed by an integer array."""
    table = _wrap(table)
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise AutodiffError(
            f"embedding index out of range [0, {table.shape[0]}): "
            f"[{idx.min()}, {idx.max()}]"
        )
    data = table.data[idx]

    def backward(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx.ravel(), g.reshape(-1, table.shape[-1]))
        _accumulate(table, full)

    return _make(data, (table,), backward)


def tanh(x: Tensor) -> Tensor:
    x = _wrap(x)
    data = np.tanh(x.data)

    def backward(g):
        _accumulate(x, g * (1.0 - data * data))

    return _make(data, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation:
    0.5 * x * (1 + tanh(sqrt(2/pi) * (x + 0.044715 * x^3)))."""
    x = _wrap(x)
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)
    data = 0.5 * v * (1.0 + t)

    def backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * v * v)
        _accumulate(x, (g * (0.5 * (1.0 + t) + 0.5 * v * dt)).astype(v.dtype))

    return _make(data, (x,), backward)


def layernorm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYERNORM_EPS) -> Tensor:
    """Layer normalization over the last axis."""
    x, gain, bias = _wrap(x), _wrap(gain), _wrap(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        dxhat = g * gain.data
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = inv * (dxhat - m1 - xhat * m2)
        _accumulate(x, dx.astype(x.data.dtype))
        reduce_axes = tuple(range(g.ndim - 1))
        _accumulate(gain, (g * xhat).sum(axis=reduce_axes))
        _accumulate(bias, g.sum(axis=reduce_axes))

    return _make(data, (x, gain, bias), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        _accumulate(x, (data * (g - dot)).astype(x.data.dtype))

    return _make(data, (x,), backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = _wrap(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    data = shifted - lse
    probs = np.exp(data)

    def backward(g):
        _accumulate(
            x, (g - probs * g.sum(axis=axis, keepdims=True)).astype(x.data.dtype)
        )

    return _make(data, (x,), backward)


def softmax_xent(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy between softmax(logits) and target distributions.

    `targets` rows are probability distributions (two-hot, one-hot, or soft);
    they carry no gradient.
    """
    logits = _wrap(logits)
    t = np.asarray(targets, dtype=logits.data.dtype)
    if t.shape != logits.shape:
        raise AutodiffError(f"target shape {t.shape} != logits shape {logits.shape}")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - lse
    rows = max(1, int(np.prod(logits.shape[:-1])))
    data = np.asarray(-(t * logp).sum() / rows, dtype=logits.data.dtype)

    def backward(g):
        probs = np.exp(logp)
        _accumulate(logits, (g * (probs - t) / rows).astype(logits.data.dtype))

    return _make(data, (logits,), backward)


def multi_head_attention(
    x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor, num_heads: int
) -> Tensor:
    """Self-attention over x (B, T, D) with square projection weights."""
    b, t, d = x.shape
    if d % num_heads:
        raise AutodiffError(f"d_model {d} not divisible by {num_heads} heads")
    dh = d // num_heads

    def split(z: Tensor) -> Tensor:
        return swapaxes(reshape(z, (b, t, num_heads, dh)), 1, 2)

    q = split(matmul(x, wq))
    k = split(matmul(x, wk))
    v = split(matmul(x, wv))
    scores = mul(matmul(q, swapaxes(k, -1, -2)), 1.0 / float(np.sqrt(dh)))
    attn = softmax(scores, axis=-1)
    ctx = matmul(attn, v)  # (B, H, T, dh)
    merged = reshape(swapaxes(ctx, 1, 2), (b, t, d))
    return matmul(merged, wo)


class Parameter(Tensor):
    __slots__ = ("name", "m", "v")

    def __init__(self, data, name: str) -> None:
        super().__init__(np.asarray(data, dtype=DEFAULT_DTYPE), requires_grad=True)
        self.name = name
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)


class Module:
    """Lightweight container; parameters() walks attributes recursively."""

    def parameters(self) -> list[Parameter]:
        params: list[Parameter] = []
        seen: set[int] = set()

        def visit(obj):
            if isinstance(obj, Parameter):
                if id(obj) not in seen:
                    seen.add(id(obj))
                    params.append(obj)
            elif isinstance(obj, Module):
                for value in vars(obj).values():
                    visit(value)
            elif isinstance(obj, (list, tuple)):
                for value in obj:
                    visit(value)
            elif isinstance(obj, dict):
                for value in obj.values():
                    visit(value)

        visit(self)
        return params

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Dense(Module):
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, name: str):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        self.w = Parameter(rng.normal(0.0, scale, (fan_in, fan_out)), f"{name}.w")
        self.b = Parameter(np.zeros(fan_out), f"{name}.b")

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.w), self.b)


class LayerNorm(Module):
    def __init__(self, dim: int, name: str):
        self.gain = Parameter(np.ones(dim), f"{name}.gain")
        self.bias = Parameter(np.zeros(dim), f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return layernorm(x, self.gain, self.bias)


class Embedding(Module):
    def __init__(self, vocab: int, dim: int, rng: np.random.Generator, name: str):
        self.table = Parameter(rng.normal(0.0, 0.02, (vocab, dim)), name)

    def __call__(self, idx: np.ndarray) -> Tensor:
        return embed(self.table, idx)


def global_grad_norm(params: list[Parameter]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad.astype(np.float64) ** 2).sum())
    return float(np.sqrt(total))


def clip_grad_norm(params: list[Parameter], max_norm: float) -> float:
    """Scale gradients so their global norm is at most max_norm; returns the
    pre-clip norm."""
    norm = global_grad_norm(params)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


class AdamW:
    """Adam with decoupled weight decay (decay applied directly to weights)."""

    def __init__(
        self,
        params: list[Parameter],
        lr: float = 3e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ) -> None:
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for p in self.params:
            if self.weight_decay:
                p.data *= 1.0 - self.lr * self.weight_decay
            if p.grad is None:
                continue
            p.m = b1 * p.m + (1 - b1) * p.grad
            p.v = b2 * p.v + (1 - b2) * (p.grad * p.grad)
            p.data -= self.lr * (p.m / bc1) / (np.sqrt(p.v / bc2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def gradient_check(
    loss_fn,
    params: list[Parameter],
    h: float = 1e-3,
    tol: float = 1e-3,
    max_entries: int = 1000,
    rng: np.random.Generator | None = None,
) -> dict:
    """Central finite differences vs reverse-mode on up to `max_entries`
    coordinates per parameter. loss_fn() must rebuild the graph each call.

    Comparison is the norm-ratio ||g_fd - g_ad|| / (||g_fd|| + ||g_ad||) over
    the probed coordinates.
    """
    rng = rng or np.random.default_rng(0)
    saved = [p.data for p in params]
    # Run the check in float64: float32 rounding at h = 1e-3 would otherwise
    # dominate the finite-difference estimate.
    for p in params:
        p.data = p.data.astype(np.float64)
        p.grad = None
    try:
        return _gradient_check_impl(loss_fn, params, h, tol, max_entries, rng)
    finally:
        for p, data in zip(params, saved):
            p.data = data
            p.grad = None


def _gradient_check_impl(loss_fn, params, h, tol, max_entries, rng) -> dict:
    loss = loss_fn()
    loss.backward()
    analytic = {id(p): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}

    report = {"passed": True, "per_param": {}}
    for p in params:
        flat = p.data.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_entries else rng.choice(n, max_entries, replace=False)
        fd = np.zeros(len(coords))
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + h
            up = float(loss_fn().data)
            flat[c] = orig - h
            down = float(loss_fn().data)
            flat[c] = orig
            fd[j] = (up - down) / (2 * h)
        ad = analytic[id(p)].reshape(-1)[coords]
        denom = np.linalg.norm(fd) + np.linalg.norm(ad)
        err = float(np.linalg.norm(fd - ad) / denom) if denom > 0 else 0.0
        name = getattr(p, "name", f"param{id(p)}")
        report["per_param"][name] = err
        if err >= tol:
            report["passed"] = False
    report["max_error"] = max(report["per_param"].values(), default=0.0)
    return report


def save_param_store(
    directory: str | Path, named: dict[str, np.ndarray], metadata: dict | None = None
) -> None:
    """Parameter store: manifest.json (names, shapes, versions) + params.bin
    holding length-prefixed little-endian float32 arrays in manifest order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": PARAM_STORE_VERSION,
        "metadata": metadata or {},
        "tensors": [
            {"name": name, "shape": list(arr.shape)} for name, arr in named.items()
        ],
    }
    with open(directory / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
    with open(directory / "params.bin", "wb") as fh:
        for arr in named.values():
            flat = np.ascontiguousarray(arr, dtype="<f4").reshape(-1)
            fh.write(struct.pack("<Q", flat.size))
            fh.write(flat.tobytes())


def load_param_store(directory: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    with open(directory / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != PARAM_STORE_VERSION:
        raise AutodiffError(
            f"unsupported parameter store version: {manifest.get('format_version')}"
        )
    named: dict[str, np.ndarray] = {}
    with open(directory / "params.bin", "rb") as fh:
        for entry in manifest["tensors"]:
            (count,) = struct.unpack("<Q", fh.read(8))
            shape = tuple(entry["shape"])
            if count != int(np.prod(shape, dtype=np.int64)):
                raise AutodiffError(f"corrupt store: {entry['name']}")
            data = np.frombuffer(fh.read(count * 4), dtype="<f4").reshape(shape)
            named[entry["name"]] = data.astype(np.float32)
    return named, manifest.get("metadata", {})
