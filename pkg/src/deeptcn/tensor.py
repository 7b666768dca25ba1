"""Dense tensors backed by numpy with a recorded tape for reverse-mode gradients.

Every primitive checks its result for NaN/Inf and raises :class:`NumericError`
naming the producing op. Primitives applied while a :class:`Tape` is active
record a backward rule when any operand is trainable or itself recorded.
"""
from __future__ import annotations

import contextlib
import contextvars
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, DomainError, NumericError

_DTYPE: contextvars.ContextVar[type] = contextvars.ContextVar("deeptcn_dtype", default=np.float32)
_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar("deeptcn_tape", default=None)
_KINKS: contextvars.ContextVar["list | None"] = contextvars.ContextVar("deeptcn_kinks", default=None)


def default_dtype() -> type:
    return _DTYPE.get()


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for new tensors (float32 or float64)."""
    dtype = np.dtype(dtype).type
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported precision {dtype!r}")
    token = _DTYPE.set(dtype)
    try:
        yield
    finally:
        _DTYPE.reset(token)


class Tensor:
    """n-dimensional real array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad", "name", "__weakref__")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str | None = None):
        self.data = np.array(data, dtype=dtype or default_dtype())
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t.name = None
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise DimensionError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    def __len__(self) -> int:
        return self.shape[0]

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __neg__ = lambda self: mul(self, -1.0)
    __matmul__ = lambda self, other: matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None) -> "Tensor":
        return tsum(self, axis)

    def mean(self, axis=None) -> "Tensor":
        return mean(self, axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)


def tensor(data, requires_grad: bool = False, dtype=None, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, dtype=dtype, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# --------------------------------------------------------------------------
# tape


@dataclass
class _Record:
    op: str
    out: Tensor
    inputs: tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered list of primitive applications, replayed in reverse by :meth:`gradient`."""

    records: list[_Record] = field(default_factory=list)
    _tracked: set[int] = field(default_factory=set, repr=False)
    _token: contextvars.Token | None = field(default=None, repr=False)

    def __enter__(self) -> "Tape":
        self._token = _TAPE.set(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE.reset(self._token)
        self._token = None

    def watches(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def record(self, op, out, inputs, backward) -> None:
        self.records.append(_Record(op, out, inputs, backward))
        self._tracked.add(id(out))

    def gradient(self, target: Tensor, sources: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradients of a scalar ``target`` with respect to ``sources``.

        Sources that do not influence the target get zero arrays.
        """
        grads = self._propagate(target)
        return [grads.get(id(s), np.zeros_like(s.data)) for s in sources]

    def backward(self, target: Tensor) -> None:
        """Accumulate d(target)/d(leaf) into ``.grad`` of every trainable leaf."""
        grads = self._propagate(target)
        seen: set[int] = set()
        for rec in self.records:
            for t in rec.inputs:
                if t.requires_grad and id(t) not in seen and id(t) in grads:
                    seen.add(id(t))
                    g = grads[id(t)]
                    t.grad = g.copy() if t.grad is None else t.grad + g

    def _propagate(self, target: Tensor) -> dict[int, np.ndarray]:
        if target.size != 1:
            raise DimensionError(f"gradient target must be a scalar, got shape {target.shape}")
        grads: dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for rec in reversed(self.records):
            g = grads.get(id(rec.out))
            if g is None:
                continue
            for t, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not self.watches(t):
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        return grads


def _finish(op: str, out_arr: np.ndarray, inputs: tuple[Tensor, ...], backward) -> Tensor:
    if not np.all(np.isfinite(out_arr)):
        raise NumericError(f"{op} produced non-finite values")
    out = Tensor._wrap(out_arr)
    tape = _TAPE.get()
    if tape is not None and any(tape.watches(t) for t in inputs):
        tape.record(op, out, inputs, backward)
    return out


def _pair(a, b, op: str) -> tuple[Tensor, Tensor]:
    a = a if isinstance(a, Tensor) else Tensor(a, dtype=_peer_dtype(b))
    b = b if isinstance(b, Tensor) else Tensor(b, dtype=a.dtype)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")
    if a.size == 1 and b.size != 1 and a.ndim > b.ndim:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")
    if b.size == 1 and a.size != 1 and b.ndim > a.ndim:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return a, b


def _peer_dtype(x):
    return x.dtype if isinstance(x, Tensor) else None


def _unbroadcast(g: np.ndarray, like: Tensor) -> np.ndarray:
    if g.shape == like.shape:
        return g
    return np.asarray(g.sum(), dtype=like.dtype).reshape(like.shape)


# --------------------------------------------------------------------------
# elementwise


def add(a, b) -> Tensor:
    a, b = _pair(a, b, "add")
    return _finish("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b, "sub")
    return _finish("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b, "mul")
    return _finish("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a), _unbroadcast(g * a.data, b)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b, "div")
    if np.any(b.data == 0):
        raise DomainError("div: division by zero")
    out = a.data / b.data
    return _finish("div", out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a), _unbroadcast(-g * out / b.data, b)))


@contextlib.contextmanager
def kink_probe():
    """Collect the active-unit mask of every relu evaluated inside the block."""
    seen: list[np.ndarray] = []
    token = _KINKS.set(seen)
    try:
        yield seen
    finally:
        _KINKS.reset(token)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    probe = _KINKS.get()
    if probe is not None:
        probe.append(mask.copy())
    return _finish("relu", np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + e), e / (1 + e)).astype(z.dtype)


def softplus(x: Tensor) -> Tensor:
    z = x.data
    out = np.maximum(z, 0) + np.log1p(np.exp(-np.abs(z)))
    return _finish("softplus", out.astype(x.dtype), (x,), lambda g: (g * _sigmoid(z),))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(x.data)
    return _finish("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0):
        raise DomainError("log: non-positive input")
    return _finish("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def square(x: Tensor) -> Tensor:
    return _finish("square", x.data * x.data, (x,), lambda g: (2 * g * x.data,))


ELEMENTWISE: dict[str, Callable] = {
    "add": add, "sub": sub, "mul": mul, "div": div,
    "relu": relu, "softplus": softplus, "exp": exp, "log": log, "square": square,
}


def elementwise(op: str, *args) -> Tensor:
    try:
        fn = ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# --------------------------------------------------------------------------
# linear algebra and reductions


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: shapes {a.shape} and {b.shape} are not aligned")
    return _finish("matmul", a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T, a.data.T @ g))


def tsum(x: Tensor, axis=None) -> Tensor:
    out = np.asarray(x.data.sum(axis=axis), dtype=x.dtype)

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype),)

    return _finish("sum", out, (x,), backward)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(tsum(x, axis), Tensor(1.0 / n, dtype=x.dtype))


def bias_add(x: Tensor, b: Tensor, axis: int) -> Tensor:
    """Add a vector ``b`` along ``axis`` of ``x``."""
    axis = axis % x.ndim
    if b.ndim != 1 or b.shape[0] != x.shape[axis]:
        raise DimensionError(f"bias_add: bias {b.shape} does not match axis {axis} of {x.shape}")
    shape = [1] * x.ndim
    shape[axis] = -1
    others = tuple(i for i in range(x.ndim) if i != axis)
    return _finish("bias_add", x.data + b.data.reshape(shape), (x, b),
                   lambda g: (g, g.sum(axis=others)))


def channel_affine(x: Tensor, scale: Tensor, shift: Tensor, axis: int) -> Tensor:
    """``x * scale + shift`` with per-channel vectors along ``axis``."""
    axis = axis % x.ndim
    c = x.shape[axis]
    if scale.shape != (c,) or shift.shape != (c,):
        raise DimensionError(f"channel_affine: {scale.shape}/{shift.shape} vs {c} channels")
    shape = [1] * x.ndim
    shape[axis] = -1
    s = scale.data.reshape(shape)
    others = tuple(i for i in range(x.ndim) if i != axis)
    out = x.data * s + shift.data.reshape(shape)
    return _finish("channel_affine", out, (x, scale, shift),
                   lambda g: (g * s, (g * x.data).sum(axis=others), g.sum(axis=others)))


def batch_standardize(x: Tensor, axis: int, eps: float) -> tuple[Tensor, np.ndarray, np.ndarray]:
    """Normalize each channel along ``axis`` by statistics over all other axes.

    Returns the normalized tensor with the batch mean and (biased) variance.
    """
    axis = axis % x.ndim
    others = tuple(i for i in range(x.ndim) if i != axis)
    mu = x.data.mean(axis=others, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=others, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def backward(g):
        gm = g.mean(axis=others, keepdims=True)
        gxm = (g * xhat).mean(axis=others, keepdims=True)
        return ((g - gm - xhat * gxm) * inv,)

    out = _finish("batch_standardize", xhat.astype(x.dtype), (x,), backward)
    return out, mu.reshape(-1), var.reshape(-1)


# --------------------------------------------------------------------------
# shape manipulation


def reshape(x: Tensor, shape) -> Tensor:
    return _finish("reshape", x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(reversed(range(x.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _finish("transpose", np.ascontiguousarray(x.data.transpose(axes)), (x,),
                   lambda g: (g.transpose(inverse),))


def getitem(x: Tensor, index) -> Tensor:
    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, index, g)
        return (gx,)

    return _finish("getitem", np.array(x.data[index]), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = tuple(tensors)
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis):
            raise DimensionError(f"concat: shapes {ref.shape} and {t.shape} differ off axis {axis}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        return [np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))]

    return _finish("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def expand(x: Tensor, axis: int, n: int) -> Tensor:
    """Insert a new axis at ``axis`` and repeat ``x`` ``n`` times along it."""
    out = np.repeat(np.expand_dims(x.data, axis), n, axis=axis)
    return _finish("expand", out, (x,), lambda g: (g.sum(axis=axis),))


def gather_rows(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather ``table[indices]``; backward scatter-adds into the referenced rows."""
    idx = np.asarray(indices, dtype=np.int64)

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _finish("gather_rows", table.data[idx], (table,), backward)


def causal_conv1d(x: Tensor, w: Tensor, dilation: int) -> Tensor:
    """Dilated causal convolution without bias.

    ``x`` is (batch, in, T), ``w`` is (out, in, K). Output position t reads
    ``x[t - dilation*k]`` for k < K, treating negative positions as zeros.
    """
    if x.ndim != 3 or w.ndim != 3:
        raise DimensionError(f"causal_conv1d: expected 3-d input and weights, got {x.shape} and {w.shape}")
    B, C, T = x.shape
    _, I, K = w.shape
    if C != I:
        raise DimensionError(f"causal_conv1d: input has {C} channels, weights expect {I} ({x.shape} vs {w.shape})")
    pad = dilation * (K - 1)
    xp = np.concatenate([np.zeros((B, C, pad), dtype=x.dtype), x.data], axis=2) if pad else x.data
    cols = np.stack([xp[:, :, pad - dilation * k: pad - dilation * k + T] for k in range(K)], axis=2)
    out = np.tensordot(w.data, cols, axes=([1, 2], [1, 2])).transpose(1, 0, 2)

    def backward(g):
        gw = np.tensordot(g, cols, axes=([0, 2], [0, 3]))
        gcols = np.tensordot(w.data, g, axes=([0], [1]))  # (I, K, B, T)
        gxp = np.zeros((C, B, T + pad), dtype=x.dtype)
        for k in range(K):
            gxp[:, :, pad - dilation * k: pad - dilation * k + T] += gcols[:, k]
        return gxp[:, :, pad:].transpose(1, 0, 2), gw

    return _finish("causal_conv1d", np.ascontiguousarray(out), (x, w), backward)


# --------------------------------------------------------------------------
# gradient checking


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps a tensor to a scalar tensor. Runs in 64-bit precision; the
    error for each component is ``|a - c| / max(|a|, |c|, 1e-12)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    with precision(np.float64):
        leaf = Tensor(x0, requires_grad=True)
        with Tape() as tape:
            y = f(leaf)
        _scalar_value(y)
        (analytic,) = tape.gradient(y, [leaf])
        numeric = np.zeros_like(x0)
        flat = numeric.reshape(-1)
        for i in range(x0.size):
            xp = x0.copy().reshape(-1)
            xp[i] += eps
            fp = _scalar_value(f(Tensor(xp.reshape(x0.shape))))
            xp[i] -= 2 * eps
            fm = _scalar_value(f(Tensor(xp.reshape(x0.shape))))
            flat[i] = (fp - fm) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric) / denom)) if x0.size else 0.0


def _scalar_value(y) -> float:
    v = y.item() if isinstance(y, Tensor) else float(y)
    if not np.isfinite(v):
        raise NumericError("grad_check: function value is not finite")
    return v


@dataclass
class RngState:
    """Seed for the counter-based Philox generator; streams are split by key."""

    seed: int
    algorithm: str = "philox4x64"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        self.seed = int(self.seed)

    def generator(self, stream: int = 0) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(stream,))
        return np.random.Generator(np.random.Philox(seq))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "algorithm": self.algorithm}
