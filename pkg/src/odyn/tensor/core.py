"""Dense tensors with reverse-mode differentiation on an explicit tape.

A DiffRecord is an ordered list of executed operations (a Wengert list);
construction order is a topological order of the data-flow graph, so the
backward pass is a single reverse sweep that visits each entry once and
sums gradients over multiple consumers.

Recording is explicit: operations append to the record that is active via
`with DiffRecord() as rec:`. Outside such a block every op runs without
bookkeeping, which is the inference fast path. A tensor and the record it
was created under must stay confined to a single thread.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import DomainError, ShapeError

Array = np.ndarray

_FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))

_default_dtype = np.dtype(np.float32)


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created tensors (float32 or float64)."""
    global _default_dtype
    dt = np.dtype(dtype)
    if dt not in _FLOAT_DTYPES:
        raise DomainError(f"default dtype must be float32 or float64, got {dt}")
    _default_dtype = dt


def get_default_dtype() -> np.dtype:
    return _default_dtype


class precision:
    """Context manager that temporarily switches the default dtype.

    Used by gradient checks to run float64 through code written for the
    float32 training default.
    """

    def __init__(self, dtype):
        self._dtype = np.dtype(dtype)
        self._saved: np.dtype | None = None

    def __enter__(self):
        self._saved = get_default_dtype()
        set_default_dtype(self._dtype)
        return self

    def __exit__(self, *exc):
        set_default_dtype(self._saved)
        return False


class _Entry:
    __slots__ = ("out", "inputs", "bwd")

    def __init__(self, out: "Tensor", inputs: tuple["Tensor", ...], bwd: Callable):
        self.out = out
        self.inputs = inputs
        self.bwd = bwd


_active_record: "DiffRecord | None" = None


class DiffRecord:
    """Tape of differentiable ops, in execution order.

    Acts as a context manager; entering makes it the active record that
    subsequent operations append to. Records may nest (the inner one wins
    while active).
    """

    __slots__ = ("entries", "_outer")

    def __init__(self):
        self.entries: list[_Entry] = []
        self._outer: DiffRecord | None = None

    def __enter__(self) -> "DiffRecord":
        global _active_record
        self._outer = _active_record
        _active_record = self
        return self

    def __exit__(self, *exc):
        global _active_record
        _active_record = self._outer
        self._outer = None
        return False

    def __len__(self) -> int:
        return len(self.entries)


class no_grad:
    """Context that suspends recording even inside a DiffRecord block."""

    def __init__(self):
        self._saved: DiffRecord | None = None

    def __enter__(self):
        global _active_record
        self._saved = _active_record
        _active_record = None
        return self

    def __exit__(self, *exc):
        global _active_record
        _active_record = self._saved
        return False


class Tensor:
    """A numpy array plus gradient bookkeeping.

    `requires_grad=True` marks a leaf whose gradient should be kept after
    backward(). Tensors produced by operations under an active DiffRecord
    carry a reference to that record.
    """

    __slots__ = ("data", "grad", "requires_grad", "record", "_idx")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise DomainError("wrapping a Tensor in a Tensor is not supported")
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, np.ndarray) and data.dtype in _FLOAT_DTYPES:
            arr = data
        else:
            arr = np.asarray(data, dtype=_default_dtype)
        if arr.ndim > 0 and not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        self.data: Array = arr
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self.record: DiffRecord | None = None
        self._idx = -1

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
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        """A constant leaf sharing this tensor's data."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{flag})"

    # arithmetic sugar; the module-level functions do the real work
    def __add__(self, other):
        return add(self, _wrap(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other, self))

    def __rsub__(self, other):
        return sub(_wrap(other, self), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self) -> "Tensor":
        return sum_all(self)

    def mean(self) -> "Tensor":
        return mean_all(self)


def _wrap(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def zeros(shape, dtype=None) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype or _default_dtype))


def _check_same_dtype(*ts: Tensor) -> None:
    dt = ts[0].dtype
    for t in ts[1:]:
        if t.dtype != dt:
            raise ShapeError(f"dtype mismatch: {dt} vs {t.dtype}")


def make_op(out_data: Array, inputs: tuple[Tensor, ...], bwd: Callable) -> Tensor:
    """Wrap an op result, appending a tape entry when recording applies.

    `bwd(gout)` must return per-input gradient arrays (or None), aligned
    with `inputs`.
    """
    out = Tensor(out_data)
    rec = _active_record
    if rec is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.record = rec
        out._idx = len(rec.entries)
        rec.entries.append(_Entry(out, inputs, bwd))
    return out


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar, accumulating gradients into leaves.

    Each tape entry is visited exactly once, in reverse execution order;
    a tensor consumed by several later ops receives the sum of their
    contributions before its own entry is processed.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar, got shape {loss.shape}")
    rec = loss.record
    if rec is None:
        raise DomainError("backward target carries no differentiation record")
    loss.grad = np.ones_like(loss.data)
    for entry in reversed(rec.entries[: loss._idx + 1]):
        gout = entry.out.grad
        if gout is None:
            continue
        grads = entry.bwd(gout)
        for t, g in zip(entry.inputs, grads):
            if g is None:
                continue
            if g.shape != t.data.shape:
                raise ShapeError(
                    f"gradient shape {g.shape} does not match tensor shape {t.data.shape}"
                )
            if t.grad is None:
                t.grad = g.copy() if g.base is not None else g
            else:
                t.grad = t.grad + g
        # intermediate grads are not needed once consumed
        entry.out.grad = None


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data + b.data

    def bwd(g, _a=a, _b=b):
        ga = _unbroadcast(g, _a.data.shape) if _a.requires_grad else None
        gb = _unbroadcast(g, _b.data.shape) if _b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), bwd)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data - b.data

    def bwd(g, _a=a, _b=b):
        ga = _unbroadcast(g, _a.data.shape) if _a.requires_grad else None
        gb = _unbroadcast(-g, _b.data.shape) if _b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), bwd)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_same_dtype(a, b)
    out = a.data * b.data

    def bwd(g, _a=a, _b=b):
        ga = _unbroadcast(g * _b.data, _a.data.shape) if _a.requires_grad else None
        gb = _unbroadcast(g * _a.data, _b.data.shape) if _b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), bwd)


def scale(a: Tensor, c: float) -> Tensor:
    out = a.data * a.dtype.type(c)

    def bwd(g, _c=c):
        return (g * _c,)

    return make_op(out, (a,), bwd)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product (M, K) @ (K, N)."""
    _check_same_dtype(a, b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shapes {a.shape} and {b.shape} do not align")
    out = a.data @ b.data

    def bwd(g, _a=a, _b=b):
        ga = g @ _b.data.T if _a.requires_grad else None
        gb = _a.data.T @ g if _b.requires_grad else None
        return ga, gb

    return make_op(out, (a, b), bwd)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"cannot reshape {a.shape} to {shape}: {e}") from None

    def bwd(g, _shape=a.data.shape):
        return (g.reshape(_shape),)

    return make_op(out, (a,), bwd)


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = list(tensors)
    if not ts:
        raise ShapeError("concat of an empty sequence")
    if len(ts) == 1:
        # still a real op so gradients route through
        return reshape(ts[0], ts[0].shape)
    _check_same_dtype(*ts)
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat shapes {[t.shape for t in ts]} on axis {axis}: {e}") from None
    sizes = [t.data.shape[axis] for t in ts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g, _ts=ts, _splits=splits, _axis=axis):
        parts = np.split(g, _splits, axis=_axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, _ts))

    return make_op(out, tuple(ts), bwd)


def gather_rows(x: Tensor, idx: Array) -> Tensor:
    """Select rows x[idx] along axis 0; duplicates allowed."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"gather index must be 1-D, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise DomainError(f"gather index out of range for {x.shape[0]} rows")
    out = x.data[idx]

    def bwd(g, _x=x, _idx=idx):
        gx = np.zeros_like(_x.data)
        np.add.at(gx, _idx, g)
        return (gx,)

    return make_op(out, (x,), bwd)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Contiguous slice along axis 1 (channels/features)."""
    if x.data.ndim < 2:
        raise ShapeError(f"slice_channels needs at least 2 dims, got {x.shape}")
    if not (0 <= start < stop <= x.shape[1]):
        raise DomainError(
            f"slice [{start}:{stop}] out of range for axis of size {x.shape[1]}"
        )
    out = np.ascontiguousarray(x.data[:, start:stop])

    def bwd(g, _x=x, _a=start, _b=stop):
        gx = np.zeros_like(_x.data)
        gx[:, _a:_b] = g
        return (gx,)

    return make_op(out, (x,), bwd)


def segment_sum(x: Tensor, segment_ids: Array, num_segments: int) -> Tensor:
    """Sum rows of x into `num_segments` buckets given per-row ids.

    Empty segments come out as zero rows.
    """
    ids = np.asarray(segment_ids, dtype=np.int64)
    if ids.ndim != 1 or ids.shape[0] != x.shape[0]:
        raise ShapeError(
            f"segment ids shape {ids.shape} does not match {x.shape[0]} rows"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= num_segments):
        raise DomainError(f"segment id out of range for {num_segments} segments")
    out = np.zeros((num_segments,) + x.data.shape[1:], dtype=x.dtype)
    np.add.at(out, ids, x.data)

    def bwd(g, _ids=ids):
        return (g[_ids],)

    return make_op(out, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    out = x.data.sum(dtype=x.dtype)

    def bwd(g, _x=x):
        return (np.broadcast_to(g, _x.data.shape).astype(_x.dtype, copy=True),)

    return make_op(np.asarray(out), (x,), bwd)


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    if n == 0:
        raise ShapeError("mean of an empty tensor")
    out = x.data.mean(dtype=x.dtype)

    def bwd(g, _x=x, _n=n):
        return (np.broadcast_to(g / _n, _x.data.shape).astype(_x.dtype, copy=True),)

    return make_op(np.asarray(out), (x,), bwd)
