"""Minimal reverse-mode autodiff over float64 numpy arrays.

Every primitive records one TapeRecord on the active Tape; the backward
pass walks the records in reverse order exactly once. All math is double
precision and deterministic: same inputs produce bit-identical outputs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A node in the computation graph wrapping a float64 ndarray.

    Most tensors are 2-D (rows x cols); sequence batches use 3-D
    (batch, time, channels). Gradients accumulate into ``grad``.
    """

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class TapeRecord:
    """One primitive application: inputs, output, and its backward rule."""

    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs: Sequence[Tensor], output: Tensor,
                 backward: Callable[[np.ndarray], Sequence]):
        self.inputs = tuple(inputs)
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of primitive applications for one computation.

    Use as a context manager; ops executed inside are recorded when any
    input requires a gradient. ``backward`` replays the records exactly
    once, in reverse order.
    """

    _active: "Tape | None" = None

    def __init__(self):
        self.records: list[TapeRecord] = []

    def __enter__(self) -> "Tape":
        if Tape._active is not None:
            raise RuntimeError("nested tapes are not supported")
        Tape._active = self
        return self

    def __exit__(self, exc_type, exc, tb):
        Tape._active = None
        return False

    def backward(self, loss: Tensor):
        if loss.data.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
        if not np.isfinite(loss.data).all():
            raise FloatingPointError("non-finite loss")
        loss.grad = np.ones_like(loss.data)
        for rec in reversed(self.records):
            out_grad = rec.output.grad
            if out_grad is None:
                continue
            grads = rec.backward(out_grad)
            for inp, g in zip(rec.inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = g
                else:
                    inp.grad = inp.grad + g


def _record(inputs: Sequence[Tensor], out_data: np.ndarray,
            backward: Callable[[np.ndarray], Sequence]) -> Tensor:
    requires = any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires)
    tape = Tape._active
    if tape is not None and requires:
        tape.records.append(TapeRecord(inputs, out, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


# ---------------------------------------------------------------------------
# Elementwise and structural primitives
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as e:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape}: {e}") from None

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record([a, b], out, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return add(a, scale(b, -1.0))


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError as e:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape}: {e}") from None
    da, db = a.data, b.data

    def backward(g):
        return _unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)

    return _record([a, b], out, backward)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def backward(g):
        return (g * c,)

    return _record([a], a.data * c, backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.data.shape} and {b.data.shape}")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims differ: {a.data.shape} x {b.data.shape}")
    da, db = a.data, b.data

    def backward(g):
        return g @ db.T, da.T @ g

    return _record([a, b], da @ db, backward)


def transpose(a: Tensor) -> Tensor:
    def backward(g):
        return (g.T,)

    return _record([a], a.data.T.copy(), backward)


def reshape(a: Tensor, shape: tuple) -> Tensor:
    orig = a.data.shape

    def backward(g):
        return (g.reshape(orig),)

    return _record([a], a.data.reshape(shape), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0.0

    def backward(g):
        return (g * mask,)

    return _record([a], np.where(mask, a.data, 0.0), backward)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return _record([a], out, backward)


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))

    def backward(g):
        return (g * out * (1.0 - out),)

    return _record([a], out, backward)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape

    def backward(g):
        return (np.full(shape, float(g.reshape(-1)[0])),)

    return _record([a], np.array([[a.data.sum()]]), backward)


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.data.size)


def take_rows(a: Tensor, idx) -> Tensor:
    """Gather rows of a 2-D tensor; backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2:
        raise ShapeError(f"take_rows needs a 2-D tensor, got {a.data.shape}")
    n = a.data.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"take_rows: index out of range for {n} rows")
    shape = a.data.shape

    def backward(g):
        ga = np.zeros(shape)
        np.add.at(ga, idx, g)
        return (ga,)

    return _record([a], a.data[idx].copy(), backward)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    datas = [t.data for t in tensors]
    if any(d.ndim != 2 for d in datas):
        raise ShapeError("concat_cols needs 2-D tensors")
    widths = [d.shape[1] for d in datas]
    splits = np.cumsum(widths)[:-1]

    def backward(g):
        return np.split(g, splits, axis=1)

    return _record(list(tensors), np.concatenate(datas, axis=1), backward)


def concat_rows(tensors: Sequence[Tensor]) -> Tensor:
    datas = [t.data for t in tensors]
    if any(d.ndim != 2 for d in datas):
        raise ShapeError("concat_rows needs 2-D tensors")
    heights = [d.shape[0] for d in datas]
    splits = np.cumsum(heights)[:-1]

    def backward(g):
        return np.split(g, splits, axis=0)

    return _record(list(tensors), np.concatenate(datas, axis=0), backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    shape = a.data.shape

    def backward(g):
        ga = np.zeros(shape)
        ga[..., start:stop] = g
        return (ga,)

    return _record([a], a.data[..., start:stop].copy(), backward)


def reverse_time(a: Tensor) -> Tensor:
    """Reverse a (batch, time, channels) tensor along the time axis."""
    if a.data.ndim != 3:
        raise ShapeError(f"reverse_time needs a 3-D tensor, got {a.data.shape}")

    def backward(g):
        return (g[:, ::-1, :].copy(),)

    return _record([a], a.data[:, ::-1, :].copy(), backward)
