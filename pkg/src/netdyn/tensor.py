"""Dense 2-D float64 tensors with tape-based reverse-mode autodiff.

Every tensor is a plain (rows, cols) float64 array. Operations executed
while a Tape is active are recorded so that `backward` can replay them in
reverse and accumulate gradients into every `requires_grad` leaf. There is
no implicit broadcasting anywhere: binary ops demand exact shape equality,
and row-vector biases are tiled explicitly with `tile_rows`.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ArgumentError, ContractError, ShapeError

_tls = threading.local()

# When True, every tensor construction checks for NaN/Inf.
debug_validate = False


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = _tls.stack = []
    return stack


def active_tape():
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of operations; single-use for one backward pass."""

    __slots__ = ("ops", "consumed")

    def __init__(self):
        self.ops = []
        self.consumed = False

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().pop()
        return False


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_needs")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got ndim={arr.ndim}")
        if debug_validate and not np.all(np.isfinite(arr)):
            raise ArgumentError("non-finite values in tensor")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._needs = bool(requires_grad)

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        if self.data.shape != (1, 1):
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.data.shape}")
        return float(self.data[0, 0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _record(out, inputs, bwd):
    tape = active_tape()
    if tape is None:
        return
    if any(t._needs for t in inputs):
        out._needs = True
        tape.ops.append((out, inputs, bwd))


def _check_same_shape(a, b, op):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"{op}: shapes {a.data.shape} and {b.data.shape} differ")


# ---------------------------------------------------------------------------
# binary ops


def matmul(a, b):
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul: inner dims {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        return g @ b.data.T, a.data.T @ g

    _record(out, (a, b), bwd)
    return out


def add(a, b):
    _check_same_shape(a, b, "add")
    out = Tensor(a.data + b.data)
    _record(out, (a, b), lambda g: (g, g))
    return out


def sub(a, b):
    _check_same_shape(a, b, "sub")
    out = Tensor(a.data - b.data)
    _record(out, (a, b), lambda g: (g, -g))
    return out


def hadamard(a, b):
    _check_same_shape(a, b, "hadamard")
    out = Tensor(a.data * b.data)

    def bwd(g):
        return g * b.data, g * a.data

    _record(out, (a, b), bwd)
    return out


# ---------------------------------------------------------------------------
# constant-scaled ops (the multiplier is data, never differentiated)


def scale(a, c):
    c = float(c)
    out = Tensor(a.data * c)
    _record(out, (a,), lambda g: (g * c,))
    return out


def mul_const(a, arr):
    """Elementwise product with a constant array.

    The constant must have the exact shape of `a`, or be a per-row column
    (rows, 1) / per-column row (1, cols) multiplier.
    """
    arr = np.asarray(arr, dtype=np.float64)
    r, c = a.data.shape
    if arr.shape not in ((r, c), (r, 1), (1, c)):
        raise ShapeError(f"mul_const: multiplier {arr.shape} incompatible with {a.data.shape}")
    out = Tensor(a.data * arr)
    _record(out, (a,), lambda g: (g * arr,))
    return out


# ---------------------------------------------------------------------------
# unary ops


def sigmoid(a):
    s = 1.0 / (1.0 + np.exp(-a.data))
    out = Tensor(s)
    _record(out, (a,), lambda g: (g * s * (1.0 - s),))
    return out


def tanh(a):
    t = np.tanh(a.data)
    out = Tensor(t)
    _record(out, (a,), lambda g: (g * (1.0 - t * t),))
    return out


def exp(a):
    e = np.exp(a.data)
    out = Tensor(e)
    _record(out, (a,), lambda g: (g * e,))
    return out


def neg(a):
    out = Tensor(-a.data)
    _record(out, (a,), lambda g: (-g,))
    return out


def relu(a):
    """max(0, x); the derivative at exactly 0 is defined as 0."""
    out = Tensor(np.maximum(a.data, 0.0))
    mask = (a.data > 0.0).astype(np.float64)
    _record(out, (a,), lambda g: (g * mask,))
    return out


# ---------------------------------------------------------------------------
# structural ops


def concat_cols(parts):
    parts = list(parts)
    if not parts:
        raise ArgumentError("concat_cols: empty part list")
    rows = parts[0].data.shape[0]
    for p in parts[1:]:
        if p.data.shape[0] != rows:
            raise ShapeError("concat_cols: row counts differ")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    widths = [p.data.shape[1] for p in parts]
    splits = np.cumsum(widths)[:-1]

    def bwd(g):
        return tuple(np.hsplit(g, splits))

    _record(out, tuple(parts), bwd)
    return out


def tile_rows(a, n):
    """Repeat a 1 x c row vector to n rows; backward sums the rows."""
    if a.data.shape[0] != 1:
        raise ShapeError(f"tile_rows: expected 1 x c, got {a.data.shape}")
    out = Tensor(np.repeat(a.data, n, axis=0))
    _record(out, (a,), lambda g: (g.sum(axis=0, keepdims=True),))
    return out


def gather_rows(a, index):
    index = np.asarray(index, dtype=np.intp)
    out = Tensor(a.data[index])

    def bwd(g):
        gi = np.zeros_like(a.data)
        np.add.at(gi, index, g)
        return (gi,)

    _record(out, (a,), bwd)
    return out


def scatter_rows(a, index, n_rows):
    """out[i] = sum of a's rows e with index[e] == i."""
    index = np.asarray(index, dtype=np.intp)
    if index.shape[0] != a.data.shape[0]:
        raise ShapeError("scatter_rows: index length must match row count")
    acc = np.zeros((n_rows, a.data.shape[1]))
    np.add.at(acc, index, a.data)
    out = Tensor(acc)
    _record(out, (a,), lambda g: (g[index],))
    return out


# ---------------------------------------------------------------------------
# reductions


def sum_all(a):
    out = Tensor(np.array([[a.data.sum()]]))
    shape = a.data.shape
    _record(out, (a,), lambda g: (np.full(shape, g[0, 0]),))
    return out


def mean_all(a):
    n = a.data.size
    out = Tensor(np.array([[a.data.mean()]]))
    shape = a.data.shape
    _record(out, (a,), lambda g: (np.full(shape, g[0, 0] / n),))
    return out


# ---------------------------------------------------------------------------
# backward pass


def backward(loss, tape):
    """Populate .grad of every requires_grad tensor reachable in the tape."""
    if loss.data.shape != (1, 1):
        raise ContractError(f"backward: loss must be 1x1, got {loss.data.shape}")
    if tape.consumed:
        raise ContractError("backward: tape already consumed")
    tape.consumed = True
    grads = {id(loss): np.ones((1, 1))}
    holders = {id(loss): loss}
    for out, inputs, bwd in reversed(tape.ops):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        if out.requires_grad:
            out.grad = g.copy() if out.grad is None else out.grad + g
        for t, gi in zip(inputs, bwd(g)):
            if gi is None or not t._needs:
                continue
            tid = id(t)
            if tid in grads:
                grads[tid] = grads[tid] + gi
            else:
                grads[tid] = gi
                holders[tid] = t
    for tid, g in grads.items():
        t = holders[tid]
        if t.requires_grad:
            t.grad = g.copy() if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# optimizer


class Adam:
    """Adaptive-moment optimizer over a fixed parameter list."""

    def __init__(self, params, lr=1e-2, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        for p in self.params:
            if p.grad is None:
                raise ContractError("optimizer_step: parameter missing gradient")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            p.grad = None


def clip_grad_norm(params, max_norm):
    """Scale all gradients down so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float((p.grad * p.grad).sum())
    norm = total**0.5
    if norm > max_norm and norm > 0.0:
        factor = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad *= factor
    return norm
