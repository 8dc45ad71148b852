"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations only record onto a tape while one is active (see
:func:`recording`). Outside a tape every op is a plain numpy computation,
which is what inference and finite-difference probes use.

    >>> x = Tensor([1.0, -2.0], requires_grad=True)
    >>> with recording() as tape:
    ...     loss = sum_all(x * x)
    >>> backward(tape, loss)
    >>> x.grad
    array([ 2., -4.])
"""
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .. import kernels
from ..errors import ContractError, NumericError, ShapeError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "node_id", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.node_id = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self):
        return transpose(self)


@dataclass
class Record:
    inputs: tuple
    output: int
    backward: Callable


class Tape:
    """Ordered log of differentiable operations.

    Records are appended in execution order, so inputs always precede the
    operations consuming them.
    """

    def __init__(self):
        self.records = []
        self._tensors = {}
        self._produced = set()

    def _watch(self, t):
        if t.node_id is None or self._tensors.get(t.node_id) is not t:
            t.node_id = len(self._tensors)
            self._tensors[t.node_id] = t
        return t.node_id

    def record(self, out, inputs, backward_fn):
        ids = tuple(self._watch(t) for t in inputs)
        out_id = self._watch(out)
        self._produced.add(out_id)
        self.records.append(Record(ids, out_id, backward_fn))

    def leaves(self):
        return [t for i, t in self._tensors.items()
                if i not in self._produced and t.requires_grad]

    def __len__(self):
        return len(self.records)


_ACTIVE = []


@contextmanager
def recording():
    tape = Tape()
    _ACTIVE.append(tape)
    try:
        yield tape
    finally:
        _ACTIVE.pop()


def is_recording():
    return bool(_ACTIVE)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(data, inputs, backward_fn):
    out = Tensor(data)
    if _ACTIVE and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE[-1].record(out, inputs, backward_fn)
    return out


def backward(tape, loss, params=()):
    """Populate ``.grad`` on every leaf of ``tape`` reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` buffers. Tensors listed in
    ``params`` that never touched the tape receive a zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
    if loss.node_id is None or tape._tensors.get(loss.node_id) is not loss:
        return
    grads = {loss.node_id: np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.pop(rec.output, None)
        if g is None:
            continue
        in_grads = rec.backward(g)
        for node, gi in zip(rec.inputs, in_grads):
            if gi is None or not tape._tensors[node].requires_grad:
                continue
            if node in grads:
                grads[node] = grads[node] + gi
            else:
                grads[node] = gi
    for t in tape.leaves():
        g = grads.get(t.node_id)
        if g is None:
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g


def _reduce_to(g, shape):
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a, b, op):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    ad, bd = a.data, b.data

    def _back(g):
        return g @ bd.T, ad.T @ g

    return _emit(ad @ bd, (a, b), _back)


def transpose(x):
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a matrix, got shape {x.shape}")
    return _emit(x.data.T.copy(), (x,), lambda g: (g.T,))


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    try:
        data = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {old} as {shape}") from None
    return _emit(data, (x,), lambda g: (g.reshape(old),))


# --------------------------------------------------------------------------
# elementwise
# --------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _emit(a.data + b.data, (a, b),
                 lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _emit(a.data - b.data, (a, b),
                 lambda g: (_reduce_to(g, sa), -_reduce_to(g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    ad, bd = a.data, b.data

    def _back(g):
        return _reduce_to(g * bd, ad.shape), _reduce_to(g * ad, bd.shape)

    return _emit(ad * bd, (a, b), _back)


def scale(x, c):
    x = as_tensor(x)
    c = float(c)
    return _emit(x.data * c, (x,), lambda g: (g * c,))


def sigmoid(x):
    x = as_tensor(x)
    # split by sign so exp never overflows
    xd = x.data
    out = np.empty_like(xd)
    pos = xd >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _emit(out, (x,), lambda g: (g * out * (1.0 - out),))


def tanh(x):
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _emit(out, (x,), lambda g: (g * (1.0 - out * out),))


def relu(x):
    x = as_tensor(x)
    keep = x.data > 0
    return _emit(np.where(keep, x.data, 0.0), (x,), lambda g: (g * keep,))


def log(x):
    x = as_tensor(x)
    xd = x.data
    if np.any(~(xd > 0)):
        raise NumericError("log of a non-positive value")
    return _emit(np.log(xd), (x,), lambda g: (g / xd,))


def concat(tensors: Sequence[Tensor], axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = [t.shape for t in tensors]
        raise ShapeError(f"concat along axis {axis}: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _emit(data, tuple(tensors), _back)


def take_rows(table, ids):
    """Row gather, the embedding lookup."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    n_rows = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n_rows):
        raise ShapeError(f"take_rows: ids outside [0, {n_rows})")

    def _back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _emit(table.data[ids], (table,), _back)


def flip_rows(x):
    x = as_tensor(x)
    return _emit(x.data[::-1].copy(), (x,), lambda g: (g[::-1].copy(),))


# --------------------------------------------------------------------------
# reductions and composite ops
# --------------------------------------------------------------------------

def sum_all(x):
    x = as_tensor(x)
    shape = x.shape
    return _emit(np.array(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean_all(x):
    x = as_tensor(x)
    return scale(sum_all(x), 1.0 / x.data.size)


def softmax_rows(x, mask=None):
    """Row-wise softmax of a matrix.

    ``mask`` is an optional constant array added to the logits before
    normalisation (use large negative entries to exclude positions).
    """
    x = as_tensor(x)
    if x.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {x.shape}")
    if np.isnan(x.data).any():
        raise NumericError("softmax_rows received NaN input")
    z = x.data if mask is None else x.data + mask
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)

    def _back(g):
        return (out * (g - (g * out).sum(axis=1, keepdims=True)),)

    return _emit(out, (x,), _back)


def smooth_l1(pred, target, delta=1.0):
    """Sum of elementwise smooth-L1 distances against a constant target."""
    pred = as_tensor(pred)
    target = np.asarray(target, dtype=np.float64).reshape(pred.shape)
    diff = pred.data - target
    absd = np.abs(diff)
    quad = absd < delta
    val = np.where(quad, 0.5 * diff * diff / delta, absd - 0.5 * delta).sum()

    def _back(g):
        return (float(g) * np.where(quad, diff / delta, np.sign(diff)),)

    return _emit(np.array(val), (pred,), _back)


def gru(x, wx, uh, b, reverse=False):
    """Run a GRU over the rows of ``x`` from a zero initial state.

    Returns the T x H sequence of hidden states. With ``reverse`` the
    sequence is consumed last-to-first and outputs are re-aligned to the
    input positions.
    """
    x, wx, uh, b = (as_tensor(t) for t in (x, wx, uh, b))
    if x.ndim != 2 or wx.ndim != 2 or x.shape[1] != wx.shape[0]:
        raise ShapeError(f"gru: input {x.shape} does not match input weights {wx.shape}")
    hid = uh.shape[0]
    if wx.shape[1] != 3 * hid or uh.shape != (hid, 3 * hid) or b.shape != (3 * hid,):
        raise ShapeError(f"gru: inconsistent weights {wx.shape}, {uh.shape}, {b.shape}")
    xd = x.data[::-1] if reverse else x.data
    xd = np.ascontiguousarray(xd)
    uhd = np.ascontiguousarray(uh.data)
    gx = xd @ wx.data + b.data
    hs, z, r, n, ghn = kernels.gru_forward(gx, uhd)
    out = hs[1:]
    if reverse:
        out = out[::-1]
    out = np.ascontiguousarray(out)

    def _back(g):
        g = np.ascontiguousarray(g[::-1] if reverse else g)
        dgx, duh = kernels.gru_backward(g, hs, z, r, n, ghn, uhd)
        dx = dgx @ wx.data.T
        if reverse:
            dx = dx[::-1].copy()
        return dx, xd.T @ dgx, duh, dgx.sum(axis=0)

    return _emit(out, (x, wx, uh, b), _back)
