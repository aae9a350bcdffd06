"""Tape-based reverse-mode automatic differentiation over float64 arrays.

Every function in this module is polymorphic: called with plain numpy arrays
(or scalars) it simply evaluates with numpy and returns an ndarray; called
with at least one :class:`Tensor` it returns a :class:`Tensor`, and when a
:class:`Tape` is active and some input is tracked the operation is recorded.
The geometry and layer code is written once against this module and serves
both the numpy fast path and training.

Usage::

    w = Tensor([3.0], requires_grad=True)
    with Tape() as tape:
        loss = ad.sum(w * w)
    grads = tape.gradient(loss)      # {w: array([6.])}
"""

from __future__ import annotations

import threading
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ContractError, NumericDomainError

__all__ = [
    "Tensor", "Tape", "active_tape", "backward", "no_grad_data",
    "add", "sub", "mul", "div", "neg", "power", "sqrt", "exp", "log",
    "sinh", "cosh", "tanh", "asinh", "acosh", "abs", "relu", "clamp_min",
    "sign", "sum", "mean", "amax", "matmul", "getitem", "concatenate", "stack",
    "reshape", "swapaxes", "broadcast_to", "where", "logsumexp",
    "cosh_sqrt", "sinhc_sq", "asinhc_sq", "norm", "square",
]

# Below this magnitude the sqrt-argument special functions switch to series.
_SERIES_CUTOFF = 1e-3
# Window below 1 within which acosh silently clamps drift to exactly 1.
ACOSH_WINDOW = 1e-9

_state = threading.local()


def active_tape():
    return getattr(_state, "tape", None)


class _Node(NamedTuple):
    op: str
    parents: tuple
    vjp: Callable | None


class Tape:
    """Append-only record of operations; node ``i`` only has parents ``< i``.

    One tape may be active per thread. Entering a second tape while one is
    active raises :class:`ContractError`.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._leaves: dict[int, tuple[int, Tensor]] = {}

    def __enter__(self):
        if active_tape() is not None:
            raise ContractError("a tape is already active in this context")
        _state.tape = self
        return self

    def __exit__(self, *exc):
        _state.tape = None
        return False

    def _node_of(self, t):
        if t._tape is self:
            return t._node
        key = id(t)
        hit = self._leaves.get(key)
        if hit is not None:
            return hit[0]
        node_id = len(self.nodes)
        self.nodes.append(_Node("leaf", (), None))
        self._leaves[key] = (node_id, t)
        return node_id

    def _tracks(self, x):
        return isinstance(x, Tensor) and (x._tape is self or x.requires_grad)

    def _record(self, op, inputs, vjp):
        parents = tuple(self._node_of(x) if self._tracks(x) else None for x in inputs)
        self.nodes.append(_Node(op, parents, vjp))
        return len(self.nodes) - 1

    def gradient(self, loss, sources=None):
        """Return ``{leaf tensor: d loss / d leaf}`` for tracked leaves.

        ``sources`` restricts the returned mapping; leaves that the loss does
        not depend on receive zero gradients.
        """
        if not isinstance(loss, Tensor) or loss._tape is not self:
            raise ContractError("loss is not recorded on this tape")
        if loss.data.size != 1:
            raise ContractError(f"loss must be scalar, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {loss._node: np.ones_like(loss.data)}
        for i in range(loss._node, -1, -1):
            g = grads.pop(i, None) if self.nodes[i].op != "leaf" else None
            node = self.nodes[i]
            if g is None or node.vjp is None:
                continue
            parent_grads = node.vjp(g)
            for pid, pg in zip(node.parents, parent_grads):
                if pid is None or pg is None:
                    continue
                if pid in grads:
                    grads[pid] = grads[pid] + pg
                else:
                    grads[pid] = pg
        out = {}
        for node_id, t in self._leaves.values():
            g = grads.get(node_id)
            out[t] = np.zeros_like(t.data) if g is None else np.asarray(g, dtype=np.float64)
        if sources is not None:
            out = {t: out.get(t, np.zeros_like(t.data)) for t in sources}
        return out


def backward(loss):
    """Gradient map for ``loss`` on its tape; also accumulates into ``.grad``."""
    if not isinstance(loss, Tensor) or loss._tape is None:
        raise ContractError("loss is not tape-tracked")
    grads = loss._tape.gradient(loss)
    for t, g in grads.items():
        t.grad = g if t.grad is None else t.grad + g
    return grads


class Tensor:
    """Dense float64 array that can participate in a :class:`Tape`."""

    __array_ufunc__ = None  # make ndarray (op) Tensor defer to Tensor

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = None
        self._tape = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor({self.data!r}{tag})"

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data.copy())

    def item(self):
        return self.data.item()

    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return sub(self, o)
    def __rsub__(self, o): return sub(o, self)
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __truediv__(self, o): return div(self, o)
    def __rtruediv__(self, o): return div(o, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, o): return matmul(self, o)
    def __rmatmul__(self, o): return matmul(o, self)
    def __getitem__(self, idx): return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def no_grad_data(x):
    """Underlying ndarray of a Tensor, or ``np.asarray`` of anything else."""
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


_data = no_grad_data


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _apply(op, inputs, value, vjp):
    """Evaluate ``value`` and record ``vjp`` if some input is tracked.

    ``vjp(g)`` must return one gradient (or None) per input.
    """
    if not any(isinstance(x, Tensor) for x in inputs):
        return value
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(value, dtype=np.float64)
    out.requires_grad = False
    out.name = None
    out.grad = None
    out._tape = None
    out._node = None
    tape = active_tape()
    if tape is not None and any(tape._tracks(x) for x in inputs):
        out._tape = tape
        out._node = tape._record(op, inputs, vjp)
    return out


# -- elementwise arithmetic -------------------------------------------------


def add(a, b):
    x, y = _data(a), _data(b)
    return _apply("add", (a, b), x + y,
                  lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def sub(a, b):
    x, y = _data(a), _data(b)
    return _apply("sub", (a, b), x - y,
                  lambda g: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)))


def mul(a, b):
    x, y = _data(a), _data(b)
    return _apply("mul", (a, b), x * y,
                  lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))


def div(a, b):
    x, y = _data(a), _data(b)
    out = x / y
    return _apply("div", (a, b), out,
                  lambda g: (_unbroadcast(g / y, x.shape),
                             _unbroadcast(-g * out / y, y.shape)))


def neg(a):
    return _apply("neg", (a,), -_data(a), lambda g: (-g,))


def power(a, p):
    """``a ** p`` for a constant real exponent."""
    x = _data(a)
    p = float(p)
    return _apply("pow", (a,), x ** p, lambda g: (g * p * x ** (p - 1),))


def square(a):
    x = _data(a)
    return _apply("square", (a,), x * x, lambda g: (2.0 * g * x,))


def sqrt(a):
    x = _data(a)
    out = np.sqrt(x)
    return _apply("sqrt", (a,), out, lambda g: (g / (2.0 * out),))


def exp(a):
    out = np.exp(_data(a))
    return _apply("exp", (a,), out, lambda g: (g * out,))


def log(a):
    x = _data(a)
    return _apply("log", (a,), np.log(x), lambda g: (g / x,))


def sinh(a):
    x = _data(a)
    return _apply("sinh", (a,), np.sinh(x), lambda g: (g * np.cosh(x),))


def cosh(a):
    x = _data(a)
    return _apply("cosh", (a,), np.cosh(x), lambda g: (g * np.sinh(x),))


def tanh(a):
    out = np.tanh(_data(a))
    return _apply("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def asinh(a):
    # libm asinh avoids the overflow/cancellation of log(x + sqrt(x^2 + 1))
    x = _data(a)
    return _apply("asinh", (a,), np.arcsinh(x),
                  lambda g: (g / np.sqrt(1.0 + x * x),))


def acosh(a):
    """acosh with drift inside ``[1 - ACOSH_WINDOW, 1)`` clamped to 1."""
    x = _data(a)
    if np.any(x < 1.0 - ACOSH_WINDOW) or np.any(np.isnan(x)):
        raise NumericDomainError(f"acosh: argument {np.nanmin(x)!r} below 1")
    xc = np.maximum(x, 1.0)
    return _apply("acosh", (a,), np.arccosh(xc),
                  lambda g: (g / np.sqrt((xc - 1.0) * (xc + 1.0)),))


def abs(a):  # noqa: A001 - mirrors numpy naming
    x = _data(a)
    # subgradient 0 at 0
    return _apply("abs", (a,), np.abs(x), lambda g: (g * np.sign(x),))


def sign(a):
    """Sign as a constant: never recorded, zero gradient by construction."""
    return np.sign(_data(a))


def relu(a):
    x = _data(a)
    mask = x > 0
    return _apply("relu", (a,), np.where(mask, x, 0.0), lambda g: (g * mask,))


def clamp_min(a, lo):
    x = _data(a)
    mask = x >= lo
    return _apply("clamp_min", (a,), np.maximum(x, lo), lambda g: (g * mask,))


def where(cond, a, b):
    c = np.asarray(cond, dtype=bool)
    x, y = _data(a), _data(b)
    return _apply("where", (a, b), np.where(c, x, y),
                  lambda g: (_unbroadcast(np.where(c, g, 0.0), x.shape),
                             _unbroadcast(np.where(c, 0.0, g), y.shape)))


# -- sqrt-argument special functions ----------------------------------------
# Each takes s = r^2 >= 0 and is analytic in s, so gradients stay finite at
# r = 0 where the composition through a norm would produce 0/0.


def _cosh_sqrt(s):
    return np.cosh(np.sqrt(s))


def _sinhc_sq(s):
    small = s < _SERIES_CUTOFF
    r = np.sqrt(np.where(small, 1.0, s))
    big = np.sinh(r) / r
    ser = 1.0 + s * (1 / 6 + s * (1 / 120 + s * (1 / 5040 + s / 362880)))
    return np.where(small, ser, big)


def _sinhc_sq_grad(s):
    small = s < _SERIES_CUTOFF
    ss = np.where(small, 1.0, s)
    r = np.sqrt(ss)
    big = (np.cosh(r) - np.sinh(r) / r) / (2.0 * ss)
    ser = 1 / 6 + s * (1 / 60 + s * (1 / 1680 + s / 90720))
    return np.where(small, ser, big)


def _asinhc_sq(s):
    small = s < _SERIES_CUTOFF
    r = np.sqrt(np.where(small, 1.0, s))
    big = np.arcsinh(r) / r
    ser = 1.0 + s * (-1 / 6 + s * (3 / 40 + s * (-5 / 112 + s * 35 / 1152)))
    return np.where(small, ser, big)


def _asinhc_sq_grad(s):
    small = s < _SERIES_CUTOFF
    ss = np.where(small, 1.0, s)
    r = np.sqrt(ss)
    big = (1.0 / np.sqrt(1.0 + ss) - np.arcsinh(r) / r) / (2.0 * ss)
    ser = -1 / 6 + s * (3 / 20 + s * (-15 / 112 + s * 35 / 288))
    return np.where(small, ser, big)


def cosh_sqrt(a):
    """cosh(sqrt(s)); negative drift in ``s`` is treated as 0."""
    s = np.maximum(_data(a), 0.0)
    return _apply("cosh_sqrt", (a,), _cosh_sqrt(s), lambda g: (0.5 * g * _sinhc_sq(s),))


def sinhc_sq(a):
    """sinh(sqrt(s)) / sqrt(s), equal to 1 at s = 0."""
    s = np.maximum(_data(a), 0.0)
    return _apply("sinhc_sq", (a,), _sinhc_sq(s), lambda g: (g * _sinhc_sq_grad(s),))


def asinhc_sq(a):
    """asinh(sqrt(s)) / sqrt(s), equal to 1 at s = 0."""
    s = np.maximum(_data(a), 0.0)
    return _apply("asinhc_sq", (a,), _asinhc_sq(s), lambda g: (g * _asinhc_sq_grad(s),))


# -- reductions ---------------------------------------------------------------


def _expand(g, shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(np.reshape(g, (1,) * len(shape)), shape)
    if not keepdims:
        axes = (axis,) if np.isscalar(axis) else tuple(axis)
        axes = tuple(ax % len(shape) for ax in axes)
        for ax in sorted(axes):
            g = np.expand_dims(g, ax)
    return np.broadcast_to(g, shape)


def sum(a, axis=None, keepdims=False):  # noqa: A001
    x = _data(a)
    return _apply("sum", (a,), x.sum(axis=axis, keepdims=keepdims),
                  lambda g: (np.array(_expand(g, x.shape, axis, keepdims)),))


def mean(a, axis=None, keepdims=False):
    x = _data(a)
    out = x.mean(axis=axis, keepdims=keepdims)
    count = x.size / max(np.size(out), 1)
    return _apply("mean", (a,), out,
                  lambda g: (np.array(_expand(g, x.shape, axis, keepdims)) / count,))


def amax(a, axis=-1, keepdims=False):
    x = _data(a)
    out = x.max(axis=axis, keepdims=True)

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        hit = x == out
        # route to the first maximiser only
        sel = hit & (np.cumsum(hit, axis=axis) == 1)
        return (np.where(sel, gg, 0.0),)

    return _apply("amax", (a,), out if keepdims else np.squeeze(out, axis=axis), vjp)


def logsumexp(a, axis=-1, keepdims=False):
    x = _data(a)
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    se = e.sum(axis=axis, keepdims=True)
    out = m + np.log(se)
    soft = e / se
    if not keepdims:
        out = np.squeeze(out, axis=axis)

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (gg * soft,)

    return _apply("logsumexp", (a,), out, vjp)


def square_norm(a, axis=-1, keepdims=False):
    return sum(mul(a, a), axis=axis, keepdims=keepdims)


def norm(a, axis=-1, keepdims=False):
    return sqrt(square_norm(a, axis=axis, keepdims=keepdims))


# -- linear algebra and shape ---------------------------------------------------


def matmul(a, b):
    x, y = _data(a), _data(b)

    def vjp(g):
        # promote 1-d operands to matrices as np.matmul does, then undo
        x2 = x[None, :] if x.ndim == 1 else x
        y2 = y[:, None] if y.ndim == 1 else y
        g2 = g[..., None] if y.ndim == 1 else g
        g2 = g2[..., None, :] if x.ndim == 1 else g2
        gx = _unbroadcast(g2 @ np.swapaxes(y2, -1, -2), x2.shape)
        gy = _unbroadcast(np.swapaxes(x2, -1, -2) @ g2, y2.shape)
        return gx.reshape(x.shape), gy.reshape(y.shape)

    return _apply("matmul", (a, b), x @ y, vjp)


def getitem(a, idx):
    x = _data(a)

    def vjp(g):
        z = np.zeros_like(x)
        np.add.at(z, idx, g)
        return (z,)

    return _apply("getitem", (a,), x[idx], vjp)


def concatenate(items, axis=-1):
    datas = [_data(t) for t in items]
    out = np.concatenate(datas, axis=axis)
    bounds = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _apply("concatenate", tuple(items), out, vjp)


def stack(items, axis=0):
    datas = [_data(t) for t in items]
    out = np.stack(datas, axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(datas)))

    return _apply("stack", tuple(items), out, vjp)


def reshape(a, shape):
    x = _data(a)
    return _apply("reshape", (a,), x.reshape(shape), lambda g: (g.reshape(x.shape),))


def swapaxes(a, ax1, ax2):
    x = _data(a)
    return _apply("swapaxes", (a,), np.swapaxes(x, ax1, ax2),
                  lambda g: (np.swapaxes(g, ax1, ax2),))


def broadcast_to(a, shape):
    x = _data(a)
    return _apply("broadcast_to", (a,), np.broadcast_to(x, shape).copy(),
                  lambda g: (_unbroadcast(g, x.shape),))


def is_tensor(x):
    return isinstance(x, Tensor)

