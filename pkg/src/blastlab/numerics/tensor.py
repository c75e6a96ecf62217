"""Dense float64 tensors with tape-free reverse-mode differentiation.

Every differentiable op returns a new :class:`Tensor` holding references to
its inputs and a closure that pushes the output gradient back onto them.
:func:`backward` walks that graph in reverse topological order.

Only the operations the Q-networks and mixers need are provided. Broadcasting
is limited to adding a trailing-shape operand (a bias row) onto a batch.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from blastlab.errors import ContractError, DimensionError

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return index(self, idx)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self):
        return mean(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


def _check_add_shapes(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape or b.data.ndim == 0:
        return
    if b.data.ndim <= a.data.ndim and a.shape[a.data.ndim - b.data.ndim:] == b.shape:
        return
    raise DimensionError(op, a.shape, b.shape, "second operand must match or be a trailing slice")


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < b.data.ndim:
        a, b = b, a
    _check_add_shapes("add", a, b)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(_reduce_to(g, b.shape) if b.data.ndim else np.asarray(g.sum()))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    return add(a, mul(as_tensor(b), -1.0))


def mul(a, b) -> Tensor:
    """Elementwise product; ``b`` may be a plain scalar or a same-shape operand."""
    a = as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b) if np.ndim(b) == 0 else np.asarray(b, dtype=np.float64)
        if np.ndim(c) and np.shape(c) != a.shape:
            raise DimensionError("mul", a.shape, np.shape(c))

        def backward_const(g):
            a._accumulate(g * c)

        return _make(a.data * c, (a,), backward_const)
    if a.shape != b.shape:
        raise DimensionError("mul", a.shape, b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), backward)


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0

    def backward(g):
        a._accumulate(g * mask)

    return _make(a.data * mask, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.data)

    def backward(g):
        a._accumulate(g * y * (1.0 - y))

    return _make(y, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - y * y))

    return _make(y, (a,), backward)


def elu(a: Tensor) -> Tensor:
    neg = a.data < 0
    ex = np.exp(np.minimum(a.data, 0.0))
    y = np.where(neg, ex - 1.0, a.data)

    def backward(g):
        a._accumulate(g * np.where(neg, ex, 1.0))

    return _make(y, (a,), backward)


def tabs(a: Tensor) -> Tensor:
    s = np.sign(a.data)

    def backward(g):
        a._accumulate(g * s)

    return _make(np.abs(a.data), (a,), backward)


def square(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(2.0 * g * a.data)

    return _make(a.data * a.data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form never overflows and is much faster than masked exp
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------- reductions


def tsum(a: Tensor, axis: int | None = None) -> Tensor:
    data = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.shape))
        else:
            a._accumulate(np.broadcast_to(np.expand_dims(g, axis), a.shape))

    return _make(np.asarray(data), (a,), backward)


def mean(a: Tensor) -> Tensor:
    return mul(tsum(a), 1.0 / a.data.size)


def max_last(a: Tensor) -> Tensor:
    """Max over the last axis; the gradient goes to the first maximiser."""
    idx = np.argmax(a.data, axis=-1)
    return gather(a, idx)


def gather(a: Tensor, idx) -> Tensor:
    """Pick ``a[..., idx[...]]`` along the last axis."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape != a.shape[:-1]:
        raise DimensionError("gather", a.shape[:-1], idx.shape)
    data = np.take_along_axis(a.data, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx[..., None], g[..., None], axis=-1)
        a._accumulate(full)

    return _make(data, (a,), backward)


# ---------------------------------------------------------------- shape ops


def reshape(a: Tensor, shape) -> Tensor:
    def backward(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.data.reshape(shape), (a,), backward)


def index(a: Tensor, idx) -> Tensor:
    """Basic (non-fancy) indexing; the gradient is scattered in place."""

    def backward(g):
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        a.grad[idx] += g

    return _make(a.data[idx], (a,), backward)


def stack(items: Sequence[Tensor], axis: int = 0) -> Tensor:
    items = [as_tensor(t) for t in items]
    shapes = {t.shape for t in items}
    if len(shapes) != 1:
        raise DimensionError("stack", items[0].shape, sorted(shapes))

    def backward(g):
        for i, t in enumerate(items):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return _make(np.stack([t.data for t in items], axis=axis), items, backward)


def concat(items: Sequence[Tensor], axis: int = -1) -> Tensor:
    items = [as_tensor(t) for t in items]
    sizes = [t.shape[axis] for t in items]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(items, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(np.concatenate([t.data for t in items], axis=axis), items, backward)


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError("matmul", (a.shape[-1] if a.data.ndim else None,), b.shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ g)

    return _make(a.data @ b.data, (a, b), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` as one graph node. ``x`` is (rows, in)."""
    x = as_tensor(x)
    if x.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise DimensionError("linear", (None, weight.shape[0]), x.shape)
    y = x.data @ weight.data
    if bias is not None:
        y += bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        if x.requires_grad:
            x._accumulate(g @ weight.data.T)
        if weight.requires_grad:
            weight._accumulate(x.data.T @ g)
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=0))

    return _make(y, parents, backward)


def bvm(v: Tensor, m: Tensor) -> Tensor:
    """Batched vector-matrix product: (B, n) x (B, n, e) -> (B, e)."""
    if v.data.ndim != 2 or m.data.ndim != 3 or m.shape[:2] != v.shape:
        raise DimensionError("bvm", v.shape + ("e",), m.shape)

    def backward(g):
        if v.requires_grad:
            v._accumulate(np.einsum("be,bne->bn", g, m.data))
        if m.requires_grad:
            m._accumulate(v.data[:, :, None] * g[:, None, :])

    return _make(np.einsum("bn,bne->be", v.data, m.data), (v, m), backward)


def gru_cell(xp: Tensor, h: Tensor, u: Tensor, b: Tensor) -> Tensor:
    """One GRU update from a precomputed input projection.

    ``xp`` is ``x @ W`` with gate blocks ordered (update, reset, candidate);
    ``u`` holds the matching recurrent blocks and ``b`` the biases::

        z  = sigmoid(xp_z + h U_z + b_z)
        r  = sigmoid(xp_r + h U_r + b_r)
        hc = tanh(xp_h + (r * h) U_h + b_h)
        h' = (1 - z) * h + z * hc
    """
    h = as_tensor(h)
    hs = h.shape[-1]
    if xp.data.ndim != 2 or xp.shape != (h.shape[0], 3 * hs) or u.shape != (hs, 3 * hs):
        raise DimensionError("gru_cell", (h.shape[0], 3 * hs), xp.shape)
    hd = h.data
    u_zr, u_h = u.data[:, : 2 * hs], u.data[:, 2 * hs:]
    pre_zr = xp.data[:, : 2 * hs] + hd @ u_zr + b.data[: 2 * hs]
    zr = _sigmoid(pre_zr)
    z, r = zr[:, :hs], zr[:, hs:]
    rh = r * hd
    hc = np.tanh(xp.data[:, 2 * hs:] + rh @ u_h + b.data[2 * hs:])
    out = hd + z * (hc - hd)

    def backward(g):
        dz = g * (hc - hd)
        da_h = g * z * (1.0 - hc * hc)
        d_rh = da_h @ u_h.T
        dr = d_rh * hd
        da_zr = np.concatenate([dz * z * (1.0 - z), dr * r * (1.0 - r)], axis=1)
        dxp = np.concatenate([da_zr, da_h], axis=1)
        if xp.requires_grad:
            xp._accumulate(dxp)
        if b.requires_grad:
            b._accumulate(dxp.sum(axis=0))
        if u.requires_grad:
            u._accumulate(np.concatenate([hd.T @ da_zr, rh.T @ da_h], axis=1))
        if h.requires_grad:
            h._accumulate(g * (1.0 - z) + d_rh * r + da_zr @ u_zr.T)

    return _make(out, (xp, h, u, b), backward)


# ---------------------------------------------------------------- backward pass


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, params: Iterable[Tensor] = ()) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``loss``.

    Gradients accumulate into existing ``.grad`` buffers. Any tensor in
    ``params`` that the loss does not reach is given a zero gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        node._backward(node.grad)
        # interior buffers are no longer needed once pushed to parents
        node.grad = None
        node._backward = None
        node._parents = ()
