"""Tape-based reverse-mode autodiff over dense float64 arrays.

Every primitive computes its forward value eagerly and, when any input
requires gradients, appends a node to the active :class:`Tape`. ``backward``
replays the tape in reverse execution order (a valid reverse topological
order) and clears it.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .. import kernels


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_owned")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name
        self._owned = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        # the first contribution is borrowed (it may alias another gradient);
        # a private copy is made only when a second one arrives
        if self.grad is None:
            self.grad = g if g.shape == self.data.shape else np.broadcast_to(g, self.data.shape)
            self._owned = False
        elif self._owned:
            self.grad += g
        else:
            self.grad = self.grad + g
            self._owned = True

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return mul(self, as_tensor(-1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Ordered record of executed primitives."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.enabled = True

    def __len__(self) -> int:
        return len(self.nodes)

    def clear(self) -> None:
        self.nodes.clear()


_TAPE = Tape()


def get_tape() -> Tape:
    return _TAPE


@contextmanager
def no_grad():
    prev = _TAPE.enabled
    _TAPE.enabled = False
    try:
        yield
    finally:
        _TAPE.enabled = prev


def _result(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    out._owned = False
    out.requires_grad = False
    if _TAPE.enabled and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE.nodes.append(_Node(out, inputs, backward))
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor."""
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise RuntimeError("loss does not depend on any tensor that requires grad")
    loss._accumulate(np.ones_like(loss.data))
    try:
        for node in reversed(_TAPE.nodes):
            g = node.out.grad
            if g is None:
                continue
            grads = node.backward(g)
            for t, gt in zip(node.inputs, grads):
                if gt is not None and t.requires_grad:
                    t._accumulate(gt)
            # intermediate results never need their gradient again
            node.out.grad = None
    finally:
        _TAPE.clear()


# ---------------------------------------------------------------- helpers


def _is_suffix(short: tuple, long: tuple) -> bool:
    return len(short) <= len(long) and long[len(long) - len(short):] == short


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    sa, sb = a.shape, b.shape
    if sa == sb or _is_suffix(sa, sb) or _is_suffix(sb, sa):
        return
    raise ShapeError(f"{op}: incompatible shapes {sa} and {sb} (only trailing-bias broadcasting)")


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead))).reshape(shape)


# ---------------------------------------------------------------- primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("add", a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data + b.data, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("sub", a, b)
    sa, sb = a.shape, b.shape
    return _result(a.data - b.data, (a, b), lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_check("mul", a, b)
    ad, bd = a.data, b.data
    return _result(
        ad * bd,
        (a, b),
        lambda g: (
            _unbroadcast(g * bd, ad.shape) if a.requires_grad else None,
            _unbroadcast(g * ad, bd.shape) if b.requires_grad else None,
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """(..., n, m) @ (m, p) or batched (..., n, m) @ (..., m, p)."""
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2 or ad.shape[-1] != bd.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if bd.ndim > 2 and ad.shape[:-2] != bd.shape[:-2]:
        raise ShapeError(f"matmul: batch dims differ in {a.shape} and {b.shape}")

    if bd.ndim == 2:
        # one large GEMM instead of numpy's per-batch loop
        a2 = ad.reshape(-1, ad.shape[-1])
        out = (a2 @ bd).reshape(ad.shape[:-1] + (bd.shape[1],))

        def bwd(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ bd.T).reshape(ad.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        return _result(out, (a, b), bwd)

    def bwd_batched(g):
        ga = g @ np.swapaxes(bd, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(ad, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _result(ad @ bd, (a, b), bwd_batched)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref} and {t.shape} along axis {axis}")
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]
    return _result(
        np.concatenate([t.data for t in tensors], axis=ax),
        tensors,
        lambda g: np.split(g, sizes, axis=ax),
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    for t in tensors[1:]:
        if t.shape != tensors[0].shape:
            raise ShapeError(f"stack: incompatible shapes {tensors[0].shape} and {t.shape}")
    n = len(tensors)
    return _result(
        np.stack([t.data for t in tensors], axis=axis),
        tensors,
        lambda g: [np.take(g, i, axis=axis) for i in range(n)],
    )


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    scale = np.where(x.data > 0, 1.0, slope)
    return _result(x.data * scale, (x,), lambda g: (g * scale,))


def elu(x: Tensor) -> Tensor:
    xd = x.data
    out = np.minimum(xd, 0.0)
    np.expm1(out, out=out)
    slope = out + 1.0  # derivative: 1 where x > 0, exp(x) elsewhere
    np.maximum(out, xd, out=out)
    return _result(out, (x,), lambda g: (g * slope,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _result(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _result(y, (x,), lambda g: (g * y * (1.0 - y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _result(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return _result(np.log(xd), (x,), lambda g: (g / xd,))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return _result(xd * xd, (x,), lambda g: (2.0 * g * xd,))


def softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    return _result(y, (x,), lambda g: (y * (g - (g * y).sum(axis=-1, keepdims=True)),))


def log_softmax_lastdim(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)
    return _result(y, (x,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),))


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    shape = x.shape
    if axis is None:
        return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape),))
    ax = axis % x.ndim
    return _result(
        x.data.sum(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g, ax), shape),),
    )


def mean(x: Tensor, axis=None) -> Tensor:
    shape = x.shape
    if axis is None:
        n = x.size
        return _result(np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, shape),))
    ax = axis % x.ndim
    n = shape[ax]
    return _result(
        x.data.mean(axis=ax),
        (x,),
        lambda g: (np.broadcast_to(np.expand_dims(g / n, ax), shape),),
    )


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _result(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    # contiguous copies keep later GEMMs on unit-stride data
    return _result(
        np.ascontiguousarray(np.swapaxes(x.data, a, b)),
        (x,),
        lambda g: (np.ascontiguousarray(np.swapaxes(g, a, b)),),
    )


def getitem(x: Tensor, idx) -> Tensor:
    shape = x.shape

    basic = all(i is Ellipsis or isinstance(i, (slice, int)) for i in (idx if isinstance(idx, tuple) else (idx,)))

    def bwd(g):
        full = np.zeros(shape)
        if basic:  # no repeated positions, plain assignment is exact
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return (full,)

    return _result(x.data[idx], (x,), bwd)


def take_last(x: Tensor, index: np.ndarray) -> Tensor:
    """out[...] = x[..., index[...]] (gather along the last axis)."""
    index = np.asarray(index, dtype=np.int64)
    if index.shape != x.shape[:-1]:
        raise ShapeError(f"take_last: index shape {index.shape} vs tensor shape {x.shape}")
    idx = index[..., None]
    shape = x.shape

    def bwd(g):
        full = np.zeros(shape)
        np.put_along_axis(full, idx, g[..., None], axis=-1)
        return (full,)

    return _result(np.take_along_axis(x.data, idx, axis=-1)[..., 0], (x,), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    xd = x.data
    inside = (xd >= lo) & (xd <= hi)
    return _result(np.clip(xd, lo, hi), (x,), lambda g: (g * inside,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"minimum: incompatible shapes {a.shape} and {b.shape}")
    pick_a = a.data <= b.data
    return _result(np.where(pick_a, a.data, b.data), (a, b), lambda g: (g * pick_a, g * ~pick_a))


def outer_sum(u: Tensor, v: Tensor) -> Tensor:
    """out[..., i, j] = u[..., i] + v[..., j]."""
    if u.shape != v.shape:
        raise ShapeError(f"outer_sum: incompatible shapes {u.shape} and {v.shape}")
    return _result(
        u.data[..., :, None] + v.data[..., None, :],
        (u, v),
        lambda g: (g.sum(axis=-1), g.sum(axis=-2)),
    )


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data)


def gru_sequence(xproj: Tensor, U: Tensor, h0: Tensor) -> Tensor:
    """Fused GRU unroll; returns hidden states (T, B, H) after each step.

    xproj holds x @ W + b with gate blocks [update | reset | candidate].
    """
    T, B, H3 = xproj.shape
    H = U.shape[0]
    if H3 != 3 * H or U.shape != (H, 3 * H) or h0.shape != (B, H):
        raise ShapeError(f"gru_sequence: incompatible shapes {xproj.shape}, {U.shape}, {h0.shape}")
    hs, gates = kernels.gru_forward(xproj.data, U.data, h0.data)

    def bwd(g):
        dx, dU, dh0 = kernels.gru_backward(g, hs, gates, U.data)
        return dx, dU, dh0

    return _result(hs[1:], (xproj, U, h0), bwd)
