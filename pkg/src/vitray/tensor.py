"""Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array and, when produced by an operation, remembers
its parents and a closure that routes the incoming gradient to them. Calling
``backward()`` on a scalar seeds the gradient and walks the graph once in
reverse topological order, so each node's gradient is fully accumulated
before it is propagated. Graphs are acyclic by construction (every op
returns a fresh node) and gradient accumulation order is fixed by the
construction order, which keeps reruns bit-identical.

Tensors are treated as immutable after construction except for ``grad``;
training code updates leaf parameters in place between steps, after the
graph of the previous step has been consumed.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigError, NumericError, ShapeError, UsageError

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic 64-bit seeded generator (PCG64)."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Generator for an independent stream keyed by (seed, *stream).

    Used for per-epoch shuffles and per-step dropout masks so resumed runs
    reproduce the exact sequence without replaying earlier epochs.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *stream])))


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) samples rejected outside +/- 2 std, as float64."""
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > 2.0 * std
    while np.any(bad):
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * std
    return out


class Tensor:
    """Node in the autodiff graph; leaves have no parents."""

    __slots__ = ("data", "grad", "_parents", "_grad_fn", "_op", "_backward_ran")

    def __init__(
        self,
        data,
        parents: tuple = (),
        grad_fn: Optional[Callable[[np.ndarray], None]] = None,
        op: str = "leaf",
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self._parents = parents
        self._grad_fn = grad_fn
        self._op = op
        self._backward_ran = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op!r})"

    # ---- graph traversal ----

    def _topo_order(self) -> list["Tensor"]:
        # Iterative DFS; deep models would overflow Python's recursion limit.
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        return order

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into ``grad`` of every reachable tensor.

        Only scalars can be differentiated, and a graph is consumed by the
        pass: calling backward twice on the same output is rejected rather
        than silently double-accumulating.
        """
        if self.data.size != 1:
            raise UsageError(f"backward() requires a scalar loss, got shape {self.shape}")
        if self._backward_ran:
            raise UsageError("backward() already ran for this tensor; rebuild the graph")
        self._backward_ran = True
        _accumulate(self, np.ones_like(self.data))
        for node in reversed(self._topo_order()):
            if node._grad_fn is not None:
                node._grad_fn(node.grad)

    # ---- operator sugar ----

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return add(neg(self), other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("tensor/tensor division is not supported; divide by a scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return take(self, index)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)

    def transpose(self, axes: Sequence[int]):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that numpy broadcasting expanded."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---- elementwise arithmetic ----


def add(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        out = Tensor(a.data + c, (a,), op="add")

        def grad_fn(g):
            _accumulate(a, g)

        out._grad_fn = grad_fn
        return out
    _check_broadcast(a, b, "add")
    out = Tensor(a.data + b.data, (a, b), op="add")

    def grad_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    out._grad_fn = grad_fn
    return out


def sub(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        return add(a, -float(b))
    _check_broadcast(a, b, "sub")
    out = Tensor(a.data - b.data, (a, b), op="sub")

    def grad_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    out._grad_fn = grad_fn
    return out


def neg(a: Tensor) -> Tensor:
    out = Tensor(-a.data, (a,), op="neg")

    def grad_fn(g):
        _accumulate(a, -g)

    out._grad_fn = grad_fn
    return out


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        c = float(b)
        out = Tensor(a.data * c, (a,), op="mul")

        def grad_fn(g):
            _accumulate(a, g * c)

        out._grad_fn = grad_fn
        return out
    _check_broadcast(a, b, "mul")
    out = Tensor(a.data * b.data, (a, b), op="mul")

    def grad_fn(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    out._grad_fn = grad_fn
    return out


# ---- linear algebra ----


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy-style broadcasting over leading axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner extents disagree for shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch extents disagree for shapes {a.shape} and {b.shape}") from None
    out = Tensor(a.data @ b.data, (a, b), op="matmul")

    def grad_fn(g):
        _accumulate(a, _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape))
        _accumulate(b, _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape))

    out._grad_fn = grad_fn
    return out


# ---- shape manipulation ----


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    old = a.shape
    out = Tensor(a.data.reshape(shape), (a,), op="reshape")

    def grad_fn(g):
        _accumulate(a, g.reshape(old))

    out._grad_fn = grad_fn
    return out


def transpose(a: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"transpose: {axes} is not a permutation of axes for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    out = Tensor(a.data.transpose(axes), (a,), op="transpose")

    def grad_fn(g):
        _accumulate(a, g.transpose(inverse))

    out._grad_fn = grad_fn
    return out


def take(a: Tensor, index) -> Tensor:
    """Basic (slice / integer) indexing; gradient scatters back into place."""
    out = Tensor(a.data[index], (a,), op="slice")

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[index] += g
        _accumulate(a, full)

    out._grad_fn = grad_fn
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise UsageError("concat: need at least one tensor")
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), op="concat")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _accumulate(t, piece)

    out._grad_fn = grad_fn
    return out


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {a.shape} to {shape}") from None
    out = Tensor(data.copy(), (a,), op="broadcast")

    def grad_fn(g):
        _accumulate(a, _unbroadcast(g, a.shape))

    out._grad_fn = grad_fn
    return out


# ---- reductions ----


def _norm_axes(axis, ndim: int):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = Tensor(a.data.sum(axis=axes, keepdims=keepdims), (a,), op="sum")

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g, a.shape))

    out._grad_fn = grad_fn
    return out


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    out = Tensor(a.data.mean(axis=axes, keepdims=keepdims), (a,), op="mean")

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        _accumulate(a, np.broadcast_to(g / n, a.shape))

    out._grad_fn = grad_fn
    return out


# ---- neural-network primitives ----


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Overflow-safe softmax along ``axis`` (max subtracted before exp)."""
    if not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"softmax: axis {axis} invalid for shape {a.shape}")
    if not np.all(np.isfinite(a.data)):
        raise NumericError("softmax: input contains non-finite values")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, (a,), op="softmax")

    def grad_fn(g):
        _accumulate(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))

    out._grad_fn = grad_fn
    return out


def layer_norm(a: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to mean 0 / variance 1, then scale and shift."""
    if eps <= 0:
        raise ConfigError(f"layer_norm: eps must be positive, got {eps}")
    d = a.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must match last extent ({d},)"
        )
    mu = a.data.mean(axis=-1, keepdims=True)
    xc = a.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = Tensor(xhat * gamma.data + beta.data, (a, gamma, beta), op="layer_norm")
    lead = tuple(range(a.ndim - 1))

    def grad_fn(g):
        dxhat = g * gamma.data
        dx = inv / d * (d * dxhat - dxhat.sum(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True))
        _accumulate(a, dx)
        _accumulate(gamma, (g * xhat).sum(axis=lead))
        _accumulate(beta, g.sum(axis=lead))

    out._grad_fn = grad_fn
    return out


def gelu(a: Tensor) -> Tensor:
    """Gaussian error linear unit, exact erf form: x * Phi(x)."""
    x = a.data
    phi = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = Tensor(x * phi, (a,), op="gelu")

    def grad_fn(g):
        # d/dx [x Phi(x)] = Phi(x) + x phi(x)
        _accumulate(a, g * (phi + x * np.exp(-0.5 * x * x) * _INV_SQRT2PI))

    out._grad_fn = grad_fn
    return out
