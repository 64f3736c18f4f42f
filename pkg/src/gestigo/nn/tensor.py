"""Reverse-mode autodiff over dense numpy arrays.

A :class:`Tensor` wraps an ndarray plus an optional gradient buffer and a
closure that knows how to push gradients to its parents. Calling
``backward()`` on a scalar walks the recorded graph in reverse
topological order. Compute dtype is float32 by default; building a model
with float64 gives the "shadow" configuration used by gradient-check
tests.

Only the ops needed by the gesture network live here (elementwise
arithmetic, exp/log, reductions, stacking); the structured layers build
their own graph nodes with custom backward closures.
"""

from __future__ import annotations

import numpy as np

from ..errors import ArgumentError, GraphError, NumericError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 parents=(), backward=None, name: str = ""):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else np.float32)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self._backward = backward
        self.name = name

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.data.shape}, dtype={self.data.dtype.name})"

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def _ensure_grad(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    # -- autodiff -----------------------------------------------------------

    def backward(self, check_finite: bool = True):
        """Populate ``grad`` on every reachable ``requires_grad`` tensor.

        Gradients accumulate across calls until cleared. Raises
        :class:`NumericError` if the loss or any produced gradient is
        non-finite (the pass-boundary finiteness contract).
        """
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar loss, got shape {self.data.shape}")
        if self._backward is None and not self.parents:
            raise GraphError("backward on a tensor detached from any graph")
        if check_finite and not np.isfinite(self.data).all():
            raise NumericError("non-finite loss value")

        order = self._topo_order()
        # Interior nodes restart from zero each pass; only leaves accumulate
        # across calls.
        for n in order:
            if n._backward is not None:
                n.grad = None
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        if check_finite:
            for node in order:
                if node.requires_grad and node.grad is not None \
                        and not np.isfinite(node.grad).all():
                    raise NumericError(
                        f"non-finite gradient in tensor {node.name or node.shape}")

    def _topo_order(self):
        order = []
        seen = set()
        stack = [(self, iter(self.parents))]
        seen.add(id(self))
        while stack:
            node, it = stack[-1]
            advanced = False
            for p in it:
                if id(p) not in seen:
                    seen.add(id(p))
                    stack.append((p, iter(p.parents)))
                    advanced = True
                    break
            if not advanced:
                order.append(node)
                stack.pop()
        return order

    # -- elementwise ops ----------------------------------------------------

    def _coerce(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    def __add__(self, other):
        other = self._coerce(other)
        return _binary(self, other, self.data + other.data,
                       lambda g: g, lambda g: g)

    __radd__ = __add__

    def __neg__(self):
        return _unary(self, -self.data, lambda g: -g)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self.data, other.data
        return _binary(self, other, a * b, lambda g: g * b, lambda g: g * a)

    __rmul__ = __mul__

    def exp(self):
        out = np.exp(self.data)
        return _unary(self, out, lambda g: g * out)

    def log(self):
        return _unary(self, np.log(self.data), lambda g: g / self.data)

    def sum(self):
        return _unary(self, np.asarray(self.data.sum(), dtype=self.data.dtype),
                      lambda g: np.broadcast_to(g, self.data.shape))

    def mean(self):
        n = self.data.size
        return _unary(self, np.asarray(self.data.mean(), dtype=self.data.dtype),
                      lambda g: np.broadcast_to(g / n, self.data.shape))

    def reshape(self, *shape):
        old = self.data.shape
        return _unary(self, self.data.reshape(*shape),
                      lambda g: g.reshape(old))


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False):
    """Add a gradient contribution to ``t``.

    ``own=True`` promises ``g`` is freshly allocated by the caller and not
    a view of anything shared, letting the first contribution be adopted
    without a copy.
    """
    if g.shape != t.data.shape:
        # reverse of broadcasting: sum over expanded axes
        extra = g.ndim - t.data.ndim
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
            own = True
        axes = tuple(i for i, d in enumerate(t.data.shape) if d == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
            own = True
    if t.grad is None:
        if own and g.dtype == t.data.dtype:
            t.grad = g
        else:
            t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _needs_graph(*tensors):
    return any(t.requires_grad or t._backward is not None or t.parents
               for t in tensors)


def _unary(a: Tensor, data, da):
    if not _needs_graph(a):
        return Tensor(data, dtype=a.data.dtype)

    def backward(g):
        _accumulate(a, da(g))

    return Tensor(data, dtype=a.data.dtype, parents=(a,), backward=backward)


def _binary(a: Tensor, b: Tensor, data, da, db):
    if not _needs_graph(a, b):
        return Tensor(data, dtype=data.dtype)

    def backward(g):
        _accumulate(a, da(g))
        _accumulate(b, db(g))

    return Tensor(data, dtype=data.dtype, parents=(a, b), backward=backward)


def node(data, parents, backward, name: str = "") -> Tensor:
    """Build a graph node with a custom backward closure.

    ``backward(grad)`` must route gradients to the parents itself, via
    :func:`accumulate`.
    """
    return Tensor(data, dtype=np.asarray(data).dtype, parents=tuple(parents),
                  backward=backward, name=name)


#: public alias for layer implementations
accumulate = _accumulate


def stack(tensors) -> Tensor:
    """Stack scalar/same-shape tensors along a new leading axis."""
    tensors = list(tensors)
    if not tensors:
        raise ArgumentError("cannot stack zero tensors")
    data = np.stack([t.data for t in tensors])

    def backward(g):
        for i, t in enumerate(tensors):
            _accumulate(t, g[i])

    if not _needs_graph(*tensors):
        return Tensor(data, dtype=data.dtype)
    return Tensor(data, dtype=data.dtype, parents=tuple(tensors), backward=backward)


def parameter(data, dtype=np.float32, name: str = "") -> Tensor:
    return Tensor(np.asarray(data, dtype=dtype), requires_grad=True, dtype=dtype,
                  name=name)
