"""Dense real tensors with reverse-mode autodiff.

The graph is define-by-run: every operation on grad-tracked tensors records
its parents and a backward closure on the result, and ``backward()`` on a
scalar root replays the closures in reverse topological order. Storage is
float32 by default; building leaves as float64 gives a double-precision
debug mode for tight gradient checks.
"""

from __future__ import annotations

import contextlib

import numpy as np

DEFAULT_DTYPE = np.float32

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype.kind != "f":
        return arr.astype(DEFAULT_DTYPE)
    return arr


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (the pre-broadcast operand shape)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, extent in enumerate(shape):
        if extent == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _broadcast_shape(a_shape, b_shape, op):
    try:
        return np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise ValueError(
            f"{op}: shapes {tuple(a_shape)} and {tuple(b_shape)} are not "
            "broadcast-compatible"
        ) from None


def _normalize_axes(axes, ndim):
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(ax % ndim for ax in axes)
    if len(set(axes)) != len(axes):
        raise ValueError(f"duplicate reduction axes {axes}")
    return axes


class Tensor:
    """A dense n-dimensional array plus an optional autodiff node.

    ``data`` must be treated as immutable between creation and the end of
    the backward pass that consumes it; the optimizer mutates parameter
    data in place only after gradients have been read.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad = None
        self._parents = ()
        self._backward = None

    # -- construction of op results -------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        """Wrap an op result; records the node only while grads are enabled."""
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def all_finite(self):
        return bool(np.isfinite(self.data).all())

    def _accumulate(self, g):
        # accumulation allocates (never in place), so adopting g directly is
        # safe even when it aliases another node's gradient buffer
        self.grad = g if self.grad is None else self.grad + g

    # -- binary elementwise ----------------------------------------------

    @staticmethod
    def _coerce(other, like):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=like.data.dtype))

    def __add__(self, other):
        other = Tensor._coerce(other, self)
        _broadcast_shape(self.shape, other.shape, "add")
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._make(self.data + other.data, (a, b), bw)

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._coerce(other, self)
        _broadcast_shape(self.shape, other.shape, "sub")
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))

        return Tensor._make(self.data - other.data, (a, b), bw)

    def __rsub__(self, other):
        return Tensor._coerce(other, self) - self

    def __mul__(self, other):
        other = Tensor._coerce(other, self)
        _broadcast_shape(self.shape, other.shape, "mul")
        a, b = self, other
        ad, bd = a.data, b.data

        def bw(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * bd, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * ad, b.shape))

        return Tensor._make(ad * bd, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other, self)
        _broadcast_shape(self.shape, other.shape, "div")
        a, b = self, other
        ad, bd = a.data, b.data
        with np.errstate(divide="ignore", invalid="ignore"):
            out = ad / bd

        def bw(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                if a.requires_grad:
                    a._accumulate(_unbroadcast(g / bd, a.shape))
                if b.requires_grad:
                    # d(a/b)/db = -a / b^2
                    b._accumulate(_unbroadcast(-g * ad / (bd * bd), b.shape))

        return Tensor._make(out, (a, b), bw)

    def __rtruediv__(self, other):
        return Tensor._coerce(other, self) / self

    def __neg__(self):
        a = self

        def bw(g):
            a._accumulate(-g)

        return Tensor._make(-self.data, (a,), bw)

    # -- unary elementwise -----------------------------------------------

    def relu(self):
        a = self
        mask = self.data > 0

        def bw(g):
            a._accumulate(g * mask)

        return Tensor._make(np.maximum(self.data, 0), (a,), bw)

    def sin(self):
        a = self
        xd = self.data

        def bw(g):
            a._accumulate(g * np.cos(xd))

        return Tensor._make(np.sin(xd), (a,), bw)

    def cos(self):
        a = self
        xd = self.data

        def bw(g):
            a._accumulate(-g * np.sin(xd))

        return Tensor._make(np.cos(xd), (a,), bw)

    def sigmoid(self):
        a = self
        out = 1.0 / (1.0 + np.exp(-self.data))

        def bw(g):
            a._accumulate(g * out * (1.0 - out))

        return Tensor._make(out, (a,), bw)

    def sqrt(self):
        a = self
        out = np.sqrt(self.data)

        def bw(g):
            with np.errstate(divide="ignore", invalid="ignore"):
                a._accumulate(g * 0.5 / out)

        return Tensor._make(out, (a,), bw)

    def square(self):
        a = self
        xd = self.data

        def bw(g):
            a._accumulate(g * 2.0 * xd)

        return Tensor._make(xd * xd, (a,), bw)

    def affine(self, scale, shift=0.0):
        """Elementwise ``scale * x + shift`` with python-scalar coefficients."""
        a = self
        scale = float(scale)

        def bw(g):
            a._accumulate(g * scale)

        dt = self.data.dtype
        return Tensor._make(self.data * dt.type(scale) + dt.type(shift), (a,), bw)

    # -- matmul ------------------------------------------------------------

    def __matmul__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(other)
        a, b = self, other
        if a.ndim < 2 or b.ndim != 2:
            raise ValueError(f"matmul: expected [..,K] @ [K,P], got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[0]:
            raise ValueError(
                f"matmul: inner dimensions differ, {a.shape} @ {b.shape}"
            )
        lead = a.shape[:-1]
        a2 = a.data.reshape(-1, a.shape[-1])
        out = a2 @ b.data

        def bw(g):
            g2 = g.reshape(-1, b.shape[1])
            if a.requires_grad:
                a._accumulate((g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                b._accumulate(a2.T @ g2)

        return Tensor._make(out.reshape(*lead, b.shape[1]), (a, b), bw)

    # -- reductions --------------------------------------------------------

    def _check_reduce(self, axes):
        for ax in axes:
            if self.shape[ax] == 0:
                raise ValueError(f"reduction over empty axis {ax} of shape {self.shape}")

    def sum(self, axis=None, keepdims=False):
        axes = _normalize_axes(axis, self.ndim)
        self._check_reduce(axes)
        a = self

        def bw(g):
            a._accumulate(np.broadcast_to(_expand(g, axes, keepdims), a.shape))

        return Tensor._make(self.data.sum(axis=axes, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims=False):
        axes = _normalize_axes(axis, self.ndim)
        self._check_reduce(axes)
        a = self
        n = int(np.prod([self.shape[ax] for ax in axes]))

        def bw(g):
            a._accumulate(np.broadcast_to(_expand(g, axes, keepdims) / n, a.shape))

        return Tensor._make(self.data.mean(axis=axes, keepdims=keepdims), (a,), bw)

    def var(self, axis=None, keepdims=False):
        """Population variance (divisor = element count, not count - 1)."""
        axes = _normalize_axes(axis, self.ndim)
        self._check_reduce(axes)
        a = self
        n = int(np.prod([self.shape[ax] for ax in axes]))
        mu = self.data.mean(axis=axes, keepdims=True)
        centered = self.data - mu

        def bw(g):
            # d var / d x_i = 2 (x_i - mu) / n; the mu dependence cancels.
            a._accumulate(_expand(g, axes, keepdims) * (2.0 / n) * centered)

        return Tensor._make(
            (centered * centered).mean(axis=axes, keepdims=keepdims), (a,), bw
        )

    # -- shape ops -----------------------------------------------------------

    def transpose(self):
        if self.ndim != 2:
            raise ValueError(f"transpose expects a matrix, got shape {self.shape}")
        a = self

        def bw(g):
            a._accumulate(g.T)

        return Tensor._make(self.data.T, (a,), bw)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = self.shape

        def bw(g):
            a._accumulate(g.reshape(old))

        return Tensor._make(self.data.reshape(shape), (a,), bw)

    # -- fused standardization -------------------------------------------

    def standardize(self, axis, eps):
        """Per-unit ``(x - mean) / sqrt(var + eps)`` over ``axis``.

        Population statistics; a unit with zero variance maps to exactly
        zero (the numerator vanishes first). Fused so a training step costs
        two passes instead of the eight the composed form needs.
        """
        axes = _normalize_axes(axis, self.ndim)
        self._check_reduce(axes)
        a = self
        mu = self.data.mean(axis=axes, keepdims=True)
        centered = self.data - mu
        var = np.square(centered).mean(axis=axes, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = 1.0 / np.sqrt(var + a.data.dtype.type(eps))
            xhat = centered * r

        def bw(g):
            gm = g.mean(axis=axes, keepdims=True)
            gx = (g * xhat).mean(axis=axes, keepdims=True)
            a._accumulate(r * (g - gm - xhat * gx))

        return Tensor._make(xhat, (a,), bw)

    # -- backward ---------------------------------------------------------

    def backward(self, free_graph=True):
        """Accumulate d(self)/d(leaf) into every grad-tracked leaf.

        ``self`` must be a grad-tracked scalar (shape ``()``). Gradients add
        across fan-out and across repeated backward calls; callers reset
        leaf ``.grad`` to None between steps.
        """
        if self.shape != ():
            raise ValueError(f"backward requires a scalar root, got shape {self.shape}")
        if not self.requires_grad:
            raise ValueError("backward on a tensor that is not grad-tracked")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self._accumulate(np.ones((), dtype=self.data.dtype))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
        if free_graph:
            for node in topo:
                if node._backward is not None:
                    node._backward = None
                    node._parents = ()


def _expand(g, axes, keepdims):
    """Re-insert reduced axes so a reduction gradient broadcasts back."""
    if keepdims:
        return g
    g = np.asarray(g)
    for ax in sorted(axes):
        g = np.expand_dims(g, ax)
    return g


def concat(tensors, axis=0):
    """Concatenate along ``axis``; backward splits the gradient."""
    tensors = list(tensors)
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return Tensor._make(np.concatenate(datas, axis=axis), tuple(tensors), bw)


def elementwise(op_kind, a, b=None):
    """Dispatch table over the supported elementwise op kinds."""
    unary = {
        "relu": Tensor.relu,
        "sin": Tensor.sin,
        "cos": Tensor.cos,
        "sigmoid": Tensor.sigmoid,
        "sqrt": Tensor.sqrt,
        "square": Tensor.square,
    }
    binary = {
        "add": Tensor.__add__,
        "sub": Tensor.__sub__,
        "mul": Tensor.__mul__,
        "div": Tensor.__truediv__,
    }
    if op_kind in unary:
        return unary[op_kind](a)
    if op_kind in binary:
        if b is None:
            raise ValueError(f"{op_kind} needs two operands")
        return binary[op_kind](a, b)
    if op_kind == "scalar-affine":
        scale, shift = b
        return a.affine(scale, shift)
    raise ValueError(f"unknown elementwise op kind {op_kind!r}")
