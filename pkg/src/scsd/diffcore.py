"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Define-by-run: operations executed inside a ``with Tape():`` block record
themselves on that tape and build a backward graph; outside a tape they are
plain numpy forward computations (used for evaluation). A tape is rebuilt per
batch and confined to one thread; replaying it in reverse order visits each
node at most once.

The op set is intentionally small: exactly what the model's computation graph
needs, including ``stop_gradient`` and the straight-through estimator. There
is no general broadcasting (scalar broadcast only), no convolutions, no GPU.
"""

from __future__ import annotations

import threading

import numpy as np

from .errors import ContractError, DimensionError, NumericError

DEFAULT_DTYPE = np.float64

_tls = threading.local()


def _tape_stack():
    stack = getattr(_tls, "stack", None)
    if stack is None:
        stack = []
        _tls.stack = stack
    return stack


def active_tape():
    """The innermost tape of the current thread, or None."""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of executed operations for one forward/backward pass."""

    def __init__(self):
        self._nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._nodes)

    def backward(self, loss):
        backward(loss)


class Tensor:
    """Dense tensor with optional gradient tracking.

    ``values`` is a row-major numpy array (float64 by default, float32 in the
    opt-in speed mode). Tensors with ``requires_grad`` carry a same-shape
    ``grad`` array initialized to zeros; backward passes accumulate into it.
    Values are treated as immutable while a tape referencing them is alive
    (the optimizer mutates parameter values only between batches).
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward", "_tape")

    def __init__(self, values, requires_grad=False, dtype=None):
        if dtype is None:
            if isinstance(values, np.ndarray) and values.dtype in (np.float32, np.float64):
                dtype = values.dtype
            else:
                dtype = DEFAULT_DTYPE
        self.values = np.asarray(values, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.values) if self.requires_grad else None
        self._parents = ()
        self._backward = None
        self._tape = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def dtype(self):
        return self.values.dtype

    def item(self):
        if self.values.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0.0

    def backward(self):
        backward(self)

    # Thin operator sugar; the module functions are the primary surface.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def constant(values, dtype=None):
    """A tensor that never receives gradient (masks, loaded data, weights)."""
    return Tensor(values, requires_grad=False, dtype=dtype)


def _as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x), dtype=dtype)


def _node(values, parents, backward_rule):
    """Create an op output; record it if a tape is active and grads needed."""
    tape = active_tape()
    out = Tensor.__new__(Tensor)
    out.values = values
    out._tape = tape
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = np.zeros_like(values)
        out._parents = tuple(parents)
        out._backward = backward_rule
        tape._nodes.append(out)
    else:
        out.requires_grad = False
        out.grad = None
        out._parents = ()
        out._backward = None
    return out


def _check_same_shape(a, b, op):
    if a.values.shape != b.values.shape and a.values.ndim != 0 and b.values.ndim != 0:
        raise DimensionError(f"{op}: shape {a.values.shape} vs {b.values.shape}")


def _reduce_to(g, operand):
    # Scalar-broadcast operand: fold the incoming gradient back to 0-d.
    if operand.values.ndim == 0 and np.ndim(g) != 0:
        return np.asarray(g.sum())
    return g


# ---------------------------------------------------------------------------
# Elementwise operations
# ---------------------------------------------------------------------------

def add(a, b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    _check_same_shape(a, b, "add")
    values = a.values + b.values

    def rule(g, emit):
        emit(a, _reduce_to(g, a))
        emit(b, _reduce_to(g, b))

    return _node(values, (a, b), rule)


def sub(a, b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    _check_same_shape(a, b, "sub")
    values = a.values - b.values

    def rule(g, emit):
        emit(a, _reduce_to(g, a))
        emit(b, _reduce_to(-g, b))

    return _node(values, (a, b), rule)


def mul(a, b):
    a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, like=a)
    _check_same_shape(a, b, "mul")
    values = a.values * b.values

    def rule(g, emit):
        emit(a, _reduce_to(g * b.values, a))
        emit(b, _reduce_to(g * a.values, b))

    return _node(values, (a, b), rule)


def relu(x):
    values = np.maximum(x.values, 0.0)

    def rule(g, emit):
        emit(x, g * (x.values > 0.0))

    return _node(values, (x,), rule)


def sigmoid(x):
    # Stable in both tails: never exponentiates a large positive argument.
    s = x.values
    values = np.empty_like(s)
    pos = s >= 0
    values[pos] = 1.0 / (1.0 + np.exp(-s[pos]))
    es = np.exp(s[~pos])
    values[~pos] = es / (1.0 + es)

    def rule(g, emit):
        emit(x, g * values * (1.0 - values))

    return _node(values, (x,), rule)


def log(x):
    s = x.values
    if np.any(s <= 0.0):
        raise NumericError("log of non-positive value; clamp inputs first")
    values = np.log(s)

    def rule(g, emit):
        emit(x, g / s)

    return _node(values, (x,), rule)


def square(x):
    values = x.values * x.values

    def rule(g, emit):
        emit(x, g * (2.0 * x.values))

    return _node(values, (x,), rule)


def clamp(x, lo, hi):
    """Clip to [lo, hi]; gradient passes only through unclipped entries."""
    s = x.values
    values = np.clip(s, lo, hi)
    inside = (s >= lo) & (s <= hi)

    def rule(g, emit):
        emit(x, g * inside)

    return _node(values, (x,), rule)


# ---------------------------------------------------------------------------
# Linear algebra and structure
# ---------------------------------------------------------------------------

def matmul(a, b):
    if a.values.ndim != 2 or b.values.ndim != 2:
        raise DimensionError("matmul expects 2-D operands")
    if a.values.shape[1] != b.values.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions {a.values.shape} x {b.values.shape}")
    values = a.values @ b.values

    def rule(g, emit):
        emit(a, g @ b.values.T)
        emit(b, a.values.T @ g)

    return _node(values, (a, b), rule)


def add_bias(x, b):
    """Add a (1, d) bias row to every row of a (n, d) tensor."""
    if x.values.ndim != 2 or b.values.shape != (1, x.values.shape[1]):
        raise DimensionError(
            f"add_bias: {x.values.shape} + {b.values.shape}")
    values = x.values + b.values

    def rule(g, emit):
        emit(x, g)
        emit(b, g.sum(axis=0, keepdims=True))

    return _node(values, (x, b), rule)


def tsum(x):
    """Sum of all entries, as a 0-d tensor."""
    values = np.asarray(x.values.sum())

    def rule(g, emit):
        emit(x, np.broadcast_to(g, x.values.shape).copy())

    return _node(values, (x,), rule)


def reshape(x, shape):
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != x.values.size:
        raise DimensionError(f"reshape {x.values.shape} -> {shape}")
    values = x.values.reshape(shape)

    def rule(g, emit):
        emit(x, g.reshape(x.values.shape))

    return _node(values, (x,), rule)


def take_rows(x, indices):
    """Select rows by index (duplicates allowed); backward scatter-adds."""
    idx = np.asarray(indices, dtype=np.intp)
    if idx.ndim != 1:
        raise DimensionError("take_rows expects a 1-D index array")
    values = x.values[idx]

    def rule(g, emit):
        buf = np.zeros_like(x.values)
        np.add.at(buf, idx, g)
        emit(x, buf)

    return _node(values, (x,), rule)


def scatter_rows(x, indices, n_rows):
    """Place rows of x at the given (unique) indices of a zero matrix."""
    idx = np.asarray(indices, dtype=np.intp)
    values = np.zeros((int(n_rows),) + x.values.shape[1:], dtype=x.values.dtype)
    values[idx] = x.values

    def rule(g, emit):
        emit(x, g[idx])

    return _node(values, (x,), rule)


def l2norm_rows(x):
    """Row-wise unit normalization; all-zero rows pass through unchanged."""
    if x.values.ndim != 2:
        raise DimensionError("l2norm_rows expects a 2-D tensor")
    norms = np.sqrt(np.sum(x.values * x.values, axis=1))
    nz = norms > 0.0
    values = x.values.copy()
    values[nz] /= norms[nz, None]

    def rule(g, emit):
        # d(x/r)/dx = (I - y y^T)/r for r > 0; identity on zero rows.
        dot = np.sum(values * g, axis=1, keepdims=True)
        gx = g.copy()
        gx[nz] = (g[nz] - values[nz] * dot[nz]) / norms[nz, None]
        emit(x, gx)

    return _node(values, (x,), rule)


# ---------------------------------------------------------------------------
# Gradient-flow control
# ---------------------------------------------------------------------------

def stop_gradient(x):
    """Forward identity; contributes zero gradient to x."""
    return Tensor(x.values if isinstance(x, Tensor) else x, requires_grad=False)


def straight_through(z, z_hat):
    """Forward the quantized values, copy the gradient back to the encoder.

    The output's values are exactly z_hat's (bit-for-bit, equivalent to
    z + sg[z_hat - z] without the float round-trip); the incoming gradient
    passes to z unchanged and z_hat receives none.
    """
    if z.values.shape != z_hat.values.shape:
        raise DimensionError(
            f"straight_through: shape {z.values.shape} vs {z_hat.values.shape}")

    def rule(g, emit):
        emit(z, g)

    return _node(z_hat.values, (z,), rule)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def backward(loss):
    """Populate grad of every requires_grad ancestor of a scalar loss.

    Repeated calls without zero_grad accumulate. Replays the loss's tape in
    reverse execution order, which is a valid topological order by
    construction, so each node is visited at most once.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.values.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")

    pending: dict[int, np.ndarray] = {}
    holders: dict[int, Tensor] = {}

    def emit(parent, g):
        if not parent.requires_grad:
            return
        key = id(parent)
        if key in pending:
            pending[key] = pending[key] + g
        else:
            pending[key] = g
            holders[key] = parent

    if loss.requires_grad:
        pending[id(loss)] = np.ones_like(loss.values)
        holders[id(loss)] = loss

    tape = loss._tape
    if tape is not None:
        for node in reversed(tape._nodes):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            holders.pop(id(node), None)
            node.grad += g
            node._backward(g, emit)

    # Whatever remains belongs to leaves (parameters, inputs).
    for key, g in pending.items():
        holders[key].grad += g
