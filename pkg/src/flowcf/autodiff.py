"""Reverse-mode automatic differentiation on float64 numpy arrays.

A small define-by-run tape: every operation on :class:`Var` records its
parents and a closure producing parent gradients, and :func:`backward`
walks the recorded graph in reverse topological order. The op set is the
minimum needed for dense nets, affine coupling layers, and the loss terms
used elsewhere in this package: matmul, add, elementwise mul, exp, log,
relu, sigmoid, sum, mean, square, concat, column/row selection, and a
dropout mask.

The module-level functions (`relu`, `sigmoid`, `exp`, ...) dispatch on
their argument type: given a plain ndarray they compute with numpy and
return an ndarray. Model code written against these functions therefore
runs both as a recorded graph (training) and as plain array math
(inference) without duplication.

Gradients accumulate across uses of the same node; resetting them between
optimizer steps is the caller's responsibility (see :meth:`Adam.reset_grads`).
Everything is float64 and values are checked for NaN/Inf as they are
produced.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import GraphError, NonFiniteError, ShapeError

Array = np.ndarray

# Finite checks on every op output. Cheap at desk scale; can be switched
# off for micro-benchmarks.
FINITE_CHECKS = True


def _asarray(x) -> Array:
    return np.asarray(x, dtype=np.float64)


def _check_finite(data: Array, op: str) -> None:
    if FINITE_CHECKS and not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite value produced by op '{op}'")


class Var:
    """A node in the computation graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "_parents", "_grad_fn", "_op")

    # make `ndarray <op> Var` defer to the reflected Var operators instead
    # of numpy's object broadcasting
    __array_ufunc__ = None

    def __init__(self, data, parents: tuple = (), grad_fn: Callable | None = None,
                 op: str = "leaf"):
        self.data = _asarray(data)
        _check_finite(self.data, op)
        self.grad: Array | None = None
        self._parents = parents
        self._grad_fn = grad_fn
        self._op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Var(op={self._op}, shape={self.data.shape})"

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return add(self, -_lift(other))

    def __rsub__(self, other):
        return add(_lift(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Var):
            raise GraphError("division by a Var is not a supported primitive")
        return mul(self, 1.0 / _asarray(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(_lift(other), self)

    # -- reductions (same method names as ndarray, so model code can run on
    #    either) -------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        data = self.data
        out = data.sum(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            return (_expand_reduced(g, data.shape, axis, keepdims),)

        return Var(out, (self,), grad_fn, op="sum")

    def mean(self, axis=None, keepdims=False):
        data = self.data
        count = data.size if axis is None else data.shape[axis]
        out = data.mean(axis=axis, keepdims=keepdims)

        def grad_fn(g):
            return (_expand_reduced(g, data.shape, axis, keepdims) / count,)

        return Var(out, (self,), grad_fn, op="mean")

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        out = self.data.reshape(shape)

        def grad_fn(g):
            return (g.reshape(old),)

        return Var(out, (self,), grad_fn, op="reshape")


class Parameter(Var):
    """A trainable leaf with a stable name. Gradient is allocated by
    backward() and must be reset by the caller between steps."""

    __slots__ = ("name",)

    def __init__(self, value, name: str):
        super().__init__(value, op="parameter")
        self.name = name

    def reset_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Parameter({self.name}, shape={self.data.shape})"


def _lift(x) -> Var:
    return x if isinstance(x, Var) else Var(x, op="const")


def _unbroadcast(g: Array, shape: tuple) -> Array:
    """Sum `g` down to `shape`, undoing numpy broadcasting."""
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _expand_reduced(g: Array, shape: tuple, axis, keepdims: bool) -> Array:
    """Broadcast a reduction gradient back to the pre-reduction shape."""
    g = np.asarray(g)
    if axis is None:
        return np.full(shape, float(g), dtype=np.float64) if g.ndim == 0 else \
            np.broadcast_to(g, shape).copy()
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


# -- binary primitives -------------------------------------------------------

def add(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return _asarray(a) + _asarray(b)
    a, b = _lift(a), _lift(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise ShapeError(f"add: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    ash, bsh = a.data.shape, b.data.shape

    def grad_fn(g):
        return _unbroadcast(g, ash), _unbroadcast(g, bsh)

    return Var(out, (a, b), grad_fn, op="add")


def mul(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return _asarray(a) * _asarray(b)
    a, b = _lift(a), _lift(b)
    try:
        out = a.data * b.data
    except ValueError:
        raise ShapeError(f"mul: shapes {a.data.shape} and {b.data.shape} do not broadcast")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)

    return Var(out, (a, b), grad_fn, op="mul")


def matmul(a, b):
    if not isinstance(a, Var) and not isinstance(b, Var):
        return _asarray(a) @ _asarray(b)
    a, b = _lift(a), _lift(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: incompatible shapes {a.data.shape} and {b.data.shape}")
    ad, bd = a.data, b.data

    def grad_fn(g):
        return g @ bd.T, ad.T @ g

    return Var(ad @ bd, (a, b), grad_fn, op="matmul")


# -- elementwise primitives ---------------------------------------------------

def exp(x):
    if not isinstance(x, Var):
        return np.exp(_asarray(x))
    out = np.exp(x.data)

    def grad_fn(g):
        return (g * out,)

    return Var(out, (x,), grad_fn, op="exp")


def log(x):
    if not isinstance(x, Var):
        return np.log(_asarray(x))
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.data)
    xd = x.data

    def grad_fn(g):
        return (g / xd,)

    return Var(out, (x,), grad_fn, op="log")


def relu(x):
    """max(x, 0); also the hinge building block."""
    if not isinstance(x, Var):
        return np.maximum(_asarray(x), 0.0)
    out = np.maximum(x.data, 0.0)
    mask = (x.data > 0).astype(np.float64)

    def grad_fn(g):
        return (g * mask,)

    return Var(out, (x,), grad_fn, op="relu")


def _sigmoid_np(x: Array) -> Array:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x):
    if not isinstance(x, Var):
        return _sigmoid_np(_asarray(x))
    out = _sigmoid_np(x.data)

    def grad_fn(g):
        return (g * out * (1.0 - out),)

    return Var(out, (x,), grad_fn, op="sigmoid")


def tanh(x):
    # composed from sigmoid: tanh(x) = 2*sigma(2x) - 1
    return 2.0 * sigmoid(2.0 * x) - 1.0 if isinstance(x, Var) else np.tanh(_asarray(x))


def square(x):
    if not isinstance(x, Var):
        return np.square(_asarray(x))
    xd = x.data

    def grad_fn(g):
        return (g * 2.0 * xd,)

    return Var(xd * xd, (x,), grad_fn, op="square")


def clip(x, lo: float, hi: float):
    """Clamp to [lo, hi] with zero gradient outside; built from relu."""
    if not isinstance(x, Var):
        return np.clip(_asarray(x), lo, hi)
    return lo + relu(x - lo) - relu(x - hi)


def dropout(x, p: float, rng: np.random.Generator | None = None, training: bool = False):
    """Inverted dropout: scales kept units by 1/(1-p) at train time so that
    evaluation mode is the identity map."""
    if not training or p == 0.0:
        return x
    if rng is None:
        raise GraphError("dropout in training mode requires an rng")
    shape = x.shape if isinstance(x, Var) else _asarray(x).shape
    mask = (rng.random(shape) >= p) / (1.0 - p)
    return mul(x, mask) if isinstance(x, Var) else _asarray(x) * mask


# -- structural ops -----------------------------------------------------------

def concat(items: Sequence, axis: int = 1):
    if not any(isinstance(v, Var) for v in items):
        return np.concatenate([_asarray(v) for v in items], axis=axis)
    items = [_lift(v) for v in items]
    sizes = [v.data.shape[axis] for v in items]
    out = np.concatenate([v.data for v in items], axis=axis)
    splits = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return Var(out, tuple(items), grad_fn, op="concat")


def take_cols(x, idx):
    """Select columns of a 2-D array; the split counterpart to concat."""
    idx = np.asarray(idx, dtype=np.intp)
    if not isinstance(x, Var):
        return _asarray(x)[:, idx]
    if x.data.ndim != 2:
        raise ShapeError(f"take_cols: expected 2-D input, got shape {x.data.shape}")
    xd = x.data

    def grad_fn(g):
        full = np.zeros_like(xd)
        np.add.at(full, (slice(None), idx), g)
        return (full,)

    return Var(xd[:, idx], (x,), grad_fn, op="take_cols")


def take_row(x, i: int):
    """Select row `i` of a 2-D array, keeping it 2-D (shape (1, K))."""
    if not isinstance(x, Var):
        return _asarray(x)[i:i + 1, :]
    if x.data.ndim != 2:
        raise ShapeError(f"take_row: expected 2-D input, got shape {x.data.shape}")
    xd = x.data

    def grad_fn(g):
        full = np.zeros_like(xd)
        full[i:i + 1, :] = g
        return (full,)

    return Var(xd[i:i + 1, :], (x,), grad_fn, op="take_row")


def logsumexp(x, axis: int = 1):
    """Numerically stable log-sum-exp; the max shift is detached (it cancels
    in the gradient)."""
    if not isinstance(x, Var):
        xd = _asarray(x)
        m = xd.max(axis=axis, keepdims=True)
        return np.log(np.exp(xd - m).sum(axis=axis)) + np.squeeze(m, axis=axis)
    m = x.data.max(axis=axis, keepdims=True)
    shifted = exp(x - m).sum(axis=axis)
    return log(shifted) + np.squeeze(m, axis=axis)


# -- backward -----------------------------------------------------------------

def _topo(root: Var) -> list[Var]:
    order: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(out: Var) -> None:
    """Accumulate d(out)/d(node) into `.grad` over the graph below `out`.

    `out` must be scalar-valued. Gradients sum across multiple uses of a
    node and across repeated backward calls; callers reset them.
    """
    if not isinstance(out, Var):
        raise GraphError("backward expects a Var")
    if out.data.size != 1:
        raise GraphError(f"backward requires a scalar output, got shape {out.data.shape}")
    order = _topo(out)
    seed = np.ones_like(out.data)
    out.grad = seed if out.grad is None else out.grad + seed
    for node in reversed(order):
        if node._grad_fn is None or node.grad is None:
            continue
        parent_grads = node._grad_fn(node.grad)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None:
                continue
            _check_finite(pg, f"backward({node._op})")
            parent.grad = pg if parent.grad is None else parent.grad + pg


# -- optimizer ----------------------------------------------------------------

class Adam:
    """Adam with bias correction (eps added outside the square root).

    `step()` leaves gradients untouched; call `reset_grads()` afterwards.
    """

    def __init__(self, params: Iterable[Parameter], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                raise GraphError(f"adam: missing gradient for parameter '{p.name}'")
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            _check_finite(p.data, f"adam({p.name})")

    def reset_grads(self) -> None:
        for p in self.params:
            p.reset_grad()


# -- gradient checking ---------------------------------------------------------

def finite_diff_check(f: Callable[[], Var], params: Sequence[Parameter],
                      h: float = 1e-5) -> dict[str, float]:
    """Compare analytic gradients of the scalar `f()` against central finite
    differences, coordinate by coordinate.

    Returns per-parameter max relative error, where the relative error uses
    max(|analytic|, |numeric|, 1e-6) as denominator so that near-zero
    gradients do not blow up the ratio. `f` must be deterministic across
    calls (fix any rng inside the closure).
    """
    for p in params:
        p.reset_grad()
    out = f()
    backward(out)
    analytic = {id(p): (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for p in params}

    report: dict[str, float] = {}
    for p in params:
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(f().data)
            flat[i] = orig - h
            f_minus = float(f().data)
            flat[i] = orig
            numeric[i] = (f_plus - f_minus) / (2.0 * h)
        a = analytic[id(p)].reshape(-1)
        denom = np.maximum(1e-6, np.maximum(np.abs(a), np.abs(numeric)))
        report[p.name] = float(np.max(np.abs(a - numeric) / denom)) if flat.size else 0.0
    for p in params:
        p.reset_grad()
    return report
