"""Dense float64 tensors with tape-based reverse-mode differentiation.

Only the operations needed to train a small MLP under the GKDE objective are
provided. Operations executed while a :class:`Tape` is active (``with tape:``)
and involving at least one tensor with ``requires_grad`` are recorded in
execution order, so the tape is topologically sorted by construction.
Outside a tape the same functions are plain numpy evaluations.

    >>> x = Tensor([3.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     y = sum_(x * x)
    >>> backward(tape, y)[x]
    array([6.])
"""

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DomainError, ShapeError

_ACTIVE: list["Tape"] = []


class Tensor:
    """A float64 array, optionally a leaf parameter for differentiation."""

    __slots__ = ("data", "requires_grad", "_recorded")

    def __init__(self, values, requires_grad: bool = False):
        data = np.array(values, dtype=np.float64)
        self.data = data
        self.requires_grad = requires_grad
        self._recorded = False  # True when produced by a taped operation

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class Node:
    out: Tensor
    parents: tuple
    vjp: Callable[[np.ndarray], Sequence]  # output adjoint -> parent adjoints
    op: str


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    A tape has a single writer; do not record into one tape from several
    threads.
    """

    nodes: list = field(default_factory=list)

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc):
        popped = _ACTIVE.pop()
        assert popped is self
        return False

    def record(self, op, out, parents, vjp):
        self.nodes.append(Node(out, tuple(parents), vjp, op))
        out.requires_grad = True
        out._recorded = True

    def leaves(self) -> list:
        """Parameter tensors (not produced by a taped op) used on this tape."""
        seen = {}
        for node in self.nodes:
            for p in node.parents:
                if p.requires_grad and not p._recorded and id(p) not in seen:
                    seen[id(p)] = p
        return list(seen.values())


def active_tape():
    return _ACTIVE[-1] if _ACTIVE else None


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op, out_data, parents, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.requires_grad = False
    out._recorded = False
    tape = active_tape()
    if tape is not None and any(p.requires_grad for p in parents):
        tape.record(op, out, parents, vjp)
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# ---------------------------------------------------------------- binary ops


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _emit(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    return _emit(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    return _emit(
        "mul",
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    """2-D matrix product ``a @ b``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    return _emit(
        "matmul",
        a.data @ b.data,
        (a, b),
        lambda g: (g @ b.data.T, a.data.T @ g),
    )


# ----------------------------------------------------------------- unary ops


def scale(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise DomainError("log of a non-positive value")
    return _emit("log", np.log(a.data), (a,), lambda g: (g / a.data,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _emit("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    return _emit("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def square(a) -> Tensor:
    a = as_tensor(a)
    return _emit("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


def clip_min(a, floor: float) -> Tensor:
    """``max(a, floor)``; entries held at the floor receive zero gradient."""
    a = as_tensor(a)
    keep = a.data > floor
    return _emit("clip_min", np.where(keep, a.data, floor), (a,), lambda g: (g * keep,))


def sum_(a, axis=None) -> Tensor:
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis)

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _emit("sum", np.asarray(out, dtype=np.float64), (a,), vjp)


def mean(a, axis=None) -> Tensor:
    a = as_tensor(a)
    count = a.size if axis is None else a.shape[axis]
    return scale(sum_(a, axis=axis), 1.0 / count)


def sq_dist(z, anchors) -> Tensor:
    """Squared Euclidean distances between rows of ``z`` (b x d) and constant
    ``anchors`` (n x d); returns b x n."""
    z = as_tensor(z)
    A = np.asarray(anchors, dtype=np.float64)
    if z.data.ndim != 2 or A.ndim != 2 or z.shape[1] != A.shape[1]:
        raise ShapeError(f"sq_dist: incompatible shapes {z.shape} and {A.shape}")
    diff = z.data[:, None, :] - A[None, :, :]
    out = np.einsum("bnd,bnd->bn", diff, diff)

    def vjp(g):
        return (2.0 * (z.data * g.sum(axis=1, keepdims=True) - g @ A),)

    return _emit("sq_dist", out, (z,), vjp)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "exp": exp,
    "log": log,
    "tanh": tanh,
    "relu": relu,
    "scale": scale,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise op by name (``scale`` takes a tensor and a float)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ContractError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ------------------------------------------------------------------ backward


def backward(tape: Tape, root: Tensor, wrt=None) -> dict:
    """Reverse sweep over ``tape`` seeded with d(root)/d(root) = 1.

    Returns a dict mapping each leaf parameter tensor to its gradient. With
    ``wrt`` given, exactly those tensors are keyed (zeros where ``root`` does
    not depend on them); otherwise every leaf seen on the tape.
    """
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    adj = {id(root): np.ones_like(root.data)}
    for node in reversed(tape.nodes):
        g = adj.pop(id(node.out), None)
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if not parent.requires_grad:
                continue
            key = id(parent)
            if key in adj:
                adj[key] = adj[key] + pg
            else:
                adj[key] = np.array(pg, dtype=np.float64).reshape(parent.shape)
    targets = tape.leaves() if wrt is None else list(wrt)
    if wrt is None and root.requires_grad and not root._recorded:
        targets.append(root)
    return {t: adj.get(id(t), np.zeros_like(t.data)) for t in targets}


def finite_difference_gradient(f, params, step: float = 1e-5) -> dict:
    """Central-difference gradient of scalar ``f()`` w.r.t. each array in ``params``.

    ``params`` (Tensors) are perturbed in place and restored; ``f`` takes no
    arguments and must read the current parameter values.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    grads = {}
    for p in params:
        arr = p.data
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            fp = float(f())
            flat[i] = orig - step
            fm = float(f())
            flat[i] = orig
            gflat[i] = (fp - fm) / (2.0 * step)
        grads[p] = g
    return grads
