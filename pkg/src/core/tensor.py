"""Dense tensors with reverse-mode automatic differentiation.

Every value produced by a primitive is a `Node` holding a float64 numpy array,
references to the nodes it was computed from and a backward rule mapping its
own adjoint to adjoints for those parents. `backward()` walks the resulting
tape once in reverse topological order, summing contributions that reach a
node along several paths.

Broadcasting follows numpy; gradients are reduced back to operand shapes.

Example:
    >>> x = leaf([1.0, 2.0, 3.0], name="x")
    >>> y = (softmax(x) * softmax(x)).sum()
    >>> grads = backward(y)
    >>> grads[x].shape
    (3,)
"""

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import GradientError, ShapeError

# Lower bound applied to every argument of `log`.
LOG_CLAMP = 1e-10

ArrayLike = Union[np.ndarray, float, int, Sequence]
BackwardRule = Callable[[np.ndarray], tuple]


class Node:
    """
    A value on the gradient tape.

    Attributes:
        value: float64 array (treated as immutable; optimizers rebind it)
        parents: Nodes this value was computed from
        op: Name of the primitive that produced the node
        requires_grad: True if the node depends on a trainable leaf
        name: Optional label, set for parameters
        grad: Adjoint from the most recent backward() that reached this node
    """

    __array_ufunc__ = None  # ndarray <op> Node defers to the Node operators

    def __init__(
        self,
        value: ArrayLike,
        parents: tuple = (),
        backward: Optional[BackwardRule] = None,
        op: str = "leaf",
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.parents = parents
        self._backward = backward
        self.op = op
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None

    # -- introspection ------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        """
        Raises:
            ValueError: Unless the node holds exactly one element
        """
        if self.value.size != 1:
            raise ValueError(f"item() needs a single-element node, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def detach(self) -> "Node":
        """Same value, cut from the tape"""
        return Node(self.value)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Node(op={self.op!r}, shape={self.shape}{label})"

    # -- operator sugar -----------------------------------------------------

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __matmul__(self, other): return matmul(self, other)
    def __rmatmul__(self, other): return matmul(other, self)
    def __neg__(self): return neg(self)
    def __getitem__(self, index): return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False) -> "Node":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Node":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Node":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes) -> "Node":
        return transpose(self, axes if axes else None)

    @property
    def T(self) -> "Node":
        return swapaxes(self, -1, -2)


# ---------------------------------------------------------------------------
# Construction helpers
# ---------------------------------------------------------------------------

def leaf(value: ArrayLike, name: Optional[str] = None) -> Node:
    """Trainable leaf: backward() reports its gradient"""
    return Node(np.array(value, dtype=np.float64), requires_grad=True, name=name)


def constant(value: ArrayLike) -> Node:
    """Leaf that never receives a gradient"""
    return Node(value)


def as_node(value: Union[Node, ArrayLike]) -> Node:
    return value if isinstance(value, Node) else Node(value)


def _make(value: np.ndarray, parents: tuple, rule: BackwardRule, op: str) -> Node:
    return Node(
        value,
        parents=parents,
        backward=rule,
        op=op,
        requires_grad=any(p.requires_grad for p in parents),
    )


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape` after numpy broadcasting"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(op: str, a: Node, b: Node) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape, "not broadcastable") from None


# ---------------------------------------------------------------------------
# Elementwise binary primitives
# ---------------------------------------------------------------------------

def add(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("add", a, b)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.value + b.value, (a, b), rule, "add")


def sub(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("sub", a, b)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.value - b.value, (a, b), rule, "sub")


def mul(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("mul", a, b)

    def rule(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _make(a.value * b.value, (a, b), rule, "mul")


def div(a, b) -> Node:
    a, b = as_node(a), as_node(b)
    _broadcast_shape("div", a, b)
    out = a.value / b.value

    def rule(g):
        return (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * out / b.value, b.shape),
        )

    return _make(out, (a, b), rule, "div")


def neg(a) -> Node:
    a = as_node(a)
    return _make(-a.value, (a,), lambda g: (-g,), "neg")


# ---------------------------------------------------------------------------
# Linear algebra and shape primitives
# ---------------------------------------------------------------------------

def matmul(a, b) -> Node:
    """numpy matmul semantics, including 1-D operands and batch broadcasting"""
    a, b = as_node(a), as_node(b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul", a.shape, b.shape, "scalar operand")
    inner_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if a.shape[-1] != inner_b:
        raise ShapeError("matmul", a.shape, b.shape, "inner dimensions differ")
    try:
        out = np.matmul(a.value, b.value)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape, "batch dimensions differ") from None

    def rule(g):
        av = a.value[None, :] if a.ndim == 1 else a.value
        bv = b.value[:, None] if b.ndim == 1 else b.value
        if a.ndim == 1 and b.ndim == 1:
            g2 = np.reshape(g, (1, 1))
        elif a.ndim == 1:
            g2 = np.expand_dims(g, -2)
        elif b.ndim == 1:
            g2 = np.expand_dims(g, -1)
        else:
            g2 = g
        ga = _unbroadcast(np.matmul(g2, np.swapaxes(bv, -1, -2)), av.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(av, -1, -2), g2), bv.shape)
        return ga.reshape(a.shape), gb.reshape(b.shape)

    return _make(out, (a, b), rule, "matmul")


def _normalize_axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(ax % ndim for ax in axis))


def reduce_sum(a, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    axes = _normalize_axes(axis, a.ndim)

    def rule(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(a.value.sum(axis=axes, keepdims=keepdims), (a,), rule, "sum")


def reduce_mean(a, axis=None, keepdims: bool = False) -> Node:
    a = as_node(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return mul(reduce_sum(a, axis=axes, keepdims=keepdims), 1.0 / max(count, 1))


def broadcast_to(a, shape: tuple) -> Node:
    a = as_node(a)
    try:
        out = np.broadcast_to(a.value, shape).copy()
    except ValueError:
        raise ShapeError("broadcast_to", a.shape, tuple(shape)) from None
    return _make(out, (a,), lambda g: (_unbroadcast(g, a.shape),), "broadcast_to")


def reshape(a, shape: tuple) -> Node:
    a = as_node(a)
    try:
        out = a.value.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, tuple(shape), "sizes differ") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes: Optional[Iterable[int]] = None) -> Node:
    a = as_node(a)
    perm = tuple(range(a.ndim))[::-1] if axes is None else tuple(ax % a.ndim for ax in axes)
    if sorted(perm) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, perm, "axes are not a permutation")
    inverse = tuple(np.argsort(perm))
    return _make(np.transpose(a.value, perm), (a,), lambda g: (np.transpose(g, inverse),), "transpose")


def swapaxes(a, axis1: int, axis2: int) -> Node:
    a = as_node(a)
    perm = list(range(a.ndim))
    perm[axis1], perm[axis2] = perm[axis2], perm[axis1]
    return transpose(a, perm)


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(
        part is None or part is Ellipsis or isinstance(part, (int, np.integer, slice))
        for part in parts
    )


def getitem(a, index) -> Node:
    a = as_node(a)
    try:
        out = a.value[index]
    except IndexError as exc:
        raise ShapeError("getitem", a.shape, (), str(exc)) from None

    basic = _is_basic_index(index)

    def rule(g):
        full = np.zeros_like(a.value)
        if basic:
            full[index] += g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _make(np.array(out, dtype=np.float64), (a,), rule, "getitem")


def concat(nodes: Sequence, axis: int = -1) -> Node:
    nodes = tuple(as_node(n) for n in nodes)
    try:
        out = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        raise ShapeError("concat", nodes[0].shape, nodes[-1].shape) from None
    splits = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def rule(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, nodes, rule, "concat")


# ---------------------------------------------------------------------------
# Elementwise nonlinearities
# ---------------------------------------------------------------------------

def exp(a) -> Node:
    a = as_node(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Node:
    """Natural log with arguments clamped at LOG_CLAMP"""
    a = as_node(a)
    clipped = np.maximum(a.value, LOG_CLAMP)

    def rule(g):
        return (np.where(a.value > LOG_CLAMP, g / clipped, 0.0),)

    return _make(np.log(clipped), (a,), rule, "log")


def _stable_sigmoid(t: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(t))
    return np.where(t >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a, sharpness: float = 1.0, center: float = 0.0) -> Node:
    """1 / (1 + exp(-sharpness * (a - center)))"""
    a = as_node(a)
    out = _stable_sigmoid(sharpness * (a.value - center))

    def rule(g):
        return (g * sharpness * out * (1.0 - out),)

    return _make(out, (a,), rule, "sigmoid")


def relu(a) -> Node:
    a = as_node(a)
    return _make(np.maximum(a.value, 0.0), (a,), lambda g: (g * (a.value > 0),), "relu")


def ramp(a) -> Node:
    """g+ = max(g, 0)"""
    a = as_node(a)
    return _make(np.maximum(a.value, 0.0), (a,), lambda g: (g * (a.value > 0),), "ramp")


def floor_at(a, floor: float) -> Node:
    """max(a, floor), differentiable above the floor"""
    return add(ramp(sub(a, floor)), floor)


def square(a) -> Node:
    a = as_node(a)
    return _make(a.value * a.value, (a,), lambda g: (2.0 * a.value * g,), "square")


def sqrt(a) -> Node:
    a = as_node(a)
    out = np.sqrt(np.maximum(a.value, 0.0))

    def rule(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _make(out, (a,), rule, "sqrt")


def softmax(a, axis: int = -1) -> Node:
    a = as_node(a)
    shifted = a.value - a.value.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def rule(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), rule, "softmax")


# ---------------------------------------------------------------------------
# Reverse sweep
# ---------------------------------------------------------------------------

def _topological_order(root: Node) -> list:
    order: list = []
    visited: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(root: Node) -> dict:
    """
    Gradient of a scalar root with respect to every trainable leaf.

    Returns:
        Mapping leaf Node -> gradient array (same shape as the leaf).
        Leaves the root does not depend on are absent.

    Raises:
        GradientError: If the root is not a scalar
    """
    if root.size != 1:
        raise GradientError(f"backward() needs a scalar root, got shape {root.shape}")
    gradients: dict = {}
    if not root.requires_grad:
        return gradients

    adjoints = {id(root): np.ones_like(root.value)}
    for node in reversed(_topological_order(root)):
        g = adjoints.pop(id(node), None)
        if g is None:
            continue
        node.grad = g
        if not node.parents:
            gradients[node] = g
            continue
        for parent, pg in zip(node.parents, node._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            adjoints[key] = adjoints[key] + pg if key in adjoints else pg
    return gradients
