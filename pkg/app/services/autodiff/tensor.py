"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every learnable parameter and activation of the context encoders is a `Node`
wrapping a numpy array. Operations build an acyclic graph; calling
`backward()` on a scalar node accumulates gradients into every reachable node
that requires them.

Closed op set:
- matmul, add, sub, mul, transpose, reshape
- concat, stack, getitem (slices and row selection), gather
- tanh, sigmoid, exp, log, maximum-reduce, softmax, sum, mean

Graphs are single-threaded; build one per forward pass.
"""
import logging
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

DTYPE = np.float64

Tensor = np.ndarray


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(data, shape: Optional[Sequence[int]] = None) -> Tensor:
    """Convert data to a float64 array, optionally checking its shape."""
    array = np.asarray(data, dtype=DTYPE)
    if shape is not None and tuple(array.shape) != tuple(shape):
        raise ShapeError(f"Expected shape {tuple(shape)}, got {array.shape}")
    return array


class Node:
    """A value in the computation graph together with its gradient."""

    __slots__ = ("value", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(
        self,
        value,
        parents: Tuple["Node", ...] = (),
        op: str = "",
        requires_grad: bool = False,
        name: Optional[str] = None,
    ):
        self.value = as_tensor(value)
        self.grad: Optional[Tensor] = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name
        self.op = op
        self._parents = parents
        self._backward: Callable[[Tensor], None] = lambda g: None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def accumulate(self, grad: Tensor):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        self.grad += grad

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    def __getitem__(self, index):
        return getitem(self, index)

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
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        label = self.name or self.op or "const"
        return f"Node({label}, shape={self.shape})"


def parameter(value, name: str) -> Node:
    """Create a learnable leaf node."""
    return Node(as_tensor(value).copy(), requires_grad=True, name=name)


def constant(value) -> Node:
    return Node(value)


def _node(x) -> Node:
    return x if isinstance(x, Node) else Node(x)


def _unbroadcast(grad: Tensor, shape: Tuple[int, ...]) -> Tensor:
    """Sum a broadcast gradient back to the operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: Node, b: Node, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"Cannot {op} shapes {a.shape} and {b.shape}")


# Linear algebra

def matmul(a, b) -> Node:
    """Matrix product for 2-D and 1-D operands (vectors act as rows/columns)."""
    a, b = _node(a), _node(b)
    if a.value.ndim not in (1, 2) or b.value.ndim not in (1, 2):
        raise ShapeError(f"matmul expects 1-D or 2-D operands, got {a.shape} and {b.shape}")
    inner_a = a.shape[-1]
    inner_b = b.shape[0]
    if inner_a != inner_b:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")

    out = Node(a.value @ b.value, (a, b), "matmul")

    def _backward(g):
        a2 = a.value if a.value.ndim == 2 else a.value[None, :]
        b2 = b.value if b.value.ndim == 2 else b.value[:, None]
        g2 = g.reshape(a2.shape[0], b2.shape[1])
        a.accumulate((g2 @ b2.T).reshape(a.shape))
        b.accumulate((a2.T @ g2).reshape(b.shape))

    out._backward = _backward
    return out


def transpose(x) -> Node:
    x = _node(x)
    out = Node(x.value.T, (x,), "transpose")
    out._backward = lambda g: x.accumulate(g.T)
    return out


def reshape(x, shape: Sequence[int]) -> Node:
    x = _node(x)
    try:
        value = x.value.reshape(shape)
    except ValueError:
        raise ShapeError(f"Cannot reshape {x.shape} into {tuple(shape)}")
    out = Node(value, (x,), "reshape")
    out._backward = lambda g: x.accumulate(g.reshape(x.shape))
    return out


# Elementwise arithmetic

def add(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "add")
    out = Node(a.value + b.value, (a, b), "add")

    def _backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(g, b.shape))

    out._backward = _backward
    return out


def sub(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "subtract")
    out = Node(a.value - b.value, (a, b), "sub")

    def _backward(g):
        a.accumulate(_unbroadcast(g, a.shape))
        b.accumulate(_unbroadcast(-g, b.shape))

    out._backward = _backward
    return out


def mul(a, b) -> Node:
    a, b = _node(a), _node(b)
    _check_broadcast(a, b, "multiply")
    out = Node(a.value * b.value, (a, b), "mul")

    def _backward(g):
        a.accumulate(_unbroadcast(g * b.value, a.shape))
        b.accumulate(_unbroadcast(g * a.value, b.shape))

    out._backward = _backward
    return out


# Structural ops

def concat(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [_node(n) for n in nodes]
    if not nodes:
        raise ShapeError("concat needs at least one operand")
    try:
        value = np.concatenate([n.value for n in nodes], axis=axis)
    except ValueError:
        raise ShapeError(f"Cannot concat shapes {[n.shape for n in nodes]} on axis {axis}")
    out = Node(value, tuple(nodes), "concat")
    bounds = np.cumsum([n.shape[axis] for n in nodes])[:-1]

    def _backward(g):
        for node, piece in zip(nodes, np.split(g, bounds, axis=axis)):
            node.accumulate(piece)

    out._backward = _backward
    return out


def stack(nodes: Sequence, axis: int = 0) -> Node:
    nodes = [_node(n) for n in nodes]
    shapes = {n.shape for n in nodes}
    if len(shapes) != 1:
        raise ShapeError(f"Cannot stack shapes {sorted(shapes)}")
    out = Node(np.stack([n.value for n in nodes], axis=axis), tuple(nodes), "stack")

    def _backward(g):
        for i, node in enumerate(nodes):
            node.accumulate(np.take(g, i, axis=axis))

    out._backward = _backward
    return out


def getitem(x, index) -> Node:
    """Basic slicing or integer-array row selection."""
    x = _node(x)
    out = Node(x.value[index], (x,), "getitem")

    def _backward(g):
        full = np.zeros_like(x.value)
        np.add.at(full, index, g)
        x.accumulate(full)

    out._backward = _backward
    return out


def gather(table, indices) -> Node:
    """Embedding lookup: rows of `table` selected by integer `indices`."""
    table = _node(table)
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise ShapeError(
            f"gather indices out of range [0, {table.shape[0]}) for table {table.shape}"
        )
    return getitem(table, indices)


# Nonlinearities

def tanh(x) -> Node:
    x = _node(x)
    y = np.tanh(x.value)
    out = Node(y, (x,), "tanh")
    out._backward = lambda g: x.accumulate(g * (1.0 - y * y))
    return out


def sigmoid(x) -> Node:
    x = _node(x)
    y = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    out = Node(y, (x,), "sigmoid")
    out._backward = lambda g: x.accumulate(g * y * (1.0 - y))
    return out


def exp(x) -> Node:
    x = _node(x)
    y = np.exp(x.value)
    out = Node(y, (x,), "exp")
    out._backward = lambda g: x.accumulate(g * y)
    return out


def log(x, floor: float = 0.0) -> Node:
    """Natural logarithm of max(x, floor); clamped entries receive no gradient."""
    x = _node(x)
    clamped = np.maximum(x.value, floor)
    out = Node(np.log(clamped), (x,), "log")

    def _backward(g):
        active = x.value >= floor if floor > 0 else np.ones_like(x.value, dtype=bool)
        x.accumulate(np.where(active, g / clamped, 0.0))

    out._backward = _backward
    return out


# Reductions

def sum_(x, axis: Optional[int] = None) -> Node:
    x = _node(x)
    out = Node(x.value.sum(axis=axis), (x,), "sum")

    def _backward(g):
        if axis is None:
            x.accumulate(np.full_like(x.value, g))
        else:
            x.accumulate(np.broadcast_to(np.expand_dims(g, axis), x.shape).copy())

    out._backward = _backward
    return out


def mean(x, axis: Optional[int] = None) -> Node:
    x = _node(x)
    count = x.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis=axis), 1.0 / count)


def max_reduce(x, axis: int = 0) -> Node:
    """Maximum along an axis; the gradient flows to the first argmax only."""
    x = _node(x)
    if x.shape[axis] == 0:
        raise ShapeError(f"max_reduce over empty axis {axis} of shape {x.shape}")
    arg = np.argmax(x.value, axis=axis)
    out = Node(np.max(x.value, axis=axis), (x,), "max")

    def _backward(g):
        full = np.zeros_like(x.value)
        np.put_along_axis(full, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis=axis)
        x.accumulate(full)

    out._backward = _backward
    return out


def softmax(z) -> Node:
    """Softmax of a 1-D vector, computed after subtracting its maximum."""
    z = _node(z)
    if z.value.ndim != 1 or z.size < 1:
        raise ShapeError(f"softmax expects a non-empty vector, got shape {z.shape}")
    shifted = np.exp(z.value - z.value.max())
    y = shifted / shifted.sum()
    out = Node(y, (z,), "softmax")
    out._backward = lambda g: z.accumulate(y * (g - np.dot(g, y)))
    return out


# Graph traversal

def _topological_order(root: Node) -> List[Node]:
    order: List[Node] = []
    visited = set()
    stack_ = [(root, False)]
    while stack_:
        node, expanded = stack_.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited or not node.requires_grad:
            continue
        visited.add(id(node))
        stack_.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited and parent.requires_grad:
                stack_.append((parent, False))
    return order


def backward(loss: Node):
    """Reverse-mode accumulation of d(loss)/d(node) into every reachable node."""
    if loss.size != 1:
        raise ValueError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    loss.accumulate(np.ones_like(loss.value))
    for node in reversed(order):
        if node.grad is not None:
            node._backward(node.grad)


def zero_grads(nodes: Iterable[Node]):
    for node in nodes:
        node.zero_grad()


def is_finite(x: Union[Node, Tensor]) -> bool:
    value = x.value if isinstance(x, Node) else x
    return bool(np.all(np.isfinite(value)))
