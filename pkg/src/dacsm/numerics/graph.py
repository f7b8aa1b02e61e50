"""Dynamic tape for reverse-mode differentiation over float64 arrays

Every operation applied to a :class:`Var` appends one :class:`Node` to the owning
:class:`Graph`. Nodes are stored in creation order, so the list is already a
topological order and :meth:`Graph.backward` only has to walk it in reverse.
"""

from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np
import numpy.typing as npt

Tensor = npt.NDArray[np.float64]
VectorJacobian = Callable[[Tensor], Sequence[Tensor | None]]


class NumericsError(Exception):
    """Base exception for the numerical kernel"""


class DimensionError(NumericsError):
    """Operand shapes are incompatible"""


class ParameterError(NumericsError):
    """A scalar parameter is outside its valid range"""


class ContractError(NumericsError):
    """A caller broke a precondition of the kernel"""


class DivergenceUndefinedError(NumericsError):
    """A divergence was requested outside the support of its reference distribution"""


class InsufficientSamplesError(NumericsError):
    """A statistic needs more samples than were provided"""


def as_tensor(value: Any) -> Tensor:  # noqa: ANN401
    """Copy ``value`` into a read-only float64 array

    :param Any value: array-like input
    :return: immutable float64 array
    """
    arr = np.array(value, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, slots=True)
class Node:
    """One recorded operation"""

    op: str
    inputs: tuple[int, ...]
    value: Tensor
    vjp: VectorJacobian | None
    name: str | None
    requires_grad: bool


class Graph:
    """Ordered record of the operations of one forward pass"""

    def __init__(self) -> None:
        """Initialize an empty tape"""
        self.nodes: list[Node] = []
        self.op_counts: Counter[str] = Counter()
        self._leaf_names: dict[str, int] = {}

    def _append(self, node: Node) -> "Var":
        self.nodes.append(node)
        self.op_counts[node.op] += 1
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value: Any, name: str | None = None) -> "Var":  # noqa: ANN401
        """Register a differentiable input

        :param Any value: array-like value of the leaf
        :param str | None name: unique key under which :meth:`backward` reports the gradient
        :return: handle to the new leaf
        :raise ContractError: if ``name`` is already taken
        """
        if name is None:
            name = f"leaf_{len(self.nodes)}"
        if name in self._leaf_names:
            err_msg = f"Duplicate leaf name: {name}"
            raise ContractError(err_msg)
        self._leaf_names[name] = len(self.nodes)
        return self._append(Node("leaf", (), as_tensor(value), None, name, True))

    def constant(self, value: Any) -> "Var":  # noqa: ANN401
        """Register a non-differentiable input

        :param Any value: array-like value
        :return: handle to the constant
        """
        return self._append(Node("constant", (), as_tensor(value), None, None, False))

    def record(
        self,
        op: str,
        inputs: Sequence["Var"],
        value: Any,  # noqa: ANN401
        vjp: VectorJacobian,
    ) -> "Var":
        """Append the result of an operation to the tape

        :param str op: operation kind, used for instrumentation
        :param Sequence[Var] inputs: operands, all owned by this graph
        :param Any value: computed output
        :param VectorJacobian vjp: maps the output cotangent to one cotangent per input
        :return: handle to the output node
        """
        for var in inputs:
            if var.graph is not self:
                err_msg = f"Operand of {op} belongs to a different graph"
                raise ContractError(err_msg)
        requires_grad = any(self.nodes[v.id].requires_grad for v in inputs)
        return self._append(
            Node(
                op,
                tuple(v.id for v in inputs),
                as_tensor(value),
                vjp if requires_grad else None,
                None,
                requires_grad,
            )
        )

    def leaves(self) -> dict[str, "Var"]:
        """Return every differentiable leaf keyed by name"""
        return {name: Var(self, node_id) for name, node_id in self._leaf_names.items()}

    def backward(self, root: "Var") -> dict[str, Tensor]:
        """Differentiate a scalar node with respect to every leaf

        :param Var root: scalar-valued node of this graph
        :return: gradient per leaf name; leaves the root does not depend on get zeros
        :raise ContractError: if ``root`` is not scalar or not owned by this graph
        """
        if root.graph is not self:
            err_msg = "Backward root belongs to a different graph"
            raise ContractError(err_msg)
        if root.value.size != 1:
            err_msg = f"Backward root must be scalar-valued, got shape {root.shape}"
            raise ContractError(err_msg)

        pending: dict[int, Tensor] = {root.id: np.ones_like(root.value)}
        leaf_grads: dict[int, Tensor] = {}
        for node_id in range(root.id, -1, -1):
            grad = pending.pop(node_id, None)
            node = self.nodes[node_id]
            if grad is None or not node.requires_grad:
                continue
            if node.vjp is None:
                leaf_grads[node_id] = grad
                continue
            for input_id, input_grad in zip(node.inputs, node.vjp(grad), strict=True):
                if input_grad is None or not self.nodes[input_id].requires_grad:
                    continue
                if input_id in pending:
                    pending[input_id] = pending[input_id] + input_grad
                else:
                    pending[input_id] = input_grad

        return {
            name: leaf_grads.get(node_id, np.zeros_like(self.nodes[node_id].value))
            for name, node_id in self._leaf_names.items()
        }


def backward(graph: Graph, root: "Var") -> dict[str, Tensor]:
    """Gradient of ``root`` with respect to every leaf of ``graph``

    :param Graph graph: tape holding the forward pass
    :param Var root: scalar-valued node
    :return: gradient per leaf name
    """
    return graph.backward(root)


def lift(value: "Var | Any", graph: Graph) -> "Var":  # noqa: ANN401
    """Return ``value`` as a node of ``graph``, registering plain arrays as constants"""
    if isinstance(value, Var):
        if value.graph is not graph:
            err_msg = "Cannot mix nodes from different graphs"
            raise ContractError(err_msg)
        return value
    return graph.constant(value)


def owning_graph(*values: "Var | Any") -> Graph:  # noqa: ANN401
    """Return the graph of the first node among ``values`` or a fresh one"""
    for value in values:
        if isinstance(value, Var):
            return value.graph
    return Graph()


def _unbroadcast(grad: Tensor, shape: tuple[int, ...]) -> Tensor:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: "Var", b: "Var") -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        err_msg = f"Cannot {op} shapes {a.shape} and {b.shape}"
        raise DimensionError(err_msg) from None


def add(a: "Var | Any", b: "Var | Any") -> "Var":  # noqa: ANN401
    """Elementwise sum with numpy broadcasting"""
    graph = owning_graph(a, b)
    a, b = lift(a, graph), lift(b, graph)
    _broadcast_shape("add", a, b)
    a_shape, b_shape = a.shape, b.shape
    return graph.record(
        "add",
        (a, b),
        a.value + b.value,
        lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
    )


def sub(a: "Var | Any", b: "Var | Any") -> "Var":  # noqa: ANN401
    """Elementwise difference with numpy broadcasting"""
    graph = owning_graph(a, b)
    a, b = lift(a, graph), lift(b, graph)
    _broadcast_shape("subtract", a, b)
    a_shape, b_shape = a.shape, b.shape
    return graph.record(
        "sub",
        (a, b),
        a.value - b.value,
        lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
    )


def mul(a: "Var | Any", b: "Var | Any") -> "Var":  # noqa: ANN401
    """Elementwise product with numpy broadcasting"""
    graph = owning_graph(a, b)
    a, b = lift(a, graph), lift(b, graph)
    _broadcast_shape("multiply", a, b)
    av, bv = a.value, b.value
    return graph.record(
        "mul",
        (a, b),
        av * bv,
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def div(a: "Var | Any", b: "Var | Any") -> "Var":  # noqa: ANN401
    """Elementwise quotient with numpy broadcasting"""
    graph = owning_graph(a, b)
    a, b = lift(a, graph), lift(b, graph)
    _broadcast_shape("divide", a, b)
    av, bv = a.value, b.value
    return graph.record(
        "div",
        (a, b),
        av / bv,
        lambda g: (
            _unbroadcast(g / bv, av.shape),
            _unbroadcast(-g * av / (bv * bv), bv.shape),
        ),
    )


def neg(a: "Var") -> "Var":
    """Elementwise negation"""
    return a.graph.record("neg", (a,), -a.value, lambda g: (-g,))


def matmul(a: "Var | Any", b: "Var | Any") -> "Var":  # noqa: ANN401
    """Matrix product of 1-D or 2-D operands

    :raise DimensionError: if the operands are not 1-D/2-D or inner dimensions differ
    """
    graph = owning_graph(a, b)
    a, b = lift(a, graph), lift(b, graph)
    if a.ndim not in (1, 2) or b.ndim not in (1, 2) or a.shape[-1] != b.shape[0]:
        err_msg = f"Cannot multiply shapes {a.shape} and {b.shape}"
        raise DimensionError(err_msg)
    av, bv = a.value, b.value

    def vjp(g: Tensor) -> tuple[Tensor, Tensor]:
        if av.ndim == 2 and bv.ndim == 2:
            return g @ bv.T, av.T @ g
        if av.ndim == 1 and bv.ndim == 2:
            return bv @ g, np.outer(av, g)
        if av.ndim == 2:
            return np.outer(g, bv), av.T @ g
        return g * bv, g * av

    return graph.record("matmul", (a, b), av @ bv, vjp)


def getitem(a: "Var", index: Any) -> "Var":  # noqa: ANN401
    """Basic or advanced indexing; gradients scatter-add back into the source"""
    shape = a.shape

    def vjp(g: Tensor) -> tuple[Tensor]:
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return a.graph.record("getitem", (a,), a.value[index], vjp)


def transpose(a: "Var") -> "Var":
    """Transpose of a 2-D node"""
    if a.ndim != 2:
        err_msg = f"Transpose expects a 2-D operand, got shape {a.shape}"
        raise DimensionError(err_msg)
    return a.graph.record("transpose", (a,), a.value.T, lambda g: (g.T,))


def reshape(a: "Var", shape: tuple[int, ...]) -> "Var":
    """Row-major reshape"""
    try:
        value = a.value.reshape(shape)
    except ValueError:
        err_msg = f"Cannot reshape {a.shape} into {shape}"
        raise DimensionError(err_msg) from None
    original = a.shape
    return a.graph.record("reshape", (a,), value, lambda g: (g.reshape(original),))


def reduce_sum(
    a: "Var", axis: int | None = None, keepdims: bool = False
) -> "Var":
    """Sum over one axis or over all elements"""
    shape = a.shape

    def vjp(g: Tensor) -> tuple[Tensor]:
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.array(np.broadcast_to(g, shape)),)

    return a.graph.record(
        "sum", (a,), a.value.sum(axis=axis, keepdims=keepdims), vjp
    )


def reduce_mean(
    a: "Var", axis: int | None = None, keepdims: bool = False
) -> "Var":
    """Arithmetic mean over one axis or over all elements"""
    count = a.size if axis is None else a.shape[axis]
    return mul(reduce_sum(a, axis, keepdims), 1.0 / count)


class Var:
    """Handle to a node of a :class:`Graph`"""

    __slots__ = ("graph", "id")
    # numpy operands defer to the reflected operators below
    __array_ufunc__ = None

    def __init__(self, graph: Graph, node_id: int) -> None:
        """Initialize handle

        :param Graph graph: owning tape
        :param int node_id: position of the node in the tape
        """
        self.graph = graph
        self.id = node_id

    @property
    def value(self) -> Tensor:
        """Forward value of the node"""
        return self.graph.nodes[self.id].value

    @property
    def shape(self) -> tuple[int, ...]:
        """Shape of the forward value"""
        return self.value.shape

    @property
    def ndim(self) -> int:
        """Number of dimensions of the forward value"""
        return self.value.ndim

    @property
    def size(self) -> int:
        """Number of elements of the forward value"""
        return self.value.size

    @property
    def T(self) -> "Var":  # noqa: N802
        """Transpose"""
        return transpose(self)

    def __repr__(self) -> str:
        """Short description with op kind and shape"""
        return f"Var({self.graph.nodes[self.id].op}, shape={self.shape})"

    def __add__(self, other: "Var | Any") -> "Var":  # noqa: ANN401
        return add(self, other)

    def __radd__(self, other: Any) -> "Var":  # noqa: ANN401
        return add(other, self)

    def __sub__(self, other: "Var | Any") -> "Var":  # noqa: ANN401
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Var":  # noqa: ANN401
        return sub(other, self)

    def __mul__(self, other: "Var | Any") -> "Var":  # noqa: ANN401
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Var":  # noqa: ANN401
        return mul(other, self)

    def __truediv__(self, other: "Var | Any") -> "Var":  # noqa: ANN401
        return div(self, other)

    def __neg__(self) -> "Var":
        return neg(self)

    def __matmul__(self, other: "Var | Any") -> "Var":  # noqa: ANN401
        return matmul(self, other)

    def __rmatmul__(self, other: Any) -> "Var":  # noqa: ANN401
        return matmul(other, self)

    def __getitem__(self, index: Any) -> "Var":  # noqa: ANN401
        return getitem(self, index)

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Var":
        """Sum over ``axis`` (all elements when ``None``)"""
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Var":
        """Mean over ``axis`` (all elements when ``None``)"""
        return reduce_mean(self, axis, keepdims)

    def reshape(self, *shape: int) -> "Var":
        """Row-major reshape"""
        return reshape(self, tuple(shape))
