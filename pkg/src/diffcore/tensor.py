"""
Dense Tensors with Reverse-Mode Autodiff
=========================================
A Tensor wraps a numpy array. Every differentiable operation records its
parents and a backward function mapping the output gradient to one
gradient per parent. Graph orders the recorded nodes topologically and
runs the backward functions in reverse.

Gradient policy:
- backward() needs a scalar (shape ()) output
- leaf gradients ACCUMULATE across backward passes; call Tensor.zero_grad
  (or the optimizer's zero_grad) between steps
- gradients are plain arrays, so double-backward is not supported

Default dtype is float32 (training); float64 inputs stay float64
(gradient checks).
"""

import numpy as np

from src.errors import InvalidInputError, ShapeError

DEFAULT_DTYPE = np.float32


def _to_array(data, dtype=None) -> np.ndarray:
    if isinstance(data, np.ndarray) and dtype is None:
        if np.issubdtype(data.dtype, np.floating):
            return data
        return data.astype(DEFAULT_DTYPE)
    return np.asarray(data, dtype=dtype or DEFAULT_DTYPE)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad over the axes that broadcasting expanded to reach grad.shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def broadcast_shape(op: str, a: tuple, b: tuple) -> tuple:
    """Trailing-dimension broadcast, raising ShapeError naming the op."""
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a} and {b}") from None


class Tensor:
    """Node in a reverse-mode gradient graph."""

    def __init__(self, data, requires_grad: bool = False, dtype=None, name: str = None):
        self.data = _to_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    # -- construction ------------------------------------------------------

    @staticmethod
    def make(data: np.ndarray, parents: tuple, backward, op: str) -> "Tensor":
        """Create an op output. Parents and backward are kept only if some parent needs grad."""
        out = Tensor(data)
        out._op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def _lift(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.data.dtype))

    # -- properties --------------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def astype(self, dtype) -> "Tensor":
        """Differentiable dtype cast."""
        src = self.data.dtype
        return Tensor.make(self.data.astype(dtype), (self,), lambda g: (g.astype(src),), "astype")

    def zero_grad(self):
        self.grad = None

    def backward(self):
        Graph(self).backward()

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other):
        other = self._lift(other)
        broadcast_shape("add", self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape
        return Tensor.make(
            self.data + other.data, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)),
            "add",
        )

    def __radd__(self, other):
        return self._lift(other).__add__(self)

    def __sub__(self, other):
        other = self._lift(other)
        broadcast_shape("sub", self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape
        return Tensor.make(
            self.data - other.data, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)),
            "sub",
        )

    def __rsub__(self, other):
        return self._lift(other).__sub__(self)

    def __mul__(self, other):
        other = self._lift(other)
        broadcast_shape("mul", self.shape, other.shape)
        a, b = self.data, other.data
        return Tensor.make(
            a * b, (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
            "mul",
        )

    def __rmul__(self, other):
        return self._lift(other).__mul__(self)

    def __truediv__(self, other):
        other = self._lift(other)
        broadcast_shape("div", self.shape, other.shape)
        a, b = self.data, other.data
        return Tensor.make(
            a / b, (self, other),
            lambda g: (_unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)),
            "div",
        )

    def __rtruediv__(self, other):
        return self._lift(other).__truediv__(self)

    def __neg__(self):
        return Tensor.make(-self.data, (self,), lambda g: (-g,), "neg")

    def exp(self):
        out = np.exp(self.data)
        return Tensor.make(out, (self,), lambda g: (g * out,), "exp")

    def log(self):
        x = self.data
        return Tensor.make(np.log(x), (self,), lambda g: (g / x,), "log")

    def abs(self):
        x = self.data
        return Tensor.make(np.abs(x), (self,), lambda g: (g * np.sign(x),), "abs")

    def square(self):
        x = self.data
        return Tensor.make(x * x, (self,), lambda g: (2.0 * g * x,), "square")

    # -- matmul ------------------------------------------------------------

    def __matmul__(self, other):
        other = self._lift(other)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        broadcast_shape("matmul", a.shape[:-2], b.shape[:-2])

        def backward(g):
            ga = g @ np.swapaxes(b, -1, -2)
            gb = np.swapaxes(a, -1, -2) @ g
            return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

        return Tensor.make(a @ b, (self, other), backward, "matmul")

    # -- reductions --------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor.make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward, "sum")

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- movement ----------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError:
            raise ShapeError(f"reshape: cannot reshape {src} to {shape}") from None
        return Tensor.make(out, (self,), lambda g: (g.reshape(src),), "reshape")

    def flatten(self, start: int = 1):
        return self.reshape(self.shape[:start] + (-1,))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        if sorted(axes) != list(range(self.ndim)):
            raise ShapeError(f"transpose: invalid axes {axes} for shape {self.shape}")
        inverse = tuple(np.argsort(axes))
        return Tensor.make(self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),), "transpose")

    def __getitem__(self, key):
        if isinstance(key, Tensor):
            raise InvalidInputError("index with arrays, not Tensors")
        shape, dtype = self.shape, self.dtype

        def backward(g):
            full = np.zeros(shape, dtype=dtype)
            np.add.at(full, key, g)
            return (full,)

        return Tensor.make(self.data[key], (self,), backward, "index")


class Graph:
    """
    Topologically ordered record of the operations from the leaves to a
    scalar output. backward() visits every node exactly once, in reverse order.
    """

    def __init__(self, output: Tensor):
        self.output = output
        self.nodes = self._topological_order(output)

    @staticmethod
    def _topological_order(output: Tensor) -> list:
        # iterative DFS; deep encoders overflow the recursion limit otherwise
        order, visited = [], set()
        stack = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        return order

    def backward(self):
        out = self.output
        if out.shape != ():
            raise InvalidInputError(f"backward: output must be a scalar, got shape {out.shape}")
        if not out.requires_grad:
            raise InvalidInputError("backward: output does not depend on any tensor requiring grad")

        for node in self.nodes:
            if not node.is_leaf:
                node.grad = None
        out.grad = np.ones_like(out.data)

        for node in reversed(self.nodes):
            if node.is_leaf or node.grad is None:
                continue
            grads = node._backward(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if g.shape != parent.shape:
                    raise ShapeError(
                        f"{node._op} backward: gradient shape {g.shape} != input shape {parent.shape}"
                    )
                g = g.astype(parent.dtype, copy=False)
                if parent.grad is None:
                    parent.grad = np.array(g, copy=True)
                else:
                    parent.grad = parent.grad + g
