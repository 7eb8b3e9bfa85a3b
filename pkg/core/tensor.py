"""
Dense float64 tensors with reverse-mode automatic differentiation.

A Tensor wraps a read-only numpy array. Every differentiable operation is a
Function subclass whose forward/backward work on raw arrays; Function.apply
records the creator on the output so GradTape can replay the graph in reverse
topological order.

Broadcasting is deliberately narrow: binary elementwise ops accept equal
shapes or a 0-d scalar operand. Anything else must be made explicit with
Tensor.expand_to.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import expit

from constants import LAYER_NORM_EPS
from errors import ContractError, DimensionError, DomainError, NumericError

logger = logging.getLogger(__name__)

Scalar = Union[int, float]

_grad_mode = threading.local()


def is_grad_enabled() -> bool:
    """Whether operations currently record a graph (per thread)."""
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block, e.g. for evaluation."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


def _check_finite(array: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{where} produced non-finite values")


def _readonly(array: Any) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    array.setflags(write=False)
    return array


def _reduce_to(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Collapse the gradient of a broadcast scalar back to its own shape."""
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement forward (arrays in, array out) and backward (gradient
    of the output in, one gradient per input out, None for non-differentiable
    inputs).
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError(f"{type(self).__name__} has no backward pass")

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
        """Run forward on the input data and wrap the result, recording the creator."""
        func = cls(*inputs)
        out = func.forward(*(t.data for t in inputs), **kwargs)
        _check_finite(out, cls.__name__)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        return Tensor._from_op(out, func if requires_grad else None, requires_grad)


class Tensor:
    """
    A dense n-dimensional float64 value with optional gradient tracking.

    The data buffer is immutable; optimizers and loaders replace it through
    assign(). grad accumulates during backward passes.
    """

    __array_priority__ = 100  # make numpy defer to Tensor's reflected operators

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=np.float64)
        _check_finite(array, "Tensor construction")
        self.data = _readonly(array)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.creator: Optional[Function] = None
        self.name = name

    @classmethod
    def _from_op(cls, array: np.ndarray, creator: Optional[Function], requires_grad: bool) -> "Tensor":
        out = cls.__new__(cls)
        out.data = _readonly(array)
        out.requires_grad = requires_grad
        out.grad = None
        out.creator = creator
        out.name = None
        return out

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self.creator is None

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Writable copy of the data."""
        return np.array(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # ------------------------------------------------------------------
    # Mutation (leaves only)
    # ------------------------------------------------------------------

    def assign(self, data: Any) -> None:
        """Replace the data of a leaf tensor with a same-shape array."""
        array = np.array(data, dtype=np.float64)
        if array.shape != self.shape:
            raise DimensionError(f"assign: shape {array.shape} does not match {self.shape}")
        _check_finite(array, "assign")
        self.data = _readonly(array)

    def zero_grad(self) -> None:
        self.grad = np.zeros(self.shape)

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = np.asarray(grad, dtype=np.float64).reshape(self.shape)
        self.grad = np.array(grad) if self.grad is None else self.grad + grad

    # ------------------------------------------------------------------
    # Autodiff
    # ------------------------------------------------------------------

    def backward(self) -> None:
        """
        Populate grad on every requires_grad leaf reachable from this scalar.

        Raises:
            ContractError: If the tensor is not a single-element value produced
                through recorded operations
        """
        if self.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that does not require grad")
        GradTape.record(self).replay(np.ones(self.shape))

    # ------------------------------------------------------------------
    # Operators
    # ------------------------------------------------------------------

    def __add__(self, other: Any) -> "Tensor":
        return Add.apply(self, as_tensor(other))

    def __radd__(self, other: Any) -> "Tensor":
        return Add.apply(as_tensor(other), self)

    def __sub__(self, other: Any) -> "Tensor":
        return Sub.apply(self, as_tensor(other))

    def __rsub__(self, other: Any) -> "Tensor":
        return Sub.apply(as_tensor(other), self)

    def __mul__(self, other: Any) -> "Tensor":
        return Mul.apply(self, as_tensor(other))

    def __rmul__(self, other: Any) -> "Tensor":
        return Mul.apply(as_tensor(other), self)

    def __truediv__(self, other: Any) -> "Tensor":
        return Div.apply(self, as_tensor(other))

    def __rtruediv__(self, other: Any) -> "Tensor":
        return Div.apply(as_tensor(other), self)

    def __neg__(self) -> "Tensor":
        return Neg.apply(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return MatMul.apply(self, as_tensor(other))

    def __getitem__(self, index: Any) -> "Tensor":
        return GetItem.apply(self, index=index)

    # ------------------------------------------------------------------
    # Methods
    # ------------------------------------------------------------------

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        return Mean.apply(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def transpose(self, *axes: int) -> "Tensor":
        return Transpose.apply(self, axes=tuple(axes) if axes else None)

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise DimensionError(f"T needs a matrix, got shape {self.shape}")
        return self.transpose(1, 0)

    def expand_to(self, shape: Sequence[int]) -> "Tensor":
        return ExpandTo.apply(self, shape=tuple(shape))

    def sigmoid(self) -> "Tensor":
        return Sigmoid.apply(self)

    def gelu(self) -> "Tensor":
        return Gelu.apply(self)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def sqrt(self) -> "Tensor":
        return Sqrt.apply(self)

    def clip(self, low: float, high: float) -> "Tensor":
        return Clip.apply(self, low=low, high=high)

    def softmax(self) -> "Tensor":
        return Softmax.apply(self)

    def layer_norm(self, eps: float = LAYER_NORM_EPS) -> "Tensor":
        return LayerNorm.apply(self, eps=eps)


def as_tensor(value: Any) -> Tensor:
    """Wrap numbers and arrays as constant tensors; tensors pass through."""
    return value if isinstance(value, Tensor) else Tensor(value)


class GradTape:
    """
    Ordered record of the differentiable operations that produced an output.

    Nodes are stored in topological order (inputs before outputs); replay walks
    them in reverse, visiting each recorded operation exactly once.
    """

    def __init__(self, nodes: List[Tensor]):
        self.nodes = nodes

    def __len__(self) -> int:
        return len(self.nodes)

    @classmethod
    def record(cls, output: Tensor) -> "GradTape":
        order: List[Tensor] = []
        visited = set()
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node.creator is not None:
                for parent in node.creator.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def replay(self, seed: np.ndarray) -> None:
        """Propagate the seed gradient from the last node back to the leaves."""
        if not self.nodes:
            return
        grads: Dict[int, np.ndarray] = {id(self.nodes[-1]): seed}
        for node in reversed(self.nodes):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node.creator is None:
                node._accumulate(grad)
                continue
            parent_grads = node.creator.backward(grad)
            for parent, parent_grad in zip(node.creator.inputs, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                _check_finite(parent_grad, f"{type(node.creator).__name__} backward")
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad


def backward(loss: Tensor, params: Optional[Dict[str, Tensor]] = None) -> Dict[str, np.ndarray]:
    """
    Run a backward pass and return the gradient map over parameters.

    Parameters that the loss does not reach end up with an all-zero gradient.

    Args:
        loss: Scalar tensor produced through recorded operations
        params: Named parameters whose gradients are reset and reported

    Returns:
        Mapping of parameter name to gradient array
    """
    params = params or {}
    for param in params.values():
        param.zero_grad()
    loss.backward()
    return {name: np.array(param.grad) for name, param in params.items()}


# ============================================================================
# Elementwise operations
# ============================================================================


def _binary_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape} "
                         "(only equal shapes or a scalar operand broadcast)")


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _binary_shape(a, b, "add")
        return a + b

    def backward(self, grad: np.ndarray):
        a, b = self.inputs
        return _reduce_to(grad, a.shape), _reduce_to(grad, b.shape)


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _binary_shape(a, b, "sub")
        return a - b

    def backward(self, grad: np.ndarray):
        a, b = self.inputs
        return _reduce_to(grad, a.shape), _reduce_to(-grad, b.shape)


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _binary_shape(a, b, "mul")
        return a * b

    def backward(self, grad: np.ndarray):
        a, b = self.inputs
        return _reduce_to(grad * b.data, a.shape), _reduce_to(grad * a.data, b.shape)


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _binary_shape(a, b, "div")
        if np.any(b == 0.0):
            raise DomainError("div: division by zero")
        return a / b

    def backward(self, grad: np.ndarray):
        a, b = self.inputs
        grad_a = grad / b.data
        grad_b = -grad * a.data / (b.data * b.data)
        return _reduce_to(grad_a, a.shape), _reduce_to(grad_b, b.shape)


class Neg(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        return -x

    def backward(self, grad: np.ndarray):
        return (-grad,)


class Sigmoid(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self.out = expit(x)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out * (1.0 - self.out),)


class Gelu(Function):
    """GELU, tanh approximation."""

    C = float(np.sqrt(2.0 / np.pi))
    K = 0.044715

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.t = np.tanh(self.C * (x + self.K * x ** 3))
        return 0.5 * x * (1.0 + self.t)

    def backward(self, grad: np.ndarray):
        x = self.inputs[0].data
        du = self.C * (1.0 + 3.0 * self.K * x * x)
        local = 0.5 * (1.0 + self.t) + 0.5 * x * (1.0 - self.t * self.t) * du
        return (grad * local,)


class Exp(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(over="ignore"):
            self.out = np.exp(x)
        return self.out

    def backward(self, grad: np.ndarray):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        if np.any(x <= 0.0):
            raise DomainError(f"log: non-positive input (min {float(np.min(x))!r})")
        return np.log(x)

    def backward(self, grad: np.ndarray):
        return (grad / self.inputs[0].data,)


class Sqrt(Function):
    def forward(self, x: np.ndarray) -> np.ndarray:
        if np.any(x < 0.0):
            raise DomainError(f"sqrt: negative input (min {float(np.min(x))!r})")
        self.out = np.sqrt(x)
        return self.out

    def backward(self, grad: np.ndarray):
        if np.any(self.out == 0.0):
            raise NumericError("sqrt backward: derivative undefined at 0")
        return (grad * 0.5 / self.out,)


class Clip(Function):
    """Clamp to [low, high]; gradient flows only where the input was inside."""

    def forward(self, x: np.ndarray, low: float, high: float) -> np.ndarray:
        self.inside = (x >= low) & (x <= high)
        return np.clip(x, low, high)

    def backward(self, grad: np.ndarray):
        return (grad * self.inside,)


# ============================================================================
# Linear algebra, reductions and normalizations
# ============================================================================


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        return a @ b

    def backward(self, grad: np.ndarray):
        a, b = self.inputs
        return grad @ b.data.T, a.data.T @ grad


def _check_axis(x: np.ndarray, axis: Optional[int], op: str) -> None:
    if axis is None:
        if x.size == 0:
            raise DimensionError(f"{op}: empty tensor")
        return
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"{op}: axis {axis} out of range for shape {x.shape}")
    if x.shape[axis] == 0:
        raise DimensionError(f"{op}: empty reduction axis {axis} in shape {x.shape}")


def _expand_reduced(grad: np.ndarray, shape: Tuple[int, ...], axis: Optional[int], keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        grad = np.expand_dims(grad, axis)
    return np.broadcast_to(grad, shape)


class Sum(Function):
    def forward(self, x: np.ndarray, axis: Optional[int] = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(x, axis, "sum")
        self.axis, self.keepdims = axis, keepdims
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, grad: np.ndarray):
        x = self.inputs[0]
        return (_expand_reduced(grad, x.shape, self.axis, self.keepdims),)


class Mean(Function):
    def forward(self, x: np.ndarray, axis: Optional[int] = None, keepdims: bool = False) -> np.ndarray:
        _check_axis(x, axis, "mean")
        self.axis, self.keepdims = axis, keepdims
        self.count = x.size if axis is None else x.shape[axis]
        return np.mean(x, axis=axis, keepdims=keepdims)

    def backward(self, grad: np.ndarray):
        x = self.inputs[0]
        return (_expand_reduced(grad / self.count, x.shape, self.axis, self.keepdims),)


class Softmax(Function):
    """Softmax over the last dimension."""

    def forward(self, x: np.ndarray) -> np.ndarray:
        _check_axis(x, -1 if x.ndim else None, "softmax")
        if x.ndim == 0:
            raise DimensionError("softmax: needs at least one dimension")
        shifted = x - np.max(x, axis=-1, keepdims=True)
        e = np.exp(shifted)
        self.out = e / np.sum(e, axis=-1, keepdims=True)
        return self.out

    def backward(self, grad: np.ndarray):
        s = self.out
        return (s * (grad - np.sum(grad * s, axis=-1, keepdims=True)),)


class LayerNorm(Function):
    """Normalize the last dimension to zero mean and unit variance (no affine part)."""

    def forward(self, x: np.ndarray, eps: float = LAYER_NORM_EPS) -> np.ndarray:
        if x.ndim == 0:
            raise DimensionError("layer_norm: needs at least one dimension")
        _check_axis(x, -1, "layer_norm")
        centered = x - np.mean(x, axis=-1, keepdims=True)
        var = np.mean(centered * centered, axis=-1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            self.inv = 1.0 / np.sqrt(var + eps)
            self.out = centered * self.inv
        return self.out

    def backward(self, grad: np.ndarray):
        y = self.out
        g_mean = np.mean(grad, axis=-1, keepdims=True)
        gy_mean = np.mean(grad * y, axis=-1, keepdims=True)
        return (self.inv * (grad - g_mean - y * gy_mean),)


# ============================================================================
# Shape operations
# ============================================================================


class Reshape(Function):
    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        try:
            return x.reshape(shape)
        except ValueError:
            raise DimensionError(f"reshape: cannot reshape {x.shape} into {shape}")

    def backward(self, grad: np.ndarray):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def forward(self, x: np.ndarray, axes: Optional[Tuple[int, ...]] = None) -> np.ndarray:
        self.axes = tuple(reversed(range(x.ndim))) if axes is None else axes
        if sorted(self.axes) != list(range(x.ndim)):
            raise DimensionError(f"transpose: axes {self.axes} invalid for shape {x.shape}")
        return np.transpose(x, self.axes)

    def backward(self, grad: np.ndarray):
        return (np.transpose(grad, np.argsort(self.axes)),)


class ExpandTo(Function):
    """Explicit broadcast along leading dimensions and size-1 dimensions."""

    def forward(self, x: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        lead = len(shape) - x.ndim
        if lead < 0 or any(s != 1 and s != t for s, t in zip(x.shape, shape[lead:])):
            raise DimensionError(f"expand_to: cannot expand {x.shape} to {shape}")
        self.lead = lead
        return np.broadcast_to(x, shape)

    def backward(self, grad: np.ndarray):
        x = self.inputs[0]
        if self.lead:
            grad = grad.sum(axis=tuple(range(self.lead)))
        axes = tuple(i for i, s in enumerate(x.shape) if s == 1 and grad.shape[i] != 1)
        if axes:
            grad = grad.sum(axis=axes, keepdims=True)
        return (grad.reshape(x.shape),)


class GetItem(Function):
    def forward(self, x: np.ndarray, index: Any) -> np.ndarray:
        self.index = index
        try:
            return np.array(x[index])
        except IndexError as e:
            raise DimensionError(f"getitem: {e}")

    def backward(self, grad: np.ndarray):
        full = np.zeros(self.inputs[0].shape)
        np.add.at(full, self.index, grad)
        return (full,)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int = 0) -> np.ndarray:
        try:
            out = np.concatenate(arrays, axis=axis)
        except ValueError as e:
            raise DimensionError(f"concat: {e}")
        self.axis = axis
        self.splits = np.cumsum([a.shape[axis] for a in arrays])[:-1]
        return out

    def backward(self, grad: np.ndarray):
        return tuple(np.split(grad, self.splits, axis=self.axis))


# ============================================================================
# Functional API
# ============================================================================


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m x k) and b (k x n)."""
    return MatMul.apply(as_tensor(a), as_tensor(b))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise ContractError("concat: no tensors given")
    return Concat.apply(*[as_tensor(t) for t in tensors], axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Stack equal-shape tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ContractError("stack: no tensors given")
    expanded = []
    for t in tensors:
        shape = list(t.shape)
        shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
        expanded.append(t.reshape(tuple(shape)))
    return concat(expanded, axis=axis)


ELEMENTWISE_OPS = {
    "add": lambda a, b: as_tensor(a) + b,
    "sub": lambda a, b: as_tensor(a) - b,
    "mul": lambda a, b: as_tensor(a) * b,
    "div": lambda a, b: as_tensor(a) / b,
    "sigmoid": lambda x: as_tensor(x).sigmoid(),
    "gelu": lambda x: as_tensor(x).gelu(),
    "exp": lambda x: as_tensor(x).exp(),
    "log": lambda x: as_tensor(x).log(),
    "sqrt": lambda x: as_tensor(x).sqrt(),
}

REDUCTION_OPS = {
    "sum": lambda x, **kw: as_tensor(x).sum(**kw),
    "mean": lambda x, **kw: as_tensor(x).mean(**kw),
    "softmax_lastdim": lambda x, **kw: as_tensor(x).softmax(),
    "layer_norm_lastdim": lambda x, **kw: as_tensor(x).layer_norm(**kw),
}


def elementwise(op: str, *args: Any) -> Tensor:
    """Apply a named elementwise operation (add, sub, mul, sigmoid, gelu, exp, log, ...)."""
    if op not in ELEMENTWISE_OPS:
        raise ContractError(f"unknown elementwise op {op!r}")
    return ELEMENTWISE_OPS[op](*args)


def reduction(op: str, x: Any, **kwargs: Any) -> Tensor:
    """Apply a named reduction (sum, mean, softmax_lastdim, layer_norm_lastdim)."""
    if op not in REDUCTION_OPS:
        raise ContractError(f"unknown reduction {op!r}")
    return REDUCTION_OPS[op](x, **kwargs)
