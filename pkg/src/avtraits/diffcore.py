"""Reverse-mode differentiable numerics on numpy arrays.

A deliberately small op set: exactly the operations the audio-visual
network composes (dense and conv2d linear maps, relu/sigmoid, row-wise
softmax, global average pooling, channel concatenation, and elementwise
arithmetic).  Each op records an analytic backward closure on the output
node; ``Tensor.backward`` replays them in reverse topological order,
summing gradients across multiple uses of a node.  ``grad_check``
verifies any scalar-valued computation against central finite
differences.

Float dtype follows the inputs: float64 graphs for verification work,
float32 graphs for training.  Mixed python scalars adopt the tensor's
dtype so a graph never silently promotes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

__all__ = [
    "Tensor",
    "GradReport",
    "activation",
    "concat",
    "concat_channels",
    "conv2d",
    "dense",
    "grad_check",
    "global_average_pool",
    "matmul",
    "mean",
    "absolute",
    "relu",
    "reshape",
    "sigmoid",
    "slice_channels",
    "softmax_rows",
    "transpose",
]


def _as_float_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind != "f":
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """A node in a dynamically built computation graph.

    ``values`` is the forward result, ``grad`` (filled by ``backward``)
    has the same shape.  Leaves created with ``requires_grad=True`` are
    the trainable parameters; interior nodes inherit the flag from their
    parents so gradient flow stops exactly at constant leaves.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, values, requires_grad: bool = False):
        self.values = _as_float_array(values)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        return float(self.values)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Propagate gradients from this node to every reachable leaf."""
        if seed is None:
            if self.values.size != 1:
                raise ShapeError(
                    f"backward() without a seed needs a scalar output, got shape {self.shape}"
                )
            seed = np.ones_like(self.values)
        self.grad = np.asarray(seed, dtype=self.values.dtype).reshape(self.values.shape)
        for node in _toposort(self):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(_wrap(other, self), -1.0))

    def __rsub__(self, other):
        return add(_wrap(other, self), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, scalar):
        return mul(self, 1.0 / float(scalar))

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def _wrap(value, like: Tensor) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=like.values.dtype))


def _toposort(root: Tensor) -> list[Tensor]:
    """Nodes of the graph rooted at ``root``, output first."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, int]] = [(root, 0)]
    seen.add(id(root))
    while stack:
        node, idx = stack.pop()
        if idx < len(node._parents):
            stack.append((node, idx + 1))
            parent = node._parents[idx]
            if id(parent) not in seen:
                seen.add(id(parent))
                stack.append((parent, 0))
        else:
            order.append(node)
    order.reverse()
    return order


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    # Gradients sum across multiple uses of a node (standard reverse mode).
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.values)
    t.grad += g


def _node(values: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(values)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (the inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise arithmetic -------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    values = a.values + b.values

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.values.shape))
        _accumulate(b, _unbroadcast(g, b.values.shape))

    return _node(values, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a)
    values = a.values * b.values

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.values, a.values.shape))
        _accumulate(b, _unbroadcast(g * a.values, b.values.shape))

    return _node(values, (a, b), backward)


def absolute(x: Tensor) -> Tensor:
    """Elementwise |x| with subgradient 0 at 0."""
    sign = np.sign(x.values)

    def backward(g):
        _accumulate(x, g * sign)

    return _node(np.abs(x.values), (x,), backward)


# -- linear maps -------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    values = a.values @ b.values

    def backward(g):
        _accumulate(a, g @ b.values.T)
        _accumulate(b, a.values.T @ g)

    return _node(values, (a, b), backward)


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Affine map ``x @ w + b`` with ``b`` broadcast over rows."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"dense expects 2-D x and w, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense inner dimensions disagree: x {x.shape} vs w {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense bias must have shape ({w.shape[1]},), got {b.shape}")
    return add(matmul(x, w), b)


def transpose(x: Tensor) -> Tensor:
    if x.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D tensor, got {x.shape}")

    def backward(g):
        _accumulate(x, g.T)

    return _node(x.values.T.copy(), (x,), backward)


def reshape(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)

    def backward(g):
        _accumulate(x, g.reshape(x.values.shape))

    return _node(x.values.reshape(shape).copy(), (x,), backward)


# -- nonlinearities ----------------------------------------------------


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0

    def backward(g):
        _accumulate(x, g * mask)

    return _node(np.maximum(x.values, 0), (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    # Piecewise form avoids exp overflow for large negative inputs.
    v = x.values
    y = np.empty_like(v)
    pos = v >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    y[~pos] = ev / (1.0 + ev)

    def backward(g):
        _accumulate(x, g * y * (1.0 - y))

    return _node(y, (x,), backward)


def activation(x: Tensor, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ConfigError(f"unknown activation kind {kind!r}; expected 'relu' or 'sigmoid'")


def softmax_rows(m: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D matrix, stabilised by row-max subtraction."""
    if m.ndim != 2:
        raise ShapeError(f"softmax_rows expects a 2-D matrix, got {m.shape}")
    shifted = m.values - m.values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        _accumulate(m, y * (g - dot))

    return _node(y, (m,), backward)


# -- reductions --------------------------------------------------------


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        count = x.values.size

        def backward(g):
            _accumulate(x, np.broadcast_to(g / count, x.values.shape).copy())

        return _node(np.mean(x.values), (x,), backward)

    count = x.values.shape[axis]

    def backward_axis(g):
        _accumulate(x, np.broadcast_to(np.expand_dims(g, axis) / count, x.values.shape).copy())

    return _node(np.mean(x.values, axis=axis), (x,), backward_axis)


def global_average_pool(x: Tensor) -> Tensor:
    """Mean over the spatial axes of a (C,H,W) or (N,C,H,W) feature map."""
    if x.ndim == 3:
        axes = (1, 2)
    elif x.ndim == 4:
        axes = (2, 3)
    else:
        raise ShapeError(f"global_average_pool expects 3-D or 4-D input, got {x.shape}")
    h, w = x.values.shape[axes[0]], x.values.shape[axes[1]]
    if h * w < 1:
        raise ShapeError("global_average_pool needs at least one spatial position")
    count = h * w

    def backward(g):
        g_exp = np.expand_dims(np.expand_dims(g, -1), -1) / count
        _accumulate(x, np.broadcast_to(g_exp, x.values.shape).copy())

    return _node(x.values.mean(axis=axes), (x,), backward)


# -- concatenation and slicing ----------------------------------------


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat needs at least one part")
    values = np.concatenate([p.values for p in parts], axis=axis)
    sizes = [p.values.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(lo, hi)
            _accumulate(p, g[tuple(index)])

    return _node(values, tuple(parts), backward)


def concat_channels(parts: Sequence[Tensor]) -> Tensor:
    """Stack (C_i,H,W) or (N,C_i,H,W) maps along the channel axis."""
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_channels needs at least one part")
    ndim = parts[0].ndim
    if ndim not in (3, 4):
        raise ShapeError(f"concat_channels expects 3-D or 4-D maps, got {parts[0].shape}")
    spatial = parts[0].values.shape[-2:]
    for p in parts[1:]:
        if p.ndim != ndim or p.values.shape[-2:] != spatial:
            raise ShapeError(
                f"concat_channels spatial mismatch: {parts[0].shape} vs {p.shape}"
            )
        if ndim == 4 and p.values.shape[0] != parts[0].values.shape[0]:
            raise ShapeError("concat_channels batch mismatch")
    return concat(parts, axis=ndim - 3)


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    """Channel-axis slice of a (C,H,W) or (N,C,H,W) map."""
    if x.ndim not in (3, 4):
        raise ShapeError(f"slice_channels expects 3-D or 4-D input, got {x.shape}")
    axis = x.ndim - 3
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        if x.requires_grad:
            full = np.zeros_like(x.values)
            full[index] = g
            _accumulate(x, full)

    return _node(x.values[index].copy(), (x,), backward)


# -- convolution -------------------------------------------------------


def _as_pair(value, name: str, minimum: int) -> tuple[int, int]:
    if isinstance(value, (tuple, list)):
        pair = (int(value[0]), int(value[1]))
    else:
        pair = (int(value), int(value))
    if pair[0] < minimum or pair[1] < minimum:
        raise ConfigError(f"{name} must be >= {minimum}, got {value}")
    return pair


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor, stride=1, padding=0) -> Tensor:
    """2-D cross-correlation of a (C,H,W) or (N,C,H,W) input.

    ``kernels`` is (C_out, C_in, kh, kw) and ``bias`` (C_out,).  Output
    spatial extents follow floor((H + 2*pad - k) / stride) + 1 per axis.
    Implemented as im2col + one matmul; the backward pass scatters the
    column gradient back through the same window layout.
    """
    sh, sw = _as_pair(stride, "stride", 1)
    ph, pw = _as_pair(padding, "padding", 0)
    if kernels.ndim != 4:
        raise ShapeError(f"kernels must be 4-D (C_out,C_in,kh,kw), got {kernels.shape}")
    c_out, c_in, kh, kw = kernels.shape
    if bias.shape != (c_out,):
        raise ShapeError(f"bias must have shape ({c_out},), got {bias.shape}")

    batched = x.ndim == 4
    if x.ndim not in (3, 4):
        raise ShapeError(f"conv2d input must be 3-D or 4-D, got {x.shape}")
    xv = x.values if batched else x.values[None]
    n, c, h, w = xv.shape
    if c != c_in:
        raise ShapeError(f"input has {c} channels but kernels expect {c_in}")
    if kh > h + 2 * ph or kw > w + 2 * pw:
        raise ShapeError(
            f"kernel {kh}x{kw} larger than padded input {h + 2 * ph}x{w + 2 * pw}"
        )

    xp = np.pad(xv, ((0, 0), (0, 0), (ph, ph), (pw, pw))) if (ph or pw) else xv
    windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    _, _, ho, wo, _, _ = windows.shape
    cols = np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c_in * kh * kw
    )
    kmat = kernels.values.reshape(c_out, -1)
    out = cols @ kmat.T + bias.values
    out = np.ascontiguousarray(out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2))
    if not batched:
        out = out[0]

    def backward(g):
        g4 = g if batched else g[None]
        g_rows = np.ascontiguousarray(g4.transpose(0, 2, 3, 1)).reshape(n * ho * wo, c_out)
        if kernels.requires_grad:
            _accumulate(kernels, (g_rows.T @ cols).reshape(kernels.values.shape))
        if bias.requires_grad:
            _accumulate(bias, g_rows.sum(axis=0))
        if x.requires_grad:
            dcols = (g_rows @ kmat).reshape(n, ho, wo, c_in, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dxp = np.zeros((n, c, h + 2 * ph, w + 2 * pw), dtype=g4.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + sh * ho : sh, j : j + sw * wo : sw] += dcols[..., i, j]
            dx = dxp[:, :, ph : ph + h, pw : pw + w]
            _accumulate(x, dx if batched else dx[0])

    return _node(out, (x, kernels, bias), backward)


# -- gradient verification ---------------------------------------------


@dataclass
class GradReport:
    """Result of comparing analytic gradients against central differences."""

    eps: float
    tol: float
    max_rel_error: dict[str, float]
    passed: bool
    failures: list[str]

    def worst(self) -> tuple[str, float]:
        name = max(self.max_rel_error, key=self.max_rel_error.get)
        return name, self.max_rel_error[name]


def grad_check(
    fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    tol: float = 1e-4,
) -> GradReport:
    """Check analytic gradients of ``fn`` w.r.t. every entry of ``params``.

    ``fn`` must rebuild the (deterministic) forward graph from the
    current parameter values and return a scalar Tensor.  Per coordinate
    the numeric gradient is (f(p+eps) - f(p-eps)) / (2 eps); relative
    error uses a max(1, |analytic|) denominator so near-zero gradients
    do not inflate the ratio.
    """
    for p in params.values():
        p.grad = None
    out = fn()
    if out.values.size != 1:
        raise ShapeError(f"grad_check needs a scalar computation, got shape {out.shape}")
    out.backward()
    analytic = {
        name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.values))
        for name, p in params.items()
    }

    failures: list[str] = []
    max_errors: dict[str, float] = {}
    for name, p in params.items():
        worst = 0.0
        flat_analytic = analytic[name].reshape(-1)
        for i in range(p.values.size):
            original = p.values.flat[i]
            p.values.flat[i] = original + eps
            f_plus = float(fn().values)
            p.values.flat[i] = original - eps
            f_minus = float(fn().values)
            p.values.flat[i] = original
            numeric = (f_plus - f_minus) / (2.0 * eps)
            analytic_i = float(flat_analytic[i])
            if not (math.isfinite(analytic_i) and math.isfinite(numeric)):
                failures.append(
                    f"{name}[{i}]: non-finite gradient (analytic={analytic_i}, numeric={numeric})"
                )
                continue
            rel = abs(analytic_i - numeric) / max(1.0, abs(analytic_i))
            if rel > worst:
                worst = rel
        max_errors[name] = worst
    passed = not failures and all(err < tol for err in max_errors.values())
    return GradReport(eps=eps, tol=tol, max_rel_error=max_errors, passed=passed, failures=failures)
