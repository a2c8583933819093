"""Dense float64 tensors with tape-based reverse-mode differentiation.

A :class:`Tape` owns every tensor created through it.  Leaves are made with
:meth:`Tape.param` (differentiable) or :meth:`Tape.constant`; every op appends
one record.  :meth:`Tape.backward` sweeps the records in reverse order.

Binary elementwise ops follow numpy broadcasting; the backward pass sums the
adjoint back down to each operand's shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from edgegnn.errors import ConfigError, ContractError, DimensionError, NumericError

ACTIVATIONS = ("relu", "leaky_relu", "elu", "swish", "softplus", "mish", "sigmoid")
LEAKY_SLOPE = 0.2


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softplus(x):
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def activation_value(name: str, x: np.ndarray) -> np.ndarray:
    """Evaluate an activation on a plain array (no tape)."""
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "leaky_relu":
        return np.where(x < 0, LEAKY_SLOPE * x, x)
    if name == "elu":
        return np.where(x < 0, np.expm1(np.minimum(x, 0.0)), x)
    if name == "swish":
        return x * _sigmoid(x)
    if name == "softplus":
        return _softplus(x)
    if name == "mish":
        return x * np.tanh(_softplus(x))
    if name == "sigmoid":
        return _sigmoid(x)
    raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")


def _activation_grad(name, x, y):
    if name == "relu":
        return (x > 0).astype(np.float64)
    if name == "leaky_relu":
        return np.where(x < 0, LEAKY_SLOPE, 1.0)
    if name == "elu":
        return np.where(x < 0, y + 1.0, 1.0)
    if name == "swish":
        s = _sigmoid(x)
        return s + x * s * (1.0 - s)
    if name == "softplus":
        return _sigmoid(x)
    if name == "mish":
        t = np.tanh(_softplus(x))
        return t + x * (1.0 - t * t) * _sigmoid(x)
    if name == "sigmoid":
        return y * (1.0 - y)
    raise ConfigError(f"unknown activation {name!r}")


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    nlead = g.ndim - len(shape)
    if nlead:
        g = g.sum(axis=tuple(range(nlead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(*shapes):
    try:
        return np.broadcast_shapes(*shapes)
    except ValueError as exc:
        raise DimensionError(f"shapes {shapes} are not broadcastable") from exc


# ---------------------------------------------------------------------------
# op table: name -> (forward(*arrays, **attrs) -> (out, ctx),
#                    backward(g, ctx, *arrays, **attrs) -> tuple of grads)


def _f_matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul needs operands with ndim >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} do not conform")
    _broadcast_shape(a.shape[:-2], b.shape[:-2])
    return a @ b, None


def _b_matmul(g, ctx, a, b):
    if b.ndim == 2 and a.shape[:-1] == g.shape[:-1]:
        gb = a.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
    else:
        gb = _unbroadcast(np.swapaxes(a, -1, -2) @ g, b.shape)
    if a.ndim == 2 and b.shape[:-2] and g.shape[:-2] == b.shape[:-2]:
        # constant left factor applied to a batch: fold the batch into columns
        gm = np.moveaxis(g, -2, 0).reshape(g.shape[-2], -1)
        bm = np.moveaxis(b, -2, 0).reshape(b.shape[-2], -1)
        ga = gm @ bm.T
    else:
        ga = _unbroadcast(g @ np.swapaxes(b, -1, -2), a.shape)
    return ga, gb


def _f_add(a, b):
    _broadcast_shape(a.shape, b.shape)
    return a + b, None


def _b_add(g, ctx, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _f_sub(a, b):
    _broadcast_shape(a.shape, b.shape)
    return a - b, None


def _b_sub(g, ctx, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _f_mul(a, b):
    _broadcast_shape(a.shape, b.shape)
    return a * b, None


def _b_mul(g, ctx, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _f_div(a, b):
    _broadcast_shape(a.shape, b.shape)
    return a / b, None


def _b_div(g, ctx, a, b):
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


def _f_scalar_mul(a, c):
    return a * c, None


def _b_scalar_mul(g, ctx, a, c):
    return (g * c,)


def _f_concat(*arrays, axis):
    ref = arrays[0]
    ax = axis % ref.ndim
    for arr in arrays[1:]:
        if arr.ndim != ref.ndim or any(
            arr.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != ax
        ):
            raise DimensionError(f"cannot concat shapes {[x.shape for x in arrays]} on axis {axis}")
    sizes = [arr.shape[ax] for arr in arrays]
    return np.concatenate(arrays, axis=ax), np.cumsum(sizes)[:-1]


def _b_concat(g, ctx, *arrays, axis):
    return tuple(np.split(g, ctx, axis=axis))


def _f_sum(a, axis=None, keepdims=False):
    return a.sum(axis=axis, keepdims=keepdims), None


def _expand_like(g, a, axis, keepdims):
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    elif axis is None and not keepdims:
        g = np.reshape(g, (1,) * a.ndim)
    return np.broadcast_to(g, a.shape)


def _b_sum(g, ctx, a, axis=None, keepdims=False):
    return (np.array(_expand_like(g, a, axis, keepdims)),)


def _f_mean(a, axis=None, keepdims=False):
    return a.mean(axis=axis, keepdims=keepdims), None


def _b_mean(g, ctx, a, axis=None, keepdims=False):
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return (np.array(_expand_like(g, a, axis, keepdims)) / count,)


def _f_max(a, axis, keepdims=False):
    idx = np.argmax(a, axis=axis)  # first index wins ties
    out = np.take_along_axis(a, np.expand_dims(idx, axis), axis=axis)
    if not keepdims:
        out = np.squeeze(out, axis=axis)
    return out, idx


def _b_max(g, ctx, a, axis, keepdims=False):
    ga = np.zeros_like(a)
    if keepdims:
        g = np.squeeze(g, axis=axis)
    np.put_along_axis(ga, np.expand_dims(ctx, axis), np.expand_dims(g, axis), axis=axis)
    return (ga,)


def _f_activation(a, name):
    return activation_value(name, a), None


def _b_activation(g, ctx, a, name):
    return (g * _activation_grad(name, a, activation_value(name, a)),)


def _f_log(a):
    if np.any(a <= 0):
        raise NumericError("log of a non-positive value")
    return np.log(a), None


def _b_log(g, ctx, a):
    return (g / a,)


def _f_exp(a):
    out = np.exp(a)
    return out, out


def _b_exp(g, ctx, a):
    return (g * ctx,)


def _f_sqrt(a):
    if np.any(a < 0):
        raise NumericError("sqrt of a negative value")
    out = np.sqrt(a)
    return out, out


def _b_sqrt(g, ctx, a):
    return (g * 0.5 / ctx,)


def _f_square(a):
    return a * a, None


def _b_square(g, ctx, a):
    return (2.0 * a * g,)


def _f_abs(a):
    return np.abs(a), None


def _b_abs(g, ctx, a):
    return (g * np.sign(a),)


def _f_neg(a):
    return -a, None


def _b_neg(g, ctx, a):
    return (-g,)


def _f_reshape(a, shape):
    try:
        return a.reshape(shape), None
    except ValueError as exc:
        raise DimensionError(str(exc)) from exc


def _b_reshape(g, ctx, a, shape):
    return (g.reshape(a.shape),)


def _f_transpose(a, axes):
    return np.transpose(a, axes), None


def _b_transpose(g, ctx, a, axes):
    return (np.transpose(g, np.argsort(axes)),)


def _f_take(a, indices, axis):
    idx = np.asarray(indices)
    if idx.size and (idx.min() < -a.shape[axis] or idx.max() >= a.shape[axis]):
        raise DimensionError(f"take index out of range for axis {axis} of {a.shape}")
    return np.take(a, idx, axis=axis), idx


def _b_take(g, ctx, a, indices, axis):
    ax = axis % a.ndim
    n_src = a.shape[ax]
    flat = ctx.reshape(-1) % n_src
    scatter = sp.csr_matrix(
        (np.ones(flat.size), (flat, np.arange(flat.size))), shape=(n_src, flat.size)
    )
    gm = np.moveaxis(g.reshape(g.shape[:ax] + (flat.size,) + g.shape[ax + ctx.ndim:]), ax, 0)
    rest = gm.shape[1:]
    out = scatter @ gm.reshape(flat.size, -1)
    return (np.moveaxis(np.asarray(out).reshape((n_src,) + rest), 0, ax),)


OPS: dict[str, tuple[Callable, Callable]] = {
    "matmul": (_f_matmul, _b_matmul),
    "add": (_f_add, _b_add),
    "sub": (_f_sub, _b_sub),
    "mul": (_f_mul, _b_mul),
    "div": (_f_div, _b_div),
    "scalar_mul": (_f_scalar_mul, _b_scalar_mul),
    "concat": (_f_concat, _b_concat),
    "sum": (_f_sum, _b_sum),
    "mean": (_f_mean, _b_mean),
    "max": (_f_max, _b_max),
    "activation": (_f_activation, _b_activation),
    "log": (_f_log, _b_log),
    "exp": (_f_exp, _b_exp),
    "sqrt": (_f_sqrt, _b_sqrt),
    "square": (_f_square, _b_square),
    "abs": (_f_abs, _b_abs),
    "neg": (_f_neg, _b_neg),
    "reshape": (_f_reshape, _b_reshape),
    "transpose": (_f_transpose, _b_transpose),
    "take": (_f_take, _b_take),
}


class Tensor:
    """A value recorded on a tape. Use the tape or the operators to build new ones."""

    __slots__ = ("data", "tape", "index")
    __array_priority__ = 100

    def __init__(self, data: np.ndarray, tape: "Tape", index: int):
        self.data = data
        self.tape = tape
        self.index = index

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def requires_grad(self) -> bool:
        return self.tape._requires[self.index]

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, index={self.index})"

    def _lift(self, other):
        if isinstance(other, Tensor):
            if other.tape is not self.tape:
                raise ContractError("tensors belong to different tapes")
            return other
        return self.tape.constant(other)

    def __add__(self, other):
        return self.tape.forward("add", self, self._lift(other))

    def __radd__(self, other):
        return self.tape.forward("add", self._lift(other), self)

    def __sub__(self, other):
        return self.tape.forward("sub", self, self._lift(other))

    def __rsub__(self, other):
        return self.tape.forward("sub", self._lift(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return self.tape.forward("scalar_mul", self, c=float(other))
        return self.tape.forward("mul", self, self._lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return self.tape.forward("scalar_mul", self, c=1.0 / float(other))
        return self.tape.forward("div", self, self._lift(other))

    def __rtruediv__(self, other):
        return self.tape.forward("div", self._lift(other), self)

    def __matmul__(self, other):
        return self.tape.forward("matmul", self, self._lift(other))

    def __rmatmul__(self, other):
        return self.tape.forward("matmul", self._lift(other), self)

    def __neg__(self):
        return self.tape.forward("neg", self)

    def sum(self, axis=None, keepdims=False):
        return self.tape.forward("sum", self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return self.tape.forward("mean", self, axis=axis, keepdims=keepdims)

    def max(self, axis, keepdims=False):
        return self.tape.forward("max", self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return self.tape.forward("reshape", self, shape=tuple(shape))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return self.tape.forward("transpose", self, axes=tuple(axes))

    def take(self, indices, axis):
        return self.tape.forward("take", self, indices=indices, axis=axis)


@dataclass
class _Record:
    op: str
    inputs: tuple[int, ...]
    attrs: dict
    ctx: object


class Gradients:
    """Adjoints produced by :meth:`Tape.backward`."""

    def __init__(self, tape: "Tape", adjoints: list):
        self._tape = tape
        self._adj = adjoints

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        g = self._adj[tensor.index]
        return np.zeros_like(tensor.data) if g is None else g

    def named(self) -> dict[str, np.ndarray]:
        """Gradients of every named parameter (zeros when unreachable from the loss)."""
        out = {}
        for name, idx in self._tape.names.items():
            g = self._adj[idx]
            out[name] = np.zeros_like(self._tape._values[idx]) if g is None else g
        return out


class Tape:
    """Single-owner record of a computation, replayed in reverse by :meth:`backward`."""

    def __init__(self, check_finite: bool = True):
        self.check_finite = check_finite
        self._values: list[np.ndarray] = []
        self._records: list[_Record | None] = []
        self._requires: list[bool] = []
        self.names: dict[str, int] = {}

    def __len__(self):
        return len(self._values)

    def _push(self, data, record, requires):
        self._values.append(data)
        self._records.append(record)
        self._requires.append(requires)
        return Tensor(data, self, len(self._values) - 1)

    def _check(self, data, what):
        if self.check_finite and not np.all(np.isfinite(data)):
            raise NumericError(f"non-finite value in {what}")

    def param(self, data, name: str | None = None) -> Tensor:
        data = np.array(data, dtype=np.float64)
        self._check(data, "parameter")
        t = self._push(data, None, True)
        if name is not None:
            if name in self.names:
                raise ContractError(f"parameter {name!r} already on tape")
            self.names[name] = t.index
        return t

    def constant(self, data) -> Tensor:
        data = np.asarray(data, dtype=np.float64)
        self._check(data, "constant")
        return self._push(data, None, False)

    def get(self, name: str) -> Tensor:
        idx = self.names[name]
        return Tensor(self._values[idx], self, idx)

    def forward(self, op: str, *inputs: Tensor, **attrs) -> Tensor:
        try:
            fwd, _ = OPS[op]
        except KeyError:
            raise ConfigError(f"unknown op {op!r}") from None
        for t in inputs:
            if t.tape is not self:
                raise ContractError("input tensor belongs to a different tape")
        out, ctx = fwd(*(t.data for t in inputs), **attrs)
        out = np.asarray(out, dtype=np.float64)
        self._check(out, f"output of {op}")
        requires = any(self._requires[t.index] for t in inputs)
        record = _Record(op, tuple(t.index for t in inputs), attrs, ctx) if requires else None
        return self._push(out, record, requires)

    def backward(self, loss: Tensor) -> Gradients:
        if loss.tape is not self:
            raise ContractError("loss belongs to a different tape")
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        adj: list[np.ndarray | None] = [None] * len(self._values)
        adj[loss.index] = np.ones_like(loss.data)
        for i in range(loss.index, -1, -1):
            rec = self._records[i]
            g = adj[i]
            if rec is None or g is None:
                continue
            _, bwd = OPS[rec.op]
            grads = bwd(g, rec.ctx, *(self._values[j] for j in rec.inputs), **rec.attrs)
            for j, gj in zip(rec.inputs, grads):
                if not self._requires[j] or gj is None:
                    continue
                adj[j] = gj if adj[j] is None else adj[j] + gj
        return Gradients(self, adj)


# functional spellings


def forward(tape: Tape, op: str, *inputs: Tensor, **attrs) -> Tensor:
    return tape.forward(op, *inputs, **attrs)


def backward(tape: Tape, loss: Tensor) -> Gradients:
    return tape.backward(loss)


def activation(name: str, x: Tensor) -> Tensor:
    if name not in ACTIVATIONS:
        raise ConfigError(f"unknown activation {name!r}; expected one of {ACTIVATIONS}")
    return x.tape.forward("activation", x, name=name)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    if len(tensors) == 1:
        return tensors[0]
    return tensors[0].tape.forward("concat", *tensors, axis=axis)


def log(x: Tensor) -> Tensor:
    return x.tape.forward("log", x)


def exp(x: Tensor) -> Tensor:
    return x.tape.forward("exp", x)


def sqrt(x: Tensor) -> Tensor:
    return x.tape.forward("sqrt", x)


def square(x: Tensor) -> Tensor:
    return x.tape.forward("square", x)


def absolute(x: Tensor) -> Tensor:
    return x.tape.forward("abs", x)


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState
) -> dict[str, np.ndarray]:
    """One bias-corrected Adam update. Returns new parameter arrays; ``state`` advances."""
    if state.lr < 0:
        raise ContractError("learning rate must be non-negative")
    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step
    out = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, param {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        out[name] = p - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return out


def finite_diff_gradient(f: Callable[[np.ndarray], float], x, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f`` at ``x``."""
    if h <= 0:
        raise ContractError("step h must be positive")
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(x))
        flat[i] = orig - h
        fm = float(f(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
