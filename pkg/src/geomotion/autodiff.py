"""Reverse-mode automatic differentiation on dense float64 arrays.

A small define-by-run engine: every operation appends a node to a
:class:`Tape`, and :meth:`Tape.backward` replays the nodes in reverse
creation order (which is a topological order) applying each node's
vector-Jacobian product. The primitive set is exactly what the geometry
layers and the Conv1D/LSTM head need; fused ops (``conv1d``, ``lstm_step``,
``softmax_cross_entropy``) carry hand-derived backward rules.

Everything is float64. Tensors are plain numpy arrays; a tape and its
variables belong to one thread, while distinct tapes may run concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tape",
    "Variable",
    "AdamState",
    "adam_step",
    "grad_check",
    "apply_op",
    "OPS",
    "ARCCOS_EPS",
    "add",
    "sub",
    "mul",
    "div",
    "scalar_mul",
    "matmul",
    "sum_",
    "mean",
    "sin",
    "cos",
    "exp",
    "sqrt",
    "clamp",
    "arccos_safe",
    "frobenius_norm",
    "frobenius_inner",
    "reshape",
    "slice_",
    "concat",
    "relu",
    "linear",
    "conv1d",
    "maxpool1d",
    "lstm_step",
    "softmax_cross_entropy",
]

# Domain clamp for arccos: keeps the derivative finite at +-1, where the
# true derivative diverges (identical poses would otherwise yield NaN grads).
ARCCOS_EPS = 1e-7


def _as_array(value) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


class Variable:
    """A tape node: float64 array value plus a lazily allocated grad slot."""

    __slots__ = ("tape", "id", "value", "requires_grad", "name", "op",
                 "_parents", "_backward", "_grad")

    def __init__(self, tape, value, requires_grad=False, name=None,
                 op="leaf", parents=()):
        self.tape = tape
        self.value = _as_array(value)
        self.requires_grad = bool(requires_grad)
        self.name = name
        self.op = op
        self._parents = tuple(parents)
        self._backward = None
        self._grad = None
        self.id = tape._append(self)

    @property
    def grad(self) -> np.ndarray:
        if self._grad is None:
            return np.zeros_like(self.value)
        return self._grad

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def parent_ids(self):
        return tuple(p.id for p in self._parents)

    def __repr__(self):
        label = self.name or self.op
        return f"Variable(id={self.id}, op={label!r}, shape={self.value.shape})"

    # Operator sugar. Python scalars are wrapped as constants on this tape.
    def __add__(self, other):
        return add(self, self._coerce(other))

    def __radd__(self, other):
        return add(self._coerce(other), self)

    def __sub__(self, other):
        return sub(self, self._coerce(other))

    def __rsub__(self, other):
        return sub(self._coerce(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, self._coerce(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, 1.0 / float(other))
        return div(self, self._coerce(other))

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, self._coerce(other))

    def __getitem__(self, key):
        return slice_(self, key)

    def _coerce(self, other):
        if isinstance(other, Variable):
            return other
        return self.tape.constant(other)


class Tape:
    """Ordered record of one forward pass; replayed in reverse for grads."""

    __slots__ = ("_nodes",)

    def __init__(self):
        self._nodes: list[Variable] = []

    def _append(self, node) -> int:
        self._nodes.append(node)
        return len(self._nodes) - 1

    @property
    def nodes(self):
        return self._nodes

    def __len__(self):
        return len(self._nodes)

    def variable(self, value, requires_grad=False, name=None) -> Variable:
        arr = _as_array(value)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in leaf {name or 'variable'}")
        return Variable(self, arr, requires_grad=requires_grad, name=name)

    def constant(self, value, name=None) -> Variable:
        return self.variable(value, requires_grad=False, name=name)

    def backward(self, loss: Variable) -> None:
        """Accumulate d(loss)/d(node) into every grad-requiring ancestor."""
        if loss.tape is not self:
            raise ValueError("loss does not belong to this tape")
        if loss.value.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {loss.value.shape}")
        seed = np.ones_like(loss.value)
        loss._grad = seed if loss._grad is None else loss._grad + seed
        for node in reversed(self._nodes[: loss.id + 1]):
            if node._backward is None or node._grad is None:
                continue
            if not node.requires_grad:
                continue
            node._backward()


def _tape_of(*variables) -> Tape:
    tape = variables[0].tape
    for v in variables[1:]:
        if v.tape is not tape:
            raise ValueError("inputs recorded on different tapes")
    return tape


def _record(value, parents, backward, op) -> Variable:
    tape = _tape_of(*parents)
    needs = any(p.requires_grad for p in parents)
    node = Variable(tape, value, requires_grad=needs, op=op, parents=parents)
    if needs:
        node._backward = backward(node)
    return node


def _accumulate(var: Variable, contribution: np.ndarray) -> None:
    if not var.requires_grad:
        return
    if var._grad is None:
        var._grad = contribution
    else:
        var._grad = var._grad + contribution


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    squashed = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if squashed:
        grad = grad.sum(axis=squashed, keepdims=True)
    return grad


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _expand_reduced(grad, shape, axis, keepdims):
    """Inverse of a reduction: re-insert reduced axes and broadcast."""
    axes = _norm_axes(axis, len(shape))
    if not keepdims:
        for ax in sorted(axes):
            grad = np.expand_dims(grad, ax)
    return np.broadcast_to(grad, shape)


# ---------------------------------------------------------------------------
# Elementwise and reduction primitives
# ---------------------------------------------------------------------------

def _binary(op_name, a, b, forward, grad_a, grad_b):
    try:
        value = forward(a.value, b.value)
    except ValueError as exc:
        raise ValueError(
            f"{op_name}: incompatible shapes {a.shape} and {b.shape}") from exc

    def make_backward(out):
        def run():
            g = out._grad
            _accumulate(a, _unbroadcast(grad_a(g, a.value, b.value), a.shape))
            _accumulate(b, _unbroadcast(grad_b(g, a.value, b.value), b.shape))
        return run

    return _record(value, (a, b), make_backward, op_name)


def add(a: Variable, b: Variable) -> Variable:
    return _binary("add", a, b, np.add,
                   lambda g, av, bv: g,
                   lambda g, av, bv: g)


def sub(a: Variable, b: Variable) -> Variable:
    return _binary("sub", a, b, np.subtract,
                   lambda g, av, bv: g,
                   lambda g, av, bv: -g)


def mul(a: Variable, b: Variable) -> Variable:
    return _binary("mul", a, b, np.multiply,
                   lambda g, av, bv: g * bv,
                   lambda g, av, bv: g * av)


def div(a: Variable, b: Variable) -> Variable:
    return _binary("div", a, b, np.divide,
                   lambda g, av, bv: g / bv,
                   lambda g, av, bv: -g * av / (bv * bv))


def scalar_mul(a: Variable, c: float) -> Variable:
    c = float(c)

    def make_backward(out):
        def run():
            _accumulate(a, c * out._grad)
        return run

    return _record(c * a.value, (a,), make_backward, "scalar_mul")


def _unary(op_name, a, forward, derivative):
    value = forward(a.value)

    def make_backward(out):
        def run():
            _accumulate(a, out._grad * derivative(a.value, out.value))
        return run

    return _record(value, (a,), make_backward, op_name)


def sin(a: Variable) -> Variable:
    return _unary("sin", a, np.sin, lambda x, y: np.cos(x))


def cos(a: Variable) -> Variable:
    return _unary("cos", a, np.cos, lambda x, y: -np.sin(x))


def exp(a: Variable) -> Variable:
    return _unary("exp", a, np.exp, lambda x, y: y)


def sqrt(a: Variable) -> Variable:
    # Domain x > 0 for a finite derivative.
    return _unary("sqrt", a, np.sqrt, lambda x, y: 0.5 / y)


def relu(a: Variable) -> Variable:
    return _unary("relu", a, lambda x: np.maximum(x, 0.0),
                  lambda x, y: (x > 0).astype(np.float64))


def clamp(a: Variable, lo: float, hi: float) -> Variable:
    value = np.clip(a.value, lo, hi)

    def make_backward(out):
        def run():
            mask = (a.value > lo) & (a.value < hi)
            _accumulate(a, out._grad * mask)
        return run

    return _record(value, (a,), make_backward, "clamp")


def arccos_safe(a: Variable, eps: float = ARCCOS_EPS) -> Variable:
    """arccos with the argument clipped to [-1+eps, 1-eps].

    The derivative is evaluated at the clipped argument, so gradients stay
    finite (and nonzero) even for inner products that round to exactly 1.
    """
    t = np.clip(a.value, -1.0 + eps, 1.0 - eps)
    value = np.arccos(t)

    def make_backward(out):
        def run():
            _accumulate(a, out._grad * (-1.0 / np.sqrt(1.0 - t * t)))
        return run

    return _record(value, (a,), make_backward, "arccos_safe")


def sum_(a: Variable, axis=None, keepdims=False) -> Variable:
    value = a.value.sum(axis=axis, keepdims=keepdims)

    def make_backward(out):
        def run():
            _accumulate(a, _expand_reduced(out._grad, a.shape, axis, keepdims).copy())
        return run

    return _record(value, (a,), make_backward, "sum")


def mean(a: Variable, axis=None, keepdims=False) -> Variable:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if a.ndim else 1
    value = a.value.mean(axis=axis, keepdims=keepdims)

    def make_backward(out):
        def run():
            g = _expand_reduced(out._grad, a.shape, axis, keepdims)
            _accumulate(a, g / count)
        return run

    return _record(value, (a,), make_backward, "mean")


def frobenius_norm(a: Variable, axis=None) -> Variable:
    """sqrt of the sum of squares over ``axis`` (default: all axes)."""
    value = np.sqrt((a.value * a.value).sum(axis=axis))

    def make_backward(out):
        def run():
            g = _expand_reduced(out._grad, a.shape, axis, False)
            n = _expand_reduced(out.value, a.shape, axis, False)
            safe = np.where(n > 0.0, n, 1.0)
            _accumulate(a, np.where(n > 0.0, g * a.value / safe, 0.0))
        return run

    return _record(value, (a,), make_backward, "frobenius_norm")


def frobenius_inner(a: Variable, b: Variable) -> Variable:
    """Sum of the elementwise product over the last two axes.

    Leading axes broadcast, so a (F, J, 3) stack against a (J, 3) reference
    yields F inner products in one node.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(
            f"frobenius_inner: inputs must be at least 2-d, got {a.shape} and {b.shape}")
    try:
        value = (a.value * b.value).sum(axis=(-2, -1))
    except ValueError as exc:
        raise ValueError(
            f"frobenius_inner: incompatible shapes {a.shape} and {b.shape}") from exc

    def make_backward(out):
        def run():
            g = out._grad[..., None, None]
            _accumulate(a, _unbroadcast(g * b.value, a.shape))
            _accumulate(b, _unbroadcast(g * a.value, b.shape))
        return run

    return _record(value, (a, b), make_backward, "frobenius_inner")


# ---------------------------------------------------------------------------
# Structural primitives
# ---------------------------------------------------------------------------

def reshape(a: Variable, shape) -> Variable:
    shape = tuple(int(s) for s in shape)
    value = a.value.reshape(shape)

    def make_backward(out):
        def run():
            _accumulate(a, out._grad.reshape(a.shape))
        return run

    return _record(value, (a,), make_backward, "reshape")


def slice_(a: Variable, key) -> Variable:
    """Basic indexing (ints, slices, Ellipsis); no fancy index arrays."""
    value = a.value[key]

    def make_backward(out):
        def run():
            g = np.zeros_like(a.value)
            g[key] = out._grad
            _accumulate(a, g)
        return run

    return _record(np.array(value), (a,), make_backward, "slice")


def concat(parts, axis=0) -> Variable:
    parts = list(parts)
    if not parts:
        raise ValueError("concat: empty input list")
    value = np.concatenate([p.value for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]

    def make_backward(out):
        def run():
            offset = 0
            for p, size in zip(parts, sizes):
                idx = [slice(None)] * out.value.ndim
                idx[axis] = slice(offset, offset + size)
                _accumulate(p, out._grad[tuple(idx)])
                offset += size
        return run

    tape = _tape_of(*parts)
    needs = any(p.requires_grad for p in parts)
    node = Variable(tape, value, requires_grad=needs, op="concat", parents=parts)
    if needs:
        node._backward = make_backward(node)
    return node


def matmul(a: Variable, b: Variable) -> Variable:
    """Matrix product over the last two axes; leading axes broadcast."""
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(
            f"matmul: inputs must be at least 2-d, got {a.shape} and {b.shape}")
    try:
        value = np.matmul(a.value, b.value)
    except ValueError as exc:
        raise ValueError(
            f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc

    def make_backward(out):
        def run():
            g = out._grad
            ga = np.matmul(g, np.swapaxes(b.value, -1, -2))
            gb = np.matmul(np.swapaxes(a.value, -1, -2), g)
            _accumulate(a, _unbroadcast(ga, a.shape))
            _accumulate(b, _unbroadcast(gb, b.shape))
        return run

    return _record(value, (a, b), make_backward, "matmul")


# ---------------------------------------------------------------------------
# Network primitives
# ---------------------------------------------------------------------------

def linear(x: Variable, w: Variable, b: Variable) -> Variable:
    """x @ w + b with x of shape (..., d_in), w (d_in, d_out), b (d_out)."""
    if w.ndim != 2 or b.ndim != 1 or x.shape[-1] != w.shape[0] or w.shape[1] != b.shape[0]:
        raise ValueError(
            f"linear: incompatible shapes x={x.shape} w={w.shape} b={b.shape}")
    value = x.value @ w.value + b.value

    def make_backward(out):
        def run():
            g = out._grad
            g2 = g.reshape(-1, w.shape[1])
            x2 = x.value.reshape(-1, w.shape[0])
            _accumulate(x, (g @ w.value.T).reshape(x.shape))
            _accumulate(w, x2.T @ g2)
            _accumulate(b, g2.sum(axis=0))
        return run

    return _record(value, (x, w, b), make_backward, "linear")


def conv1d(x: Variable, w: Variable, b: Variable) -> Variable:
    """Temporal convolution with 'same' zero padding and stride 1.

    Shapes: x (B, T, C_in), w (C_out, C_in, K) with K odd, b (C_out)
    -> (B, T, C_out).
    """
    if x.ndim != 3 or w.ndim != 3 or b.ndim != 1:
        raise ValueError(
            f"conv1d: expected x (B,T,C), w (O,C,K), b (O); got "
            f"x={x.shape} w={w.shape} b={b.shape}")
    c_out, c_in, k = w.shape
    if k % 2 != 1:
        raise ValueError(f"conv1d: kernel size must be odd, got {k}")
    if x.shape[2] != c_in or b.shape[0] != c_out:
        raise ValueError(
            f"conv1d: incompatible shapes x={x.shape} w={w.shape} b={b.shape}")
    n_b, n_t, _ = x.shape
    pad = (k - 1) // 2
    xp = np.pad(x.value, ((0, 0), (pad, pad), (0, 0)))
    # Flattened windows let BLAS do the contraction.
    win = sliding_window_view(xp, k, axis=1).reshape(n_b * n_t, c_in * k)
    w_flat = w.value.reshape(c_out, c_in * k)
    value = (win @ w_flat.T).reshape(n_b, n_t, c_out) + b.value

    def make_backward(out):
        def run():
            g2 = out._grad.reshape(n_b * n_t, c_out)
            _accumulate(w, (g2.T @ win).reshape(w.shape))
            _accumulate(b, g2.sum(axis=0))
            gwin = (g2 @ w_flat).reshape(n_b, n_t, c_in, k)
            gxp = np.zeros_like(xp)
            for kk in range(k):
                gxp[:, kk:kk + n_t, :] += gwin[:, :, :, kk]
            _accumulate(x, gxp[:, pad:pad + n_t, :])
        return run

    return _record(value, (x, w, b), make_backward, "conv1d")


def maxpool1d(x: Variable, kernel: int = 2, stride: int = 2) -> Variable:
    """Max pooling over the temporal axis: (B, T, C) -> (B, T', C)
    with T' = (T - kernel) // stride + 1."""
    if x.ndim != 3:
        raise ValueError(f"maxpool1d: expected (B,T,C), got {x.shape}")
    n_b, n_t, n_c = x.shape
    if n_t < kernel:
        raise ValueError(
            f"maxpool1d: temporal length {n_t} shorter than kernel {kernel}")
    win = sliding_window_view(x.value, kernel, axis=1)[:, ::stride]  # (B,T',C,k)
    value = win.max(axis=-1)
    argmax = win.argmax(axis=-1)
    t_out = value.shape[1]

    def make_backward(out):
        def run():
            g = out._grad
            gx = np.zeros_like(x.value)
            b_idx, t_idx, c_idx = np.meshgrid(
                np.arange(n_b), np.arange(t_out), np.arange(n_c), indexing="ij")
            np.add.at(gx, (b_idx, t_idx * stride + argmax, c_idx), g)
            _accumulate(x, gx)
        return run

    return _record(value, (x,), make_backward, "maxpool1d")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def lstm_step(x: Variable, h_prev: Variable, c_prev: Variable,
              w_input: Variable, w_hidden: Variable, bias: Variable) -> Variable:
    """One LSTM cell step; returns hidden and cell state concatenated.

    Shapes: x (B, D), h_prev/c_prev (B, H), w_input (D, 4H),
    w_hidden (H, 4H), bias (4H). Gate order is input, forget, candidate,
    output. Output is (B, 2H): columns [:H] are the new hidden state and
    [H:] the new cell state.
    """
    n_h = h_prev.shape[-1]
    if (x.ndim != 2 or h_prev.ndim != 2 or c_prev.ndim != 2
            or w_input.shape != (x.shape[1], 4 * n_h)
            or w_hidden.shape != (n_h, 4 * n_h)
            or bias.shape != (4 * n_h,)
            or c_prev.shape != h_prev.shape):
        raise ValueError(
            "lstm_step: incompatible shapes "
            f"x={x.shape} h={h_prev.shape} c={c_prev.shape} "
            f"w_input={w_input.shape} w_hidden={w_hidden.shape} bias={bias.shape}")
    z = x.value @ w_input.value + h_prev.value @ w_hidden.value + bias.value
    gate_i = _sigmoid(z[:, :n_h])
    gate_f = _sigmoid(z[:, n_h:2 * n_h])
    cand = np.tanh(z[:, 2 * n_h:3 * n_h])
    gate_o = _sigmoid(z[:, 3 * n_h:])
    c_new = gate_f * c_prev.value + gate_i * cand
    tanh_c = np.tanh(c_new)
    h_new = gate_o * tanh_c
    value = np.concatenate([h_new, c_new], axis=1)

    def make_backward(out):
        def run():
            g = out._grad
            gh, gc_direct = g[:, :n_h], g[:, n_h:]
            gc = gc_direct + gh * gate_o * (1.0 - tanh_c * tanh_c)
            gz = np.concatenate([
                gc * cand * gate_i * (1.0 - gate_i),
                gc * c_prev.value * gate_f * (1.0 - gate_f),
                gc * gate_i * (1.0 - cand * cand),
                gh * tanh_c * gate_o * (1.0 - gate_o),
            ], axis=1)
            _accumulate(x, gz @ w_input.value.T)
            _accumulate(h_prev, gz @ w_hidden.value.T)
            _accumulate(c_prev, gc * gate_f)
            _accumulate(w_input, x.value.T @ gz)
            _accumulate(w_hidden, h_prev.value.T @ gz)
            _accumulate(bias, gz.sum(axis=0))
        return run

    return _record(value, (x, h_prev, c_prev, w_input, w_hidden, bias),
                   make_backward, "lstm_step")


def softmax_cross_entropy(logits: Variable, labels) -> Variable:
    """Mean cross-entropy between softmax(logits) and integer labels.

    logits (B, K), labels int array (B,) with values in [0, K).
    """
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(
            f"softmax_cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError("softmax_cross_entropy: label out of range")
    z = logits.value
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    lse = m[:, 0] + np.log(ez.sum(axis=1))
    n = z.shape[0]
    value = (lse - z[np.arange(n), labels]).mean()

    def make_backward(out):
        def run():
            p = ez / ez.sum(axis=1, keepdims=True)
            p[np.arange(n), labels] -= 1.0
            _accumulate(logits, out._grad * p / n)
        return run

    return _record(value, (logits,), make_backward, "softmax_cross_entropy")


OPS = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scalar_mul": scalar_mul,
    "matmul": matmul,
    "sum": sum_,
    "mean": mean,
    "sin": sin,
    "cos": cos,
    "exp": exp,
    "sqrt": sqrt,
    "clamp": clamp,
    "arccos_safe": arccos_safe,
    "frobenius_norm": frobenius_norm,
    "frobenius_inner": frobenius_inner,
    "reshape": reshape,
    "slice": slice_,
    "concat": concat,
    "relu": relu,
    "linear": linear,
    "conv1d": conv1d,
    "maxpool1d": maxpool1d,
    "lstm_step": lstm_step,
    "softmax_cross_entropy": softmax_cross_entropy,
}


def apply_op(op_kind: str, *inputs, **attrs) -> Variable:
    """Dispatch a primitive by name; unknown kinds raise with the valid set."""
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ValueError(
            f"unknown op kind {op_kind!r}; valid kinds: {sorted(OPS)}") from None
    return fn(*inputs, **attrs)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(f, params, h: float = 1e-6) -> float:
    """Compare tape gradients of ``f`` against central finite differences.

    ``f`` takes one Variable per entry of ``params`` (a list of arrays) and
    returns a scalar Variable. Returns the max over all parameter entries of
    ``|analytic - central| / max(1, |central|)``.
    """
    if h <= 0:
        raise ValueError("grad_check: step h must be positive")
    arrays = [_as_array(p).copy() for p in params]

    def evaluate(values):
        tape = Tape()
        out = f(*[tape.variable(v, requires_grad=True) for v in values])
        return tape, out

    tape, out = evaluate(arrays)
    if out.value.size != 1:
        raise ValueError("grad_check: f must return a scalar")
    if not np.isfinite(out.value):
        raise ValueError("grad_check: f is non-finite at the base point")
    leaves = [tape.nodes[i] for i in range(len(arrays))]
    tape.backward(out)
    analytic = [leaf.grad.reshape(-1).copy() for leaf in leaves]

    max_rel = 0.0
    for p_idx, arr in enumerate(arrays):
        flat = arr.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(evaluate(arrays)[1].value)
            flat[i] = orig - h
            f_minus = float(evaluate(arrays)[1].value)
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(
                    f"grad_check: non-finite f at probe (param {p_idx}, entry {i})")
            central = (f_plus - f_minus) / (2.0 * h)
            rel = abs(analytic[p_idx][i] - central) / max(1.0, abs(central))
            if rel > max_rel:
                max_rel = rel
    return max_rel


# ---------------------------------------------------------------------------
# Adam optimizer
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Per-parameter first/second moments plus the shared step counter."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: dict, lr: float, **kwargs) -> "AdamState":
        state = cls(lr=lr, **kwargs)
        for name, value in params.items():
            state.first_moment[name] = np.zeros_like(value)
            state.second_moment[name] = np.zeros_like(value)
        return state


def adam_step(state: AdamState, params: dict, grads: dict) -> None:
    """Standard Adam update with bias correction; mutates params in place."""
    if state.lr < 0:
        raise ValueError("adam_step: learning rate must be non-negative")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise ValueError(f"adam_step: non-finite gradient for parameter {name!r}")
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
