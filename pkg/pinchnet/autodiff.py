"""
Complex-valued reverse-mode differentiation.

Every value flowing through the model is a ``CTensor`` wrapping a complex128 numpy
array. Operations build a computation record on the fly; ``backward`` walks it in
reverse creation order and propagates adjoints using Wirtinger calculus.

Gradient convention: for a real loss L and a complex entry z = x + jy the stored
gradient is dL/dx + j dL/dy, which equals 2 dL/dz-bar. It points in the steepest
ascent direction, so descent is ``theta <- theta - lr * grad``. For an operation
with dout = A dz + B dz-bar the incoming adjoint g maps to g conj(A) + conj(g) B.
"""
import itertools
import logging
import threading
from contextlib import contextmanager

import numpy as np

from .exceptions import RecordError, ShapeError


logger = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01
SIGMOID_CLAMP = 30.0

_local = threading.local()
_sequence = itertools.count()


def grad_enabled():
    return getattr(_local, "enabled", True)


@contextmanager
def no_grad():
    """Disable recording for the current thread inside the block."""
    previous = grad_enabled()
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = previous


class Node:
    """One recorded operation: its inputs and the rule mapping an output adjoint
    to input adjoints."""

    __slots__ = ("op", "parents", "vjp", "seq")

    def __init__(self, op, parents, vjp):
        self.op = op
        self.parents = parents
        self.vjp = vjp
        self.seq = next(_sequence)


class CTensor:
    """Complex double-precision array taking part in the computation record.

    Leaves created with ``requires_grad=True`` receive gradients on ``backward``.
    A leaf flagged ``real=True`` stands for a real-valued variable and keeps only
    the real part of its gradient.
    """

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, real=False, name=None, _node=None):
        if _node is None:
            self.data = np.array(data, dtype=np.complex128)
        else:
            self.data = np.asarray(data, dtype=np.complex128)
        self.requires_grad = requires_grad
        self.real = real
        self.name = name
        self.node = _node
        self.grad = None

    @property
    def tracked(self):
        return self.requires_grad or self.node is not None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data.copy()

    def item(self):
        return self.data.item()

    def detach(self):
        return CTensor(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"CTensor(shape={self.shape}{label}, tracked={self.tracked})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def conj(self):
        return conj(self)


def as_tensor(value):
    if isinstance(value, CTensor):
        return value
    return CTensor(value)


def _unbroadcast(grad, shape):
    """Sum ``grad`` over the axes that broadcasting added to reach ``shape``."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _forward(op, fn, *arrays):
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return fn(*arrays)
    except ValueError as exc:
        shapes = ", ".join(str(a.shape) for a in arrays)
        raise ShapeError(f"{op}: incompatible operand shapes {shapes}") from exc


def _make(op, data, parents, vjp):
    for parent in parents:
        if parent.size == 0:
            raise ShapeError(f"{op}: empty operand of shape {parent.shape}")
    if grad_enabled() and any(p.tracked for p in parents):
        return CTensor(data, _node=Node(op, parents, vjp))
    return CTensor(data, _node=None)


def _safe(fn):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return fn()


# elementwise arithmetic


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _forward("add", np.add, a.data, b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make("add", out, (a, b), vjp)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _forward("sub", np.subtract, a.data, b.data)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make("sub", out, (a, b), vjp)


def neg(a):
    a = as_tensor(a)
    return _make("neg", -a.data, (a,), lambda g: (-g,))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _forward("mul", np.multiply, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(g * np.conj(b.data), a.shape),
            _unbroadcast(g * np.conj(a.data), b.shape),
        )

    return _make("mul", out, (a, b), vjp)


def scale(a, factor):
    """Multiply by a Python or numpy constant."""
    return mul(a, CTensor(factor))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = _forward("div", np.divide, a.data, b.data)

    def vjp(g):
        ga = _safe(lambda: g / np.conj(b.data))
        gb = _safe(lambda: -g * np.conj(out / b.data))
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("div", out, (a, b), vjp)


def reciprocal(a):
    a = as_tensor(a)
    out = _safe(lambda: 1.0 / a.data)
    return _make("reciprocal", out, (a,), lambda g: (-g * np.conj(out * out),))


def exp(a):
    a = as_tensor(a)
    out = _safe(lambda: np.exp(a.data))
    return _make("exp", out, (a,), lambda g: (g * np.conj(out),))


def log(a):
    a = as_tensor(a)
    out = _safe(lambda: np.log(a.data))
    return _make("log", out, (a,), lambda g: (_safe(lambda: g / np.conj(a.data)),))


def sqrt(a):
    """Principal square root; the adjoint at 0 is taken as 0."""
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def vjp(g):
        zero = out == 0
        denom = np.where(zero, 1.0, 2.0 * np.conj(out))
        return (np.where(zero, 0.0, g / denom),)

    return _make("sqrt", out, (a,), vjp)


def power(a, exponent):
    """``a ** exponent`` for a real constant exponent (intended for positive a)."""
    a = as_tensor(a)
    out = _safe(lambda: a.data**exponent)

    def vjp(g):
        slope = _safe(lambda: exponent * a.data ** (exponent - 1))
        return (g * np.conj(slope),)

    return _make("power", out, (a,), vjp)


def conj(a):
    a = as_tensor(a)
    return _make("conj", np.conj(a.data), (a,), lambda g: (np.conj(g),))


def real(a):
    a = as_tensor(a)
    out = a.data.real.astype(np.complex128)
    return _make("real", out, (a,), lambda g: (g.real.astype(np.complex128),))


def abs2(a):
    """Squared modulus, real-valued."""
    a = as_tensor(a)
    out = (a.data.real**2 + a.data.imag**2).astype(np.complex128)
    return _make("abs2", out, (a,), lambda g: (2.0 * g.real * a.data,))


def modulus(a):
    a = as_tensor(a)
    mag = np.abs(a.data)

    def vjp(g):
        phase = np.where(mag > 0, a.data / np.where(mag > 0, mag, 1.0), 0.0)
        return (g.real * phase,)

    return _make("modulus", mag.astype(np.complex128), (a,), vjp)


def norm(a, axis=-1, keepdims=False):
    """Euclidean norm along ``axis``, real-valued."""
    a = as_tensor(a)
    out = np.sqrt(np.sum(np.abs(a.data) ** 2, axis=axis, keepdims=True))

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g.real * a.data / safe, 0.0),)

    value = out if keepdims else np.squeeze(out, axis=axis)
    return _make("norm", value.astype(np.complex128), (a,), vjp)


# activations acting on real parts or split parts


def sigmoid(a):
    """Logistic function of Re(a), with the argument clamped to +-30."""
    a = as_tensor(a)
    x = a.data.real
    clipped = np.clip(x, -SIGMOID_CLAMP, SIGMOID_CLAMP)
    s = 1.0 / (1.0 + np.exp(-clipped))
    inside = np.abs(x) <= SIGMOID_CLAMP

    def vjp(g):
        return ((g.real * s * (1.0 - s) * inside).astype(np.complex128),)

    return _make("sigmoid", s.astype(np.complex128), (a,), vjp)


def softmax(a, axis=-1):
    """Softmax of Re(a) along ``axis``."""
    a = as_tensor(a)
    x = a.data.real
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        gr = g.real
        inner = np.sum(s * gr, axis=axis, keepdims=True)
        return ((s * (gr - inner)).astype(np.complex128),)

    return _make("softmax", s.astype(np.complex128), (a,), vjp)


def crelu(a):
    """Split ReLU: ReLU applied independently to real and imaginary parts."""
    a = as_tensor(a)
    re_pos = a.data.real > 0
    im_pos = a.data.imag > 0
    out = np.where(re_pos, a.data.real, 0.0) + 1j * np.where(im_pos, a.data.imag, 0.0)

    def vjp(g):
        return (np.where(re_pos, g.real, 0.0) + 1j * np.where(im_pos, g.imag, 0.0),)

    return _make("crelu", out, (a,), vjp)


def leaky_relu(a, slope=LEAKY_SLOPE):
    """LeakyReLU of Re(a), real-valued."""
    a = as_tensor(a)
    x = a.data.real
    positive = x > 0
    out = np.where(positive, x, slope * x)

    def vjp(g):
        return ((g.real * np.where(positive, 1.0, slope)).astype(np.complex128),)

    return _make("leaky_relu", out.astype(np.complex128), (a,), vjp)


def tanh(a):
    """tanh of Re(a), real-valued."""
    a = as_tensor(a)
    t = np.tanh(a.data.real)

    def vjp(g):
        return ((g.real * (1.0 - t * t)).astype(np.complex128),)

    return _make("tanh", t.astype(np.complex128), (a,), vjp)


def atan2(y, x):
    """Four-quadrant angle of the real parts, real-valued."""
    y, x = as_tensor(y), as_tensor(x)
    yr, xr = np.broadcast_arrays(y.data.real, x.data.real)
    out = np.arctan2(yr, xr)

    def vjp(g):
        r2 = xr * xr + yr * yr
        r2 = np.where(r2 > 0, r2, 1.0)
        gy = g.real * xr / r2
        gx = -g.real * yr / r2
        return (
            _unbroadcast(gy.astype(np.complex128), y.shape),
            _unbroadcast(gx.astype(np.complex128), x.shape),
        )

    return _make("atan2", out.astype(np.complex128), (y, x), vjp)


def where(mask, a, b):
    """Select ``a`` where the constant boolean ``mask`` holds, else ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    out = _forward("where", np.where, mask, a.data, b.data)

    def vjp(g):
        return (
            _unbroadcast(np.where(mask, g, 0.0), a.shape),
            _unbroadcast(np.where(mask, 0.0, g), b.shape),
        )

    return _make("where", out, (a, b), vjp)


# linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul: operands must be at least 2-D, got {a.shape} @ {b.shape}")
    out = _forward("matmul", np.matmul, a.data, b.data)

    def vjp(g):
        ga = g @ np.conj(np.swapaxes(b.data, -1, -2))
        gb = np.conj(np.swapaxes(a.data, -1, -2)) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make("matmul", out, (a, b), vjp)


def _parse_einsum(spec):
    if "->" not in spec or "." in spec:
        raise ShapeError(f"einsum: explicit output without ellipsis required, got {spec!r}")
    inputs, output = spec.replace(" ", "").split("->")
    operands = inputs.split(",")
    if len(operands) != 2:
        raise ShapeError(f"einsum: exactly two operands supported, got {spec!r}")
    for term in operands:
        if len(set(term)) != len(term):
            raise ShapeError(f"einsum: repeated index inside {term!r}")
    return operands[0], operands[1], output


def _einsum_adjoint(g, out_spec, other, other_spec, target_spec, target_shape):
    available = set(out_spec) | set(other_spec)
    kept = "".join(c for c in target_spec if c in available)
    grad = np.einsum(f"{out_spec},{other_spec}->{kept}", g, np.conj(other))
    if kept != target_spec:
        shape = [target_shape[i] if c in available else 1 for i, c in enumerate(target_spec)]
        grad = np.broadcast_to(grad.reshape(shape), target_shape).copy()
    return grad


def einsum(spec, a, b):
    """Two-operand Einstein summation, bilinear without conjugation."""
    a, b = as_tensor(a), as_tensor(b)
    sa, sb, so = _parse_einsum(spec)
    out = _forward("einsum", lambda x, y: np.einsum(spec, x, y), a.data, b.data)

    def vjp(g):
        return (
            _einsum_adjoint(g, so, b.data, sb, sa, a.shape),
            _einsum_adjoint(g, so, a.data, sa, sb, b.shape),
        )

    return _make("einsum", out, (a, b), vjp)


def inv(a):
    """Batched matrix inverse over the last two axes."""
    a = as_tensor(a)
    try:
        out = np.linalg.inv(a.data)
    except np.linalg.LinAlgError as exc:
        raise ShapeError(f"inv: singular matrix of shape {a.shape}") from exc

    def vjp(g):
        out_h = np.conj(np.swapaxes(out, -1, -2))
        return (-(out_h @ g @ out_h),)

    return _make("inv", out, (a,), vjp)


# shape manipulation


def transpose(a, axes=None):
    a = as_tensor(a)
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = _forward("transpose", lambda x: np.transpose(x, axes), a.data)
    return _make("transpose", out, (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a, axis1, axis2):
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return transpose(a, axes)


def hermitian(a):
    """Conjugate transpose of the last two axes."""
    return conj(swapaxes(a, -1, -2))


def reshape(a, shape):
    a = as_tensor(a)
    out = _forward("reshape", lambda x: np.reshape(x, shape), a.data)
    return _make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    out = _forward("concat", lambda *xs: np.concatenate(xs, axis=axis), *[t.data for t in tensors])
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make("concat", out, tuple(tensors), vjp)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out = _forward("stack", lambda *xs: np.stack(xs, axis=axis), *[t.data for t in tensors])

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make("stack", out, tuple(tensors), vjp)


def getitem(a, index):
    a = as_tensor(a)
    out = _forward("slice", lambda x: x[index], a.data)

    def vjp(g):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _make("slice", np.array(out), (a,), vjp)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make("sum", np.asarray(out), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


OPS = {
    "add": add,
    "sub": sub,
    "neg": neg,
    "scalar-mul": scale,
    "elementwise-mul": mul,
    "div": div,
    "matmul": matmul,
    "einsum": einsum,
    "inv": inv,
    "conjugate": conj,
    "transpose": transpose,
    "reshape": reshape,
    "concat": concat,
    "stack": stack,
    "slice": getitem,
    "sum": tsum,
    "mean": mean,
    "modulus": modulus,
    "modulus-squared": abs2,
    "real-part": real,
    "exponential": exp,
    "log": log,
    "reciprocal": reciprocal,
    "sqrt": sqrt,
    "power": power,
    "sigmoid-of-real": sigmoid,
    "softmax-of-real": softmax,
    "norm": norm,
    "crelu": crelu,
    "leaky-relu-of-real": leaky_relu,
    "tanh-of-real": tanh,
    "atan2": atan2,
    "where": where,
}


def apply(op_kind, *inputs, **options):
    """Dispatch an operation by name; see ``OPS`` for the registered kinds."""
    try:
        fn = OPS[op_kind]
    except KeyError:
        raise ShapeError(f"unknown operation {op_kind!r}") from None
    return fn(*inputs, **options)


class GradRecord:
    """The operations reachable from an output, in topological order."""

    def __init__(self, output):
        if output.node is None:
            raise RecordError("tensor carries no computation record")
        seen = {}
        stack_ = [output.node]
        while stack_:
            node = stack_.pop()
            if id(node) in seen:
                continue
            seen[id(node)] = node
            for parent in node.parents:
                if parent.node is not None and id(parent.node) not in seen:
                    stack_.append(parent.node)
        self.output = output
        self.nodes = sorted(seen.values(), key=lambda n: n.seq)

    def __len__(self):
        return len(self.nodes)

    def run(self, seed):
        """Propagate ``seed`` (the adjoint of the output) back to every leaf."""
        adjoints = {id(self.output.node): seed}
        leaves = {}
        for node in reversed(self.nodes):
            g = adjoints.pop(id(node), None)
            if g is None:
                continue
            for parent, grad in zip(node.parents, node.vjp(g)):
                if grad is None or not parent.tracked:
                    continue
                if parent.node is not None:
                    key = id(parent.node)
                else:
                    key = id(parent)
                    leaves[key] = parent
                if key in adjoints:
                    adjoints[key] = adjoints[key] + grad
                else:
                    adjoints[key] = np.array(grad, dtype=np.complex128)
        return {leaf: adjoints[key] for key, leaf in leaves.items()}


def backward(loss):
    """Populate ``.grad`` on every learnable leaf reachable from the real scalar ``loss``.

    Repeated calls on the same record overwrite rather than accumulate, so the
    result is idempotent. Returns a mapping leaf -> gradient.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    record = GradRecord(loss)
    grads = record.run(np.ones(loss.shape, dtype=np.complex128))
    result = {}
    for leaf, grad in grads.items():
        if not leaf.requires_grad:
            continue
        grad = grad.real.astype(np.complex128) if leaf.real else grad
        leaf.grad = grad
        result[leaf] = grad
    logger.debug(f"Backward over {len(record)} recorded operations reached {len(result)} leaves")
    return result


def grad_check(f, params, eps=1e-6):
    """Compare analytic gradients of ``f(params)`` with central differences.

    Real and imaginary parts are perturbed separately (imaginary parts are skipped
    for real leaves). Per parameter, the error is the largest absolute mismatch
    divided by the largest gradient magnitude; the worst value is returned.
    """
    params = list(params)
    if not params:
        return 0.0
    for p in params:
        p.grad = None
    loss = f(params)
    backward(loss)
    worst = 0.0
    with no_grad():
        for p in params:
            analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
            numeric = np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            steps = (1.0,) if p.real else (1.0, 1j)
            for i in range(flat.size):
                for step in steps:
                    original = flat[i]
                    flat[i] = original + eps * step
                    upper = f(params).data.real.item()
                    flat[i] = original - eps * step
                    lower = f(params).data.real.item()
                    flat[i] = original
                    slope = (upper - lower) / (2 * eps)
                    numeric.reshape(-1)[i] += slope * (1.0 if step == 1.0 else 1j)
            scale_ = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-12)
            worst = max(worst, float(np.max(np.abs(analytic - numeric)) / scale_))
    return worst
