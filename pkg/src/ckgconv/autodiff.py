"""A small reverse-mode autodiff engine on float64 numpy arrays.

Operations execute eagerly; when a :class:`Tape` is active and an input
requires gradients, the op appends a record (inputs, output, backward rule)
to the tape. ``backward`` walks the records in exact reverse execution
order, accumulating gradients into ``Tensor.grad``. The active-tape stack
is thread-local, so independent training runs may execute on separate
threads; sharing one tape across threads is not supported.
"""

from __future__ import annotations

import threading

import numpy as np
from scipy.special import erf, expit

from .errors import NonScalarLossError, ShapeMismatchError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_TAPES = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_TAPES, "stack", None)
    if stack is None:
        stack = _TAPES.stack = []
    return stack


class Tensor:
    """A float64 array plus an accumulated gradient."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the real work lives in the module-level functions.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


class Tape:
    """Ordered record of executed ops; context manager activates it."""

    def __init__(self):
        self._records: list[tuple[tuple[Tensor, ...], Tensor, object]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _tape_stack().pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self._records)


def _active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def const(x) -> Tensor:
    """A tensor that never requires gradients."""
    return _as_tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad = t.grad + g


def _record(inputs: tuple[Tensor, ...], out: Tensor, backward_fn) -> Tensor:
    tape = _active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape._records.append((inputs, out, backward_fn))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# Arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data + b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(g, b.data.shape))

    return _record((a, b), out, backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data - b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.data.shape))
        _accumulate(b, _unbroadcast(-g, b.data.shape))

    return _record((a, b), out, backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data * b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.data.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.data.shape))

    return _record((a, b), out, backward)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = Tensor(a.data / b.data)

    def backward(g):
        _accumulate(a, _unbroadcast(g / b.data, a.data.shape))
        _accumulate(b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _record((a, b), out, backward)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(-a.data)

    def backward(g):
        _accumulate(a, -g)

    return _record((a,), out, backward)


def matmul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeMismatchError(
            f"matmul needs [m,k] @ [k,n], got {a.data.shape} @ {b.data.shape}"
        )
    out = Tensor(a.data @ b.data)

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _record((a, b), out, backward)


def fc(x, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Fully-connected layer ``x @ w.T + b`` with ``w`` shaped [out, in]."""
    x, w = _as_tensor(x), _as_tensor(w)
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[1]:
        raise ShapeMismatchError(
            f"fc needs x [m,in] and w [out,in], got {x.data.shape} and {w.data.shape}"
        )
    y = x.data @ w.data.T
    if b is not None:
        if b.data.shape != (w.data.shape[0],):
            raise ShapeMismatchError(
                f"fc bias shape {b.data.shape} does not match out dim {w.data.shape[0]}"
            )
        y = y + b.data
    out = Tensor(y)
    inputs = (x, w) if b is None else (x, w, b)

    def backward(g):
        _accumulate(x, g @ w.data)
        _accumulate(w, g.T @ x.data)
        if b is not None:
            _accumulate(b, g.sum(axis=0))

    return _record(inputs, out, backward)


# ---------------------------------------------------------------------------
# Reductions and shape ops
# ---------------------------------------------------------------------------

def sum_(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(x, np.broadcast_to(gg, x.data.shape))

    return _record((x,), out, backward)


def mean_(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    out = Tensor(x.data.mean(axis=axis, keepdims=keepdims))

    def backward(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        _accumulate(x, np.broadcast_to(gg, x.data.shape) / count)

    return _record((x,), out, backward)


def gather(x, index: np.ndarray) -> Tensor:
    """Select rows ``x[index]``; backward scatter-adds into the source."""
    x = _as_tensor(x)
    index = np.asarray(index, dtype=np.int64)
    out = Tensor(x.data[index])

    def backward(g):
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            np.add.at(acc, index, g)
            _accumulate(x, acc)

    return _record((x,), out, backward)


def segment_sum(x, segment_ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``x`` grouped by ``segment_ids`` into ``num_segments`` rows."""
    x = _as_tensor(x)
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.shape[0] != x.data.shape[0]:
        raise ShapeMismatchError(
            f"segment_sum got {segment_ids.shape[0]} ids for {x.data.shape[0]} rows"
        )
    acc = np.zeros((num_segments,) + x.data.shape[1:], dtype=np.float64)
    np.add.at(acc, segment_ids, x.data)
    out = Tensor(acc)

    def backward(g):
        _accumulate(x, g[segment_ids])

    return _record((x,), out, backward)


# ---------------------------------------------------------------------------
# Pointwise nonlinearities
# ---------------------------------------------------------------------------

def exp_(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.exp(x.data))

    def backward(g):
        _accumulate(x, g * out.data)

    return _record((x,), out, backward)


def log_(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.log(x.data))

    def backward(g):
        _accumulate(x, g / x.data)

    return _record((x,), out, backward)


def sqrt_(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.sqrt(x.data))

    def backward(g):
        _accumulate(x, g * 0.5 / out.data)

    return _record((x,), out, backward)


def clip_(x, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through only inside [lo, hi]."""
    x = _as_tensor(x)
    out = Tensor(np.clip(x.data, lo, hi))

    def backward(g):
        mask = (x.data >= lo) & (x.data <= hi)
        _accumulate(x, g * mask)

    return _record((x,), out, backward)


def relu(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def backward(g):
        _accumulate(x, g * (x.data > 0.0))

    return _record((x,), out, backward)


def gelu(x) -> Tensor:
    """Gaussian error linear unit, exact form ``x * Phi(x)``."""
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / _SQRT2))
    out = Tensor(x.data * cdf)

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        _accumulate(x, g * (cdf + x.data * pdf))

    return _record((x,), out, backward)


def softplus(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(np.logaddexp(0.0, x.data))

    def backward(g):
        _accumulate(x, g * expit(x.data))

    return _record((x,), out, backward)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    out = Tensor(expit(x.data))

    def backward(g):
        _accumulate(x, g * out.data * (1.0 - out.data))

    return _record((x,), out, backward)


ACTIVATIONS = {"gelu": gelu, "relu": relu, "softplus": softplus}


def dropout(x, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity when ``p == 0`` or not training."""
    x = _as_tensor(x)
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout with p > 0 needs an rng")
    mask = (rng.random(x.data.shape) >= p) / (1.0 - p)
    out = Tensor(x.data * mask)

    def backward(g):
        _accumulate(x, g * mask)

    return _record((x,), out, backward)


# ---------------------------------------------------------------------------
# Normalization layers
# ---------------------------------------------------------------------------

class BatchNorm:
    """Per-channel standardization over the row axis with a learned affine.

    In training mode the batch statistics (biased variance) are used and
    running estimates are updated with the given momentum; in eval mode the
    running estimates are used. ``update_stats=False`` makes training-mode
    calls side-effect free (needed by finite-difference checks).
    """

    def __init__(self, dim: int, name: str, eps: float = 1e-5, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(dim), f"{name}.gamma")
        self.beta = Parameter(np.zeros(dim), f"{name}.beta")
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def __call__(self, x: Tensor, training: bool, update_stats: bool = True) -> Tensor:
        if training:
            mu = mean_(x, axis=0)
            centered = sub(x, mu)
            var = mean_(mul(centered, centered), axis=0)
            if update_stats:
                m = self.momentum
                self.running_mean = (1 - m) * self.running_mean + m * mu.data
                self.running_var = (1 - m) * self.running_var + m * var.data
            xhat = div(centered, sqrt_(add(var, const(self.eps))))
        else:
            scale = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = mul(sub(x, const(self.running_mean)), const(scale))
        return add(mul(xhat, self.gamma), self.beta)


class LayerNorm:
    """Per-row standardization over the channel axis with a shared affine."""

    def __init__(self, dim: int, name: str, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Parameter(np.ones(dim), f"{name}.gamma")
        self.beta = Parameter(np.zeros(dim), f"{name}.beta")

    def parameters(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def normalized(self, x: Tensor) -> Tensor:
        """The standardized representation, before the affine."""
        mu = mean_(x, axis=1, keepdims=True)
        centered = sub(x, mu)
        var = mean_(mul(centered, centered), axis=1, keepdims=True)
        return div(centered, sqrt_(add(var, const(self.eps))))

    def __call__(self, x: Tensor, training: bool = True, update_stats: bool = True) -> Tensor:
        return add(mul(self.normalized(x), self.gamma), self.beta)


# ---------------------------------------------------------------------------
# Backward pass and checking
# ---------------------------------------------------------------------------

def backward(tape: Tape, loss: Tensor, parameters=None):
    """Propagate gradients from a scalar loss through the tape.

    When ``parameters`` is given, returns ``{name: gradient}`` with zeros
    for parameters the loss never touched.
    """
    if loss.data.size != 1:
        raise NonScalarLossError(f"loss must be scalar, got shape {loss.data.shape}")
    loss.grad = np.ones_like(loss.data)
    for inputs, out, backward_fn in reversed(tape._records):
        if out.grad is None:
            continue
        backward_fn(out.grad)
    if parameters is not None:
        return {
            p.name: (np.zeros_like(p.data) if p.grad is None else p.grad)
            for p in parameters
        }
    return None


def grad_check(f, x: Tensor, h: float = 1e-6) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` must be a pure function of ``x`` returning a scalar Tensor. The
    error per coordinate is ``|g_ad - g_fd| / max(1, |g_fd|)``.
    """
    x.requires_grad = True
    x.zero_grad()
    with Tape() as tape:
        loss = f(x)
    backward(tape, loss)
    g_ad = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    g_fd = np.zeros_like(x.data)
    flat = x.data.ravel()
    fd_flat = g_fd.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(f(x).data)
        flat[i] = orig - h
        lo = float(f(x).data)
        flat[i] = orig
        fd_flat[i] = (hi - lo) / (2.0 * h)

    rel = np.abs(g_ad - g_fd) / np.maximum(1.0, np.abs(g_fd))
    return float(rel.max()) if rel.size else 0.0


def grad_check_params(loss_fn, params: list[Parameter], h: float = 1e-6) -> float:
    """Finite-difference check of ``loss_fn()`` against every parameter."""
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = loss_fn()
    backward(tape, loss)

    worst = 0.0
    for p in params:
        g_ad = np.zeros_like(p.data) if p.grad is None else p.grad
        flat = p.data.ravel()
        g_flat = g_ad.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(loss_fn().data)
            flat[i] = orig - h
            lo = float(loss_fn().data)
            flat[i] = orig
            fd = (hi - lo) / (2.0 * h)
            err = abs(g_flat[i] - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst


def uniform_init(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    """Weights uniform in +-sqrt(1/fan_in), the package-wide FC init."""
    bound = np.sqrt(1.0 / in_dim)
    return rng.uniform(-bound, bound, size=(out_dim, in_dim))
