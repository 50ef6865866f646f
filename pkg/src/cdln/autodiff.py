"""Dense tensors with reverse-mode automatic differentiation.

Every op below takes and returns :class:`Tensor` objects backed by float64
numpy arrays.  When gradient recording is on and at least one input requires a
gradient, the op stores its parents and a closure mapping the output adjoint to
the input adjoints.  :func:`backward` replays those closures in reverse
topological order.

Convolutions are cross-correlations (no kernel flip), the usual neural-network
convention.  A learned kernel absorbs the flip, so nothing is lost.
"""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.fft
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ContractError, DimensionError, HarnessError

logger = logging.getLogger(__name__)

DTYPE = np.float64
INIT_SCALE = 0.08

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = _parents
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = _backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __getitem__(self, idx):
        return index(self, idx)


class Parameter(Tensor):
    """A named leaf tensor whose gradient buffer always matches its value."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def init_uniform(name: str, shape, rng: np.random.Generator, scale: float = INIT_SCALE) -> Parameter:
    return Parameter(name, rng.uniform(-scale, scale, size=shape))


def zeros_param(name: str, shape) -> Parameter:
    return Parameter(name, np.zeros(shape))


def check_unique_names(params: Iterable[Parameter]) -> None:
    seen = set()
    for p in params:
        if p.name in seen:
            raise ContractError(f"duplicate parameter name {p.name!r}")
        seen.add(p.name)


def zero_grad(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward_fn)
    return Tensor(data)


# ---------------------------------------------------------------------------
# graph replay


def topological_order(loss: Tensor) -> list[Tensor]:
    """Nodes reachable from ``loss`` with every node after all of its inputs."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into the ``grad`` of every reachable leaf.

    Parameter gradients accumulate (call :func:`zero_grad` between steps), so the
    adjoint of ``l1 + l2`` equals the sum of separate passes over ``l1`` and ``l2``.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = topological_order(loss)
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in adjoint:
                adjoint[key] = adjoint[key] + pg
            else:
                adjoint[key] = pg


# ---------------------------------------------------------------------------
# elementwise and structural ops


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    return _make(a.data * c, (a,), lambda g: (g * c,))


def total(a: Tensor) -> Tensor:
    """Sum of all elements, as a 0-d tensor."""
    return _make(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def mean(a: Tensor) -> Tensor:
    n = a.size
    return _make(np.asarray(a.data.mean()), (a,), lambda g: (np.full(a.shape, g / n),))


def dot(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape or a.data.ndim != 1:
        raise DimensionError(f"dot needs equal 1-d shapes, got {a.shape} and {b.shape}")
    return _make(np.asarray(a.data @ b.data), (a, b), lambda g: (g * b.data, g * a.data))


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return _make(out, (a,), lambda g: (g.reshape(a.shape),))


def index(a: Tensor, idx) -> Tensor:
    out = a.data[idx]

    def back(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return (full,)

    return _make(np.array(out), (a,), back)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def stack_sum(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise sum of equally shaped tensors."""
    tensors = list(tensors)
    out = np.sum([t.data for t in tensors], axis=0)
    return _make(out, tuple(tensors), lambda g: tuple(g for _ in tensors))


def sum_rows(a: Tensor) -> Tensor:
    """Column sums of a 2-d tensor."""
    if a.data.ndim != 2:
        raise DimensionError(f"sum_rows needs a 2-d tensor, got shape {a.shape}")
    return _make(a.data.sum(axis=0), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def pad_tail(a: Tensor, n: int) -> Tensor:
    """Append ``n`` zeros to a 1-d tensor."""
    if n == 0:
        return a
    out = np.concatenate([a.data, np.zeros(n)])
    return _make(out, (a,), lambda g: (g[: a.shape[0]],))


def gather_rows(table: Tensor, indices, frozen_row: int | None = None) -> Tensor:
    """Rows of a 2-d table.

    ``frozen_row`` always reads as zeros and receives no gradient, whatever
    values the table stores there.
    """
    idx = np.asarray(indices, dtype=np.int64)
    rows = table.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise ContractError(f"row index out of range for table with {rows} rows")
    out = table.data[idx]
    if frozen_row is not None:
        out[idx == frozen_row] = 0.0

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, idx, g)
        if frozen_row is not None:
            full[frozen_row] = 0.0
        return (full,)

    return _make(out, (table,), back)


# ---------------------------------------------------------------------------
# layers


def linear_forward(W: Tensor, x: Tensor, b: Tensor | None = None) -> Tensor:
    """``W @ x + b`` for a matrix ``W`` (m x n) and vector ``x`` (n)."""
    if W.data.ndim != 2 or x.data.ndim != 1 or W.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot apply W{W.shape} to x{x.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise DimensionError(f"bias {b.shape} does not match W{W.shape}")
    out = W.data @ x.data
    if b is None:
        return _make(out, (W, x), lambda g: (np.outer(g, x.data), W.data.T @ g))
    out = out + b.data
    return _make(out, (W, x, b), lambda g: (np.outer(g, x.data), W.data.T @ g, g))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}


def activation_apply(kind: str, x: Tensor) -> Tensor:
    try:
        fn = ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}; expected one of {sorted(ACTIVATIONS)}") from None
    return fn(x)


def dropout_apply(x: Tensor, rate: float, training: bool, rng) -> Tensor:
    """Inverted dropout.  ``rng`` is a numpy Generator or an integer seed."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,))


# ---------------------------------------------------------------------------
# 1-d convolution and pooling

_FFT_THRESHOLD = 1 << 21


def _same_pad(total_pad: int) -> tuple[int, int]:
    left = total_pad // 2
    return left, total_pad - left


def conv_output_length(length: int, width: int, stride: int, padding: str) -> int:
    padded = length + (width - 1 if padding == "same" else 0)
    if width > padded:
        return 0
    return (padded - width) // stride + 1


def _corr_direct(xp: np.ndarray, w: np.ndarray) -> np.ndarray:
    win = sliding_window_view(xp, w.shape[2], axis=1)  # (C_in, L1, K)
    return np.einsum("ock,ctk->ot", w, win, optimize=True)


def _conv_back_direct(xp: np.ndarray, w: np.ndarray, g1: np.ndarray):
    K = w.shape[2]
    win = sliding_window_view(xp, K, axis=1)
    dw = np.einsum("ot,ctk->ock", g1, win, optimize=True)
    gp = np.pad(g1, ((0, 0), (K - 1, K - 1)))
    gwin = sliding_window_view(gp, K, axis=1)  # (C_out, Lp, K)
    dxp = np.einsum("ock,omk->cm", w[:, :, ::-1], gwin, optimize=True)
    return dxp, dw


def _fft_block(K: int) -> tuple[int, int]:
    """FFT size and number of outputs per block for a width-K kernel."""
    N = scipy.fft.next_fast_len(max(8 * K, 256), real=True)
    return N, N - K + 1


def _blocks(a: np.ndarray, n_blocks: int, step: int, width: int) -> np.ndarray:
    """(C, n_blocks, width) windows of ``a`` starting every ``step`` positions, zero-extended."""
    need = (n_blocks - 1) * step + width
    if a.shape[1] < need:
        a = np.pad(a, ((0, 0), (0, need - a.shape[1])))
    return sliding_window_view(a, width, axis=1)[:, ::step][:, :n_blocks]


def _corr_fft(xp: np.ndarray, w: np.ndarray, L1: int):
    """Blocked (overlap-save) correlation; returns the spectra reused by the adjoint."""
    K = w.shape[2]
    N, B = _fft_block(K)
    nb = -(-L1 // B)
    X = scipy.fft.rfft(_blocks(xp, nb, B, N), N, axis=2)             # (C_in, nb, F)
    Wf = np.conj(scipy.fft.rfft(w, N, axis=2))                        # (C_out, C_in, F)
    Y = np.einsum("cbf,ocf->obf", X, Wf, optimize=True)
    out = scipy.fft.irfft(Y, N, axis=2)[:, :, :B].reshape(w.shape[0], nb * B)[:, :L1]
    return out, (X, Wf, N, B, nb)


def _conv_back_fft(spectra, g1: np.ndarray, K: int, Lp: int):
    X, Wf, N, B, nb = spectra
    c_out = g1.shape[0]
    gb = np.pad(g1, ((0, 0), (0, nb * B - g1.shape[1]))).reshape(c_out, nb, B)
    G = scipy.fft.rfft(gb, N, axis=2)                                 # (C_out, nb, F)
    # input adjoint: full convolution of each block, overlap-added
    D = scipy.fft.irfft(np.einsum("obf,ocf->cbf", G, np.conj(Wf), optimize=True), N, axis=2)
    c_in = D.shape[0]
    dxp = np.zeros((c_in, (nb + 1) * B + N))
    dxp[:, : nb * B] += D[:, :, :B].reshape(c_in, nb * B)
    tail = dxp[:, B: B + nb * B].reshape(c_in, nb, B)
    tail[:, :, : N - B] += D[:, :, B:]
    # kernel adjoint: correlation lags 0..K-1 summed over blocks in the frequency domain
    dw = scipy.fft.irfft(np.einsum("cbf,obf->ocf", X, np.conj(G), optimize=True), N, axis=2)[:, :, :K]
    return dxp[:, :Lp], dw


def conv1d_forward(signal: Tensor, kernels: Tensor, stride: int = 1, padding: str = "valid",
                   method: str = "auto") -> Tensor:
    """Multi-channel 1-d cross-correlation.

    ``signal`` is (C_in, L) and ``kernels`` is (C_out, C_in, K).  ``padding`` is
    ``"valid"`` or ``"same"`` (K - 1 zeros split left/right, extra on the right).
    ``method`` picks the direct or FFT evaluation; ``"auto"`` uses FFT for large
    problems.  Both agree to rounding.
    """
    if signal.data.ndim != 2 or kernels.data.ndim != 3:
        raise DimensionError(f"conv1d needs signal (C_in, L) and kernels (C_out, C_in, K); "
                             f"got {signal.shape} and {kernels.shape}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if padding not in ("valid", "same"):
        raise ConfigError(f"padding must be 'valid' or 'same', got {padding!r}")
    c_in, L = signal.shape
    c_out, kc_in, K = kernels.shape
    if kc_in != c_in:
        raise DimensionError(f"kernels expect {kc_in} input channels, signal has {c_in}")
    left, right = _same_pad(K - 1) if padding == "same" else (0, 0)
    Lp = L + left + right
    if K > Lp:
        raise DimensionError(f"kernel width {K} exceeds padded signal length {Lp}")
    L1 = Lp - K + 1
    xp = np.pad(signal.data, ((0, 0), (left, right))) if left or right else signal.data
    w = kernels.data
    if method == "auto":
        method = "fft" if c_out * c_in * K * L1 > _FFT_THRESHOLD else "direct"
    if method == "fft":
        out1, spectra = _corr_fft(xp, w, L1)
    elif method == "direct":
        out1 = _corr_direct(xp, w)
    else:
        raise ConfigError(f"unknown conv method {method!r}")
    out = out1[:, ::stride]

    def back(g):
        g1 = np.zeros((c_out, L1))
        g1[:, ::stride] = g
        if method == "fft":
            dxp, dw = _conv_back_fft(spectra, g1, K, Lp)
        else:
            dxp, dw = _conv_back_direct(xp, w, g1)
        return dxp[:, left:left + L], dw

    return _make(np.ascontiguousarray(out), (signal, kernels), back)


def pool_output_length(length: int, window: int, stride: int, padding: str) -> int:
    padded = length + (max(window - stride, 0) if padding == "same" else 0)
    if window > padded:
        return 0
    return (padded - window) // stride + 1


def avgpool1d_forward(signal: Tensor, window: int, stride: int, padding: str = "valid") -> Tensor:
    """Per-channel windowed mean of a (C, L) signal.

    With ``padding="same"`` the signal is virtually padded by ``window - stride``
    positions so the output length is ``L // stride``; padded positions are left
    out of each mean, so a constant signal still pools to that constant.
    """
    if signal.data.ndim != 2:
        raise DimensionError(f"avgpool1d needs a (C, L) signal, got {signal.shape}")
    if window < 1 or stride < 1:
        raise ConfigError(f"pool window and stride must be >= 1, got {window}, {stride}")
    C, L = signal.shape
    if padding == "same":
        left, _ = _same_pad(max(window - stride, 0))
    elif padding == "valid":
        left = 0
    else:
        raise ConfigError(f"padding must be 'valid' or 'same', got {padding!r}")
    n_out = pool_output_length(L, window, stride, padding)
    if n_out < 1:
        raise DimensionError(f"pool window {window} exceeds signal length {L}")
    starts = np.arange(n_out) * stride - left
    lo = np.clip(starts, 0, L)
    hi = np.clip(starts + window, 0, L)
    count = (hi - lo).astype(DTYPE)
    if padding == "valid":
        out = sliding_window_view(signal.data, window, axis=1)[:, ::stride].mean(axis=2)
    else:
        cs = np.concatenate([np.zeros((C, 1)), np.cumsum(signal.data, axis=1)], axis=1)
        out = (cs[:, hi] - cs[:, lo]) / count

    offsets = (np.arange(C) * (L + 1))[:, None]
    at = np.concatenate([(offsets + lo).ravel(), (offsets + hi).ravel()])

    def back(g):
        coef = (g / count).ravel()
        diff = np.bincount(at, np.concatenate([coef, -coef]), minlength=C * (L + 1)).reshape(C, L + 1)
        return (np.cumsum(diff, axis=1)[:, :L],)

    return _make(out, (signal,), back)


# ---------------------------------------------------------------------------
# optimisation


class Adam:
    """Adam with bias correction.  ``step`` zeroes gradients after updating."""

    def __init__(self, params: Sequence[Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ConfigError(f"learning rate must be non-negative, got {lr}")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.zero_grad()


def adam_step(params: Sequence[Parameter], lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8, step: int = 1, state: dict | None = None) -> None:
    """Single functional Adam update; ``state`` carries moments between calls."""
    if lr < 0:
        raise ConfigError(f"learning rate must be non-negative, got {lr}")
    if step < 1:
        raise ConfigError(f"step must be >= 1, got {step}")
    state = {} if state is None else state
    for p in params:
        m, v = state.setdefault(p.name, (np.zeros_like(p.data), np.zeros_like(p.data)))
        m[...] = beta1 * m + (1.0 - beta1) * p.grad
        v[...] = beta2 * v + (1.0 - beta2) * p.grad * p.grad
        m_hat = m / (1.0 - beta1 ** step)
        v_hat = v / (1.0 - beta2 ** step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass
class CheckReport:
    passed: bool
    max_rel_error: float
    worst: tuple[str, int] | None
    tolerance: float
    per_param: dict[str, float] = field(default_factory=dict)

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        where = f" at {self.worst[0]}[{self.worst[1]}]" if self.worst else ""
        return f"{status} max_rel_error={self.max_rel_error:.3e}{where} (tol {self.tolerance:g})"


REL_ERROR_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """|a - n| / max(|a|, |n|, 1e-6) elementwise.

    The floor keeps near-zero gradients from turning rounding noise into a
    large relative error.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), REL_ERROR_FLOOR)
    return np.abs(analytic - numeric) / denom


def finite_diff_check(model_fn: Callable[[], Tensor], params: Sequence[Parameter],
                      epsilon: float = 1e-5, tolerance: float = 1e-4) -> CheckReport:
    """Compare backprop gradients of ``model_fn()`` against central differences."""
    if epsilon <= 0:
        raise ConfigError(f"epsilon must be positive, got {epsilon}")
    params = list(params)
    with no_grad():
        f0 = model_fn().item()
        if model_fn().item() != f0:
            raise HarnessError("model_fn is not deterministic; disable dropout before checking")
    zero_grad(params)
    loss = model_fn()
    backward(loss)
    analytic = [p.grad.copy() for p in params]
    worst_err, worst = 0.0, None
    per_param = {}
    with no_grad():
        for p, a in zip(params, analytic):
            flat = p.data.reshape(-1)
            numeric = np.empty(flat.size)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                fp = model_fn().item()
                flat[i] = orig - epsilon
                fm = model_fn().item()
                flat[i] = orig
                numeric[i] = (fp - fm) / (2.0 * epsilon)
            err = relative_error(a.reshape(-1), numeric)
            per_param[p.name] = float(err.max()) if err.size else 0.0
            if err.size and err.max() > worst_err:
                worst_err = float(err.max())
                worst = (p.name, int(err.argmax()))
    zero_grad(params)
    return CheckReport(worst_err < tolerance, worst_err, worst, tolerance, per_param)
