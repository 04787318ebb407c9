"""Minimal reverse-mode differentiation over 1-D real signals.

Covers exactly the operator set the template-matching network needs:
elementwise arithmetic, sin, reductions, strided cross-correlation,
LeakyReLU, max pooling, a real power spectrum, and a soft spectral argmax.
Values are float64 arrays whose last axis is the signal axis; leading axes
(if any) are batch axes that broadcast against unbatched parameters.

Graphs are built eagerly as closures on a tape of parent links; backward()
runs a reverse topological accumulation.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError, InvariantError


class DiffValue:
    """Node in the computation record: data plus lazily materialized grad."""

    __slots__ = ("data", "grad", "_parents", "_backward", "_needs_grad")

    def __init__(self, data, parents=(), backward=None, needs_grad=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self._parents = tuple(parents)
        self._backward = backward
        if needs_grad is None:
            needs_grad = any(p._needs_grad for p in self._parents)
        self._needs_grad = needs_grad

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -_lift(other))

    def __rsub__(self, other):
        return add(_lift(other), -self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def sum(self, axis=None):
        return reduce_sum(self, axis=axis)

    def mean(self, axis=None):
        return reduce_mean(self, axis=axis)

    def __repr__(self):
        return f"DiffValue(shape={self.data.shape})"


class Parameter(DiffValue):
    """Trainable leaf; `name` is its identity in checkpoints and grad maps."""

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, needs_grad=True)
        self.name = name


def _lift(x) -> DiffValue:
    if isinstance(x, DiffValue):
        return x
    return DiffValue(np.asarray(x, dtype=np.float64), needs_grad=False)


def constant(x) -> DiffValue:
    return _lift(x)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out broadcast axes so grad matches the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, dim in enumerate(shape):
        if dim == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def add(a, b) -> DiffValue:
    a, b = _lift(a), _lift(b)
    out_data = a.data + b.data

    def backward(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return DiffValue(out_data, (a, b), backward)


def mul(a, b) -> DiffValue:
    a, b = _lift(a), _lift(b)
    out_data = a.data * b.data

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape))

    return DiffValue(out_data, (a, b), backward)


def sin(x) -> DiffValue:
    x = _lift(x)
    out_data = np.sin(x.data)

    def backward(g):
        return (g * np.cos(x.data),)

    return DiffValue(out_data, (x,), backward)


def reduce_sum(x, axis=None) -> DiffValue:
    x = _lift(x)
    out_data = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy(),)

    return DiffValue(out_data, (x,), backward)


def reduce_mean(x, axis=None) -> DiffValue:
    x = _lift(x)
    count = x.data.size if axis is None else x.data.shape[axis]
    return mul(reduce_sum(x, axis=axis), 1.0 / count)


def expand_last(x) -> DiffValue:
    """Append a trailing broadcast axis of size 1."""
    x = _lift(x)

    def backward(g):
        return (g[..., 0],)

    return DiffValue(x.data[..., None], (x,), backward)


def leaky_relu(x, negative_slope: float = 0.01) -> DiffValue:
    """Elementwise max(x, slope*x); the subgradient at 0 takes the positive branch."""
    if not 0.0 < negative_slope < 1.0:
        raise InvariantError("negative_slope must lie in (0, 1)")
    x = _lift(x)
    mask = x.data >= 0.0
    out_data = np.where(mask, x.data, negative_slope * x.data)

    def backward(g):
        return (g * np.where(mask, 1.0, negative_slope),)

    return DiffValue(out_data, (x,), backward)


def conv1d(x, kernel, stride: int = 1, padding: int = 0) -> DiffValue:
    """Strided cross-correlation of the (zero-padded) last axis with a 1-D kernel.

    No kernel flip: the learned-filter convention. Gradients reach both the
    input and the kernel.
    """
    x, kernel = _lift(x), _lift(kernel)
    if kernel.data.ndim != 1:
        raise InvariantError("conv1d kernel must be 1-D")
    if stride < 1:
        raise InvariantError("stride must be >= 1")
    if padding < 0:
        raise InvariantError("padding must be >= 0")
    klen = kernel.data.shape[0]
    length = x.data.shape[-1]
    padded_len = length + 2 * padding
    if klen > padded_len:
        raise InvariantError("kernel longer than padded input")
    out_len = (padded_len - klen) // stride + 1

    if padding:
        pad_spec = [(0, 0)] * (x.data.ndim - 1) + [(padding, padding)]
        xp = np.pad(x.data, pad_spec)
    else:
        xp = x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, klen, axis=-1)[..., ::stride, :]
    out_data = windows @ kernel.data

    def backward(g):
        grad_x = None
        grad_k = None
        if x._needs_grad:
            gxp = np.zeros_like(xp)
            for j in range(klen):
                gxp[..., j : j + stride * out_len : stride] += g * kernel.data[j]
            grad_x = gxp[..., padding : padding + length] if padding else gxp
        if kernel._needs_grad:
            flat_w = windows.reshape(-1, out_len, klen)
            flat_g = g.reshape(-1, out_len)
            grad_k = np.einsum("bok,bo->k", flat_w, flat_g)
        return (grad_x, grad_k)

    return DiffValue(out_data, (x, kernel), backward)


def max_pool1d(x, kernel_size: int, stride: int) -> DiffValue:
    """Windowed maxima; backward routes each window's grad to its first argmax."""
    x = _lift(x)
    length = x.data.shape[-1]
    if kernel_size > length:
        raise InvariantError("pool kernel exceeds input length")
    if stride < 1:
        raise InvariantError("pool stride must be >= 1")
    out_len = (length - kernel_size) // stride + 1
    if out_len < 1:
        raise InvariantError("pooling produced an empty output")

    out_data = np.empty(x.data.shape[:-1] + (out_len,), dtype=np.float64)
    argmaxes = np.empty(out_data.shape, dtype=np.int64)
    for w in range(out_len):
        seg = x.data[..., w * stride : w * stride + kernel_size]
        idx = np.argmax(seg, axis=-1)
        argmaxes[..., w] = idx + w * stride
        out_data[..., w] = np.take_along_axis(seg, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        grad_x = np.zeros_like(x.data)
        flat_g = g.reshape(-1, out_len)
        flat_idx = argmaxes.reshape(-1, out_len)
        flat_grad = grad_x.reshape(-1, length)
        rows = np.arange(flat_grad.shape[0])[:, None]
        np.add.at(flat_grad, (rows, flat_idx), flat_g)
        return (grad_x,)

    return DiffValue(out_data, (x,), backward)


def power_spectrum(x) -> DiffValue:
    """Squared magnitudes of the one-sided DFT of the real last axis."""
    x = _lift(x)
    length = x.data.shape[-1]
    if length < 2:
        raise InvariantError("power spectrum needs at least 2 samples")
    spectrum = np.fft.rfft(x.data, axis=-1)
    out_data = np.abs(spectrum) ** 2

    def backward(g):
        # d|X_k|^2/dx_n = 2 Re(conj(X_k) e^{-2j pi k n / L}); stack the
        # upstream-weighted one-sided bins and evaluate via a full FFT.
        c = np.zeros(x.data.shape[:-1] + (length,), dtype=np.complex128)
        c[..., : out_data.shape[-1]] = g * np.conj(spectrum)
        return (2.0 * np.real(np.fft.fft(c, axis=-1)),)

    return DiffValue(out_data, (x,), backward)


def soft_argmax_freq(
    power,
    frame_rate_hz: float,
    temperature: float | None = None,
    exclude_dc: bool = True,
    series_length: int | None = None,
) -> DiffValue:
    """Softmax-weighted mean of bin frequencies: a differentiable argmax.

    Bin k maps to k * frame_rate / series_length; series_length defaults to
    the power vector's own length. With temperature None, it is set per
    sample to 1% of the maximum included power (treated as a constant for
    the backward pass).
    """
    power = _lift(power)
    nbins = power.data.shape[-1]
    if series_length is None:
        series_length = nbins
    start = 1 if exclude_dc else 0
    if nbins - start < 1:
        raise DataError("no spectral bins left after DC exclusion")
    p = power.data[..., start:]
    pmax = p.max(axis=-1, keepdims=True)
    if np.any(pmax <= 0):
        raise DataError("all-zero spectrum: frequency undefined")
    if temperature is None:
        tau = 0.01 * pmax
    else:
        if temperature <= 0:
            raise InvariantError("temperature must be positive")
        tau = np.asarray(temperature, dtype=np.float64)
    z = (p - pmax) / tau
    ez = np.exp(z)
    weights = ez / ez.sum(axis=-1, keepdims=True)
    freqs = np.arange(start, nbins, dtype=np.float64) * frame_rate_hz / series_length
    out_data = (weights * freqs).sum(axis=-1)

    def backward(g):
        grad_p = np.zeros_like(power.data)
        diff = freqs - out_data[..., None]
        grad_p[..., start:] = g[..., None] * weights * diff / tau
        return (grad_p,)

    return DiffValue(out_data, (power,), backward)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------

def _topological_order(root: DiffValue) -> list[DiffValue]:
    order: list[DiffValue] = []
    seen: set[int] = set()
    stack: list[tuple[DiffValue, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen and parent._needs_grad:
                stack.append((parent, False))
    return order


def backward(loss: DiffValue, params=None) -> dict[str, np.ndarray]:
    """Accumulate gradients of a scalar loss into every reachable node.

    Returns a name -> gradient map covering `params` (zeros for parameters
    the loss never touched).
    """
    if loss.data.shape != ():
        raise InvariantError("backward expects a scalar loss")
    order = _topological_order(loss)
    loss.grad = np.ones(())
    for node in reversed(order):
        if node._backward is None or node.grad is None:
            continue
        parent_grads = node._backward(node.grad)
        for parent, grad in zip(node._parents, parent_grads):
            if grad is None or not parent._needs_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad = parent.grad + grad
    if params is None:
        return {}
    result = {}
    for p in params:
        result[p.name] = p.grad if p.grad is not None else np.zeros_like(p.data)
    return result


def zero_grad(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Checkpoints: named float64 arrays in one binary file with a text header.
# ---------------------------------------------------------------------------

_CKPT_MAGIC = "MDDCKPT1"


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    """Header lines are `name offset length`; payload is little-endian float64."""
    lines = [_CKPT_MAGIC, str(len(arrays))]
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        flat = np.asarray(arr, dtype="<f8").ravel()
        lines.append(f"{name} {offset} {flat.size}")
        blobs.append(flat.tobytes())
        offset += flat.size
    lines.append("END")
    header = ("\n".join(lines) + "\n").encode("ascii")
    Path(path).write_bytes(header + b"".join(blobs))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    end_marker = raw.find(b"END\n")
    if not raw.startswith(_CKPT_MAGIC.encode()) or end_marker < 0:
        raise DataError(f"{path} is not a checkpoint file")
    header = raw[:end_marker].decode("ascii").splitlines()
    count = int(header[1])
    payload = raw[end_marker + 4 :]
    arrays: dict[str, np.ndarray] = {}
    for line in header[2 : 2 + count]:
        name, offset, length = line.split()
        offset, length = int(offset), int(length)
        arrays[name] = np.frombuffer(
            payload, dtype="<f8", count=length, offset=offset * 8
        ).astype(np.float64)
    return arrays
