"""Minimal deterministic tensor engine with tape-based reverse-mode autodiff.

Values are numpy arrays (float64 unless asked otherwise). Every primitive
returns a new :class:`Tensor`; when a :class:`GradTape` is active and any
input requires a gradient, the primitive appends one record
``(output, inputs, vjp)`` to the tape. ``GradTape.backward`` replays the
records in reverse order, so gradient accumulation order is fixed and runs
are bitwise reproducible.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

DEFAULT_DTYPE = np.float64
LN_EPS = 1e-5

_ACTIVE_TAPES: list["GradTape"] = []


class Tensor:
    """Dense row-major array with an optional gradient flag."""

    __slots__ = ("data", "requires_grad", "name")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
        self.data = np.array(arr, dtype=dtype, copy=True)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data.copy()

    def item(self):
        return self.data.item()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = shape[0]
        return reshape(self, shape)


def as_tensor(x, like=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=None if like is None else like.dtype)


def _pair(a, b):
    # python scalars adopt the dtype of the tensor operand
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


class GradTape:
    """Ordered record of primitive applications.

    Use as a context manager around the forward pass, then call
    :meth:`backward`.
    """

    def __init__(self):
        self.records = []

    def __enter__(self):
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _ACTIVE_TAPES.remove(self)
        return False

    def __len__(self):
        return len(self.records)

    def record(self, out, inputs, vjp):
        self.records.append((out, inputs, vjp))

    def backward(self, output: Tensor, seed=None, wrt=None):
        """Reverse-accumulate adjoints from ``output``.

        Returns a dict mapping leaf tensors (those requiring grad that were
        not produced on this tape) to gradient arrays. If ``wrt`` is given,
        the dict holds exactly those tensors, with zeros for unused ones.
        """
        if not self.records:
            raise ValueError("tape is empty: nothing was recorded")
        if seed is None:
            if output.size != 1:
                raise ValueError("seed required for non-scalar output")
            seed = np.ones_like(output.data)
        seed = np.asarray(seed, dtype=output.dtype)
        if seed.shape != output.shape:
            raise ValueError(f"seed shape {seed.shape} != output shape {output.shape}")

        produced = {id(rec[0]) for rec in self.records}
        adjoint = {id(output): seed}
        leaves = {}
        for out, inputs, vjp in reversed(self.records):
            g = adjoint.pop(id(out), None)
            if g is None:
                continue
            grads = vjp(g)
            for inp, gi in zip(inputs, grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + gi
                else:
                    adjoint[key] = gi
                if key not in produced:
                    leaves[key] = inp

        if wrt is not None:
            return {t: adjoint.get(id(t), np.zeros_like(t.data)) for t in wrt}
        return {t: adjoint[k] for k, t in leaves.items()}


def _result(data, inputs, vjp) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data)
    out.requires_grad = False
    out.name = None
    if _ACTIVE_TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _ACTIVE_TAPES[-1].record(out, inputs, vjp)
    return out


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = _pair(a, b)

    def vjp(g):
        return (_unbroadcast(g / b.data, a.shape),
                _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(a.data / b.data, (a, b), vjp)


def square(a) -> Tensor:
    return mul(a, a)


def gelu(x) -> Tensor:
    """Exact GELU, x * Phi(x)."""
    x = as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))

    def vjp(g):
        pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
        return (g * (cdf + x.data * pdf),)

    return _result(x.data * cdf, (x,), vjp)


# -- reductions -------------------------------------------------------------

def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise IndexError(f"axis {ax} out of range for rank {ndim}")
        out.append(ax % ndim)
    return tuple(sorted(out))


def tsum(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)

    def vjp(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _result(x.data.sum(axis=axes, keepdims=keepdims), (x,), vjp)


def mean(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    axes = _norm_axes(axis, x.ndim)
    count = 1
    for ax in axes:
        count *= x.shape[ax]
    return mul(tsum(x, axes, keepdims), 1.0 / count)


def axis_mean(x, axis: int) -> Tensor:
    """Mean along one axis, keeping that axis with extent 1."""
    x = as_tensor(x)
    (ax,) = _norm_axes(axis, x.ndim)
    n = x.shape[ax]

    def vjp(g):
        return (np.broadcast_to(g / n, x.shape).copy(),)

    return _result(x.data.mean(axis=ax, keepdims=True), (x,), vjp)


# -- shape ------------------------------------------------------------------

def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    shape = tuple(int(s) for s in shape)
    if math.prod(shape) != x.size:
        raise ValueError(f"cannot reshape {x.shape} ({x.size} values) to {shape}")

    def vjp(g):
        return (g.reshape(x.shape),)

    return _result(x.data.reshape(shape), (x,), vjp)


def permute(x, order) -> Tensor:
    x = as_tensor(x)
    order = tuple(int(o) for o in order)
    if sorted(order) != list(range(x.ndim)):
        raise ValueError(f"{order} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(order))

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _result(np.ascontiguousarray(np.transpose(x.data, order)), (x,), vjp)


def swap_last(x) -> Tensor:
    order = list(range(x.ndim))
    order[-1], order[-2] = order[-2], order[-1]
    return permute(x, order)


# -- linear algebra ---------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product over the trailing two axes."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul needs operands of rank >= 2")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"contraction mismatch: {a.shape} x {b.shape}")

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), vjp)


def linear(x, weight, bias=None) -> Tensor:
    """Affine map on the last axis: ``x @ weight + bias``, weight [in, out]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    if x.ndim >= 2:
        out = matmul(x, weight)
    else:
        out = reshape(matmul(reshape(x, (1, x.shape[0])), weight), (weight.shape[1],))
    if bias is not None:
        out = add(out, bias)
    return out


def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), vjp)


def cross_entropy(logits, labels) -> Tensor:
    """Mean softmax cross-entropy; logits [B, k], integer labels [B]."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    b = logits.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    loss = -logp[np.arange(b), labels].mean()

    def vjp(g):
        p = np.exp(logp)
        p[np.arange(b), labels] -= 1.0
        return (g * p / b,)

    return _result(np.asarray(loss, dtype=logits.dtype), (logits,), vjp)


# -- normalization / convolution -------------------------------------------

def layer_norm(x, gamma, beta, eps=LN_EPS, axis=-3) -> Tensor:
    """Normalize along ``axis`` (channel axis of [..., D, h, w] by default)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    (ax,) = _norm_axes(axis, x.ndim)
    d = x.shape[ax]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ValueError(f"layer_norm: affine params must have shape ({d},)")
    bshape = (d,) + (1,) * (x.ndim - ax - 1)
    gam = gamma.data.reshape(bshape)
    mu = x.data.mean(axis=ax, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=ax, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    others = tuple(i for i in range(x.ndim) if i != ax)

    def vjp(g):
        gxhat = g * gam
        gx = inv * (gxhat - gxhat.mean(axis=ax, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=ax, keepdims=True))
        return gx, (g * xhat).sum(axis=others), g.sum(axis=others)

    y = gam * xhat + beta.data.reshape(bshape)
    return _result(y, (x, gamma, beta), vjp)


def depthwise_conv3x3(x, weight, bias) -> Tensor:
    """Per-channel 3x3 convolution, stride 1, zero padding 1, on [..., D, h, w]."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    d, h, w = x.shape[-3:]
    if weight.shape != (d, 3, 3) or bias.shape != (d,):
        raise ValueError(f"depthwise_conv3x3: expected weight ({d},3,3) and bias ({d},), "
                         f"got {weight.shape} and {bias.shape}")
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    xp = np.pad(x.data, pad)
    out = np.broadcast_to(bias.data[:, None, None], x.shape).copy()
    for i in range(3):
        for j in range(3):
            out += weight.data[:, i, j, None, None] * xp[..., i:i + h, j:j + w]
    lead = tuple(range(x.ndim - 3))

    def vjp(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(weight.data)
        for i in range(3):
            for j in range(3):
                gxp[..., i:i + h, j:j + w] += weight.data[:, i, j, None, None] * g
                gw[:, i, j] = (g * xp[..., i:i + h, j:j + w]).sum(axis=lead + (-2, -1))
        gb = g.sum(axis=lead + (-2, -1))
        return gxp[..., 1:h + 1, 1:w + 1], gw, gb

    return _result(out, (x, weight, bias), vjp)


def avg_pool3x3(x) -> Tensor:
    """3x3 average pool, stride 1, zero padding 1 (padded zeros count)."""
    x = as_tensor(x)
    h, w = x.shape[-2:]
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (1, 1)]
    xp = np.pad(x.data, pad)
    out = np.zeros_like(x.data)
    for i in range(3):
        for j in range(3):
            out += xp[..., i:i + h, j:j + w]

    def vjp(g):
        gxp = np.zeros_like(xp)
        for i in range(3):
            for j in range(3):
                gxp[..., i:i + h, j:j + w] += g
        return (gxp[..., 1:h + 1, 1:w + 1] / 9.0,)

    return _result(out / 9.0, (x,), vjp)


def conv2d(x, weight, bias=None, stride=1, padding=0) -> Tensor:
    """Dense 2-D convolution on [B, C, H, W] with weight [O, C, k, k]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4:
        raise ValueError("conv2d expects [B, C, H, W]")
    o, c, kh, kw = weight.shape
    if x.shape[1] != c:
        raise ValueError(f"conv2d: {x.shape[1]} input channels, weight expects {c}")
    s, p = stride, padding
    xp = np.pad(x.data, [(0, 0), (0, 0), (p, p), (p, p)])
    ho = (xp.shape[2] - kh) // s + 1
    wo = (xp.shape[3] - kw) // s + 1
    out = np.zeros((x.shape[0], o, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + s * ho:s, j:j + s * wo:s]
            out += np.einsum("bchw,oc->bohw", patch, weight.data[:, :, i, j])
    inputs = (x, weight)
    if bias is not None:
        bias = as_tensor(bias)
        out += bias.data[None, :, None, None]
        inputs = (x, weight, bias)

    def vjp(g):
        gxp = np.zeros_like(xp)
        gw = np.empty_like(weight.data)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i:i + s * ho:s, j:j + s * wo:s]
                gxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += np.einsum(
                    "bohw,oc->bchw", g, weight.data[:, :, i, j])
                gw[:, :, i, j] = np.einsum("bohw,bchw->oc", g, patch)
        gx = gxp[:, :, p:p + x.shape[2], p:p + x.shape[3]]
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return _result(out, inputs, vjp)


# -- gradient oracle --------------------------------------------------------

def finite_diff_grad(f, x, eps=1e-6, indices=None):
    """Central-difference gradient of scalar ``f`` at array ``x``.

    ``f`` takes an ndarray and returns a float. If ``indices`` (flat) is
    given, only those coordinates are evaluated and a 1-D array is returned.
    """
    x = np.array(x, dtype=DEFAULT_DTYPE, copy=True)
    flat = x.reshape(-1)
    idx = range(flat.size) if indices is None else indices
    out = []
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x))
        flat[i] = orig - eps
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise FloatingPointError(f"non-finite f near coordinate {i}")
        out.append((fp - fm) / (2 * eps))
    out = np.array(out, dtype=DEFAULT_DTYPE)
    return out.reshape(x.shape) if indices is None else out


def grad_rel_error(analytic, numeric) -> float:
    """max |a - n| / max(1, |a|) over coordinates."""
    analytic = np.asarray(analytic, dtype=float).reshape(-1)
    numeric = np.asarray(numeric, dtype=float).reshape(-1)
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))))
