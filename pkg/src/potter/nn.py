"""Parameter containers and basic layers on top of :mod:`potter.tensor`."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

INIT_STD = 0.02


def make_rng(seed, stream=0) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def trunc_normal(rng, shape, std=INIT_STD):
    """Normal(0, std) truncated to [-2 std, 2 std] by redrawing."""
    if rng is None:
        return np.zeros(shape)
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


class Module:
    """Base class. Parameters are ``Tensor`` attributes with requires_grad;
    child modules are attributes or lists of modules. Attribute insertion
    order fixes the parameter order."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix=""):
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield prefix + key, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{prefix}{key}.")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        """Copy arrays into parameters; all mismatches are reported at once."""
        own = dict(self.named_parameters())
        problems = []
        for name in own:
            if name not in state:
                problems.append(f"missing tensor {name!r}")
            elif tuple(np.shape(state[name])) != own[name].shape:
                problems.append(f"shape mismatch for {name!r}: file {tuple(np.shape(state[name]))}, "
                                f"model {own[name].shape}")
        for name in state:
            if name not in own:
                problems.append(f"unexpected tensor {name!r}")
        if problems:
            raise ValueError("state does not match model:\n  " + "\n  ".join(problems))
        for name, p in own.items():
            p.data = np.array(state[name], dtype=p.dtype)

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


def param(arr, name=None) -> Tensor:
    return Tensor(arr, requires_grad=True, name=name)


class Linear(Module):
    """``x @ weight + bias`` on the last axis; weight stored [in, out]."""

    def __init__(self, d_in, d_out, rng=None, bias=True):
        self.d_in, self.d_out = d_in, d_out
        self.weight = param(trunc_normal(rng, (d_in, d_out)))
        self.bias = param(np.zeros(d_out)) if bias else None

    def forward(self, x):
        return T.linear(x, self.weight, self.bias)


class ChannelLinear(Linear):
    """Linear map over the channel axis of a [B, D, h, w] map."""

    def forward(self, x):
        y = T.linear(T.permute(x, (0, 2, 3, 1)), self.weight, self.bias)
        return T.permute(y, (0, 3, 1, 2))


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, stride=1, padding=0, rng=None):
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding = kernel, stride, padding
        self.weight = param(trunc_normal(rng, (c_out, c_in, kernel, kernel)))
        self.bias = param(np.zeros(c_out))

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)

    def out_hw(self, h, w):
        k, s, p = self.kernel, self.stride, self.padding
        return (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1


class DepthwiseConv3x3(Module):
    def __init__(self, dim, rng=None):
        self.dim = dim
        self.weight = param(trunc_normal(rng, (dim, 3, 3)))
        self.bias = param(np.zeros(dim))

    def forward(self, x):
        return T.depthwise_conv3x3(x, self.weight, self.bias)


class LayerNorm(Module):
    """Per-position normalization over the channel axis of [B, D, h, w]."""

    def __init__(self, dim, eps=T.LN_EPS):
        self.dim, self.eps = dim, eps
        self.gamma = param(np.ones(dim))
        self.beta = param(np.zeros(dim))

    def forward(self, x):
        return T.layer_norm(x, self.gamma, self.beta, self.eps, axis=-3)


def to_batch(x):
    """Promote a single [C, h, w] map to [1, C, h, w]; returns (x, added)."""
    x = T.as_tensor(x)
    if x.ndim == 3:
        return T.reshape(x, (1,) + x.shape), True
    if x.ndim != 4:
        raise ValueError(f"expected [C,h,w] or [B,C,h,w], got shape {x.shape}")
    return x, False


def from_batch(x, added):
    return T.reshape(x, x.shape[1:]) if added else x
