"""Token mixers (pooling attention, plain pooling, dot-product attention)
and the pre-norm PAT block built around them.

All functions accept a single feature map [D, h, w] or a batch [B, D, h, w].
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import ChannelLinear, DepthwiseConv3x3, LayerNorm, Linear, Module, from_batch, to_batch

MIXERS = ("poolattn", "pooling", "attention")


def factorize(dim: int) -> tuple[int, int]:
    """Closest-to-square factor pair (dh, dw) with dh <= dw and dh * dw == dim."""
    if dim < 1:
        raise ValueError("dim must be positive")
    dh = math.isqrt(dim)
    while dim % dh:
        dh -= 1
    return dh, dim // dh


def patchwise_pool_attention(x0):
    """Outer product of the per-channel row means and column means.

    X1[d] = mean_w(X0[d]) @ mean_h(X0[d]), shapes (h,1) @ (1,w).
    """
    x, added = to_batch(x0)
    x_ph = T.axis_mean(x, -1)  # [B, D, h, 1]
    x_pw = T.axis_mean(x, -2)  # [B, D, 1, w]
    return from_batch(T.matmul(x_ph, x_pw), added)


def embedwise_pool_attention(x0, dh: int, dw: int):
    """Per-patch outer product over the (dh, dw) view of the embedding.

    Channel d maps to row d // dw, column d % dw of the patch's embedding
    grid; the result is reshaped back to [D, h, w].
    """
    x, added = to_batch(x0)
    b, d, h, w = x.shape
    if dh * dw != d:
        raise ValueError(f"factorization {dh}x{dw} does not match embedding dim {d}")
    xe = T.reshape(x, (b, dh, dw, h, w))
    xe = T.permute(xe, (0, 3, 4, 1, 2))
    xe = T.reshape(xe, (b, h * w, dh, dw))  # X0' : [B, N, dh, dw]
    x_pdh = T.axis_mean(xe, -1)  # [B, N, dh, 1]
    x_pdw = T.axis_mean(xe, -2)  # [B, N, 1, dw]
    x2 = T.matmul(x_pdh, x_pdw)
    x3 = T.permute(T.reshape(x2, (b, h, w, dh, dw)), (0, 3, 4, 1, 2))
    return from_batch(T.reshape(x3, (b, d, h, w)), added)


class PoolAttn(Module):
    """Proj3(Proj1(X1) + Proj2(X3)) with depthwise 3x3 projections."""

    def __init__(self, dim, factorization=None, rng=None):
        self.dim = dim
        self.dh, self.dw = factorization or factorize(dim)
        if self.dh * self.dw != dim:
            raise ValueError(f"factorization {self.dh}x{self.dw} != {dim}")
        self.proj1 = DepthwiseConv3x3(dim, rng)
        self.proj2 = DepthwiseConv3x3(dim, rng)
        self.proj3 = DepthwiseConv3x3(dim, rng)

    def forward(self, x0):
        x1 = patchwise_pool_attention(x0)
        x3 = embedwise_pool_attention(x0, self.dh, self.dw)
        return self.proj3(T.add(self.proj1(x1), self.proj2(x3)))


def pooling_mixer(x):
    """3x3 average pool (zero padded) minus the input."""
    return T.sub(T.avg_pool3x3(x), x)


class Pooling(Module):
    def __init__(self, dim=None, rng=None):
        self.dim = dim

    def forward(self, x):
        return pooling_mixer(x)


class Attention(Module):
    """Single-head scaled dot-product attention over the h*w tokens."""

    def __init__(self, dim, rng=None):
        self.dim = dim
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.o = Linear(dim, dim, rng)

    def forward(self, x_in):
        x, added = to_batch(x_in)
        b, d, h, w = x.shape
        tokens = T.permute(T.reshape(x, (b, d, h * w)), (0, 2, 1))  # [B, N, D]
        q, k, v = self.q(tokens), self.k(tokens), self.v(tokens)
        logits = T.mul(T.matmul(q, T.swap_last(k)), 1.0 / math.sqrt(d))
        out = self.o(T.matmul(T.softmax(logits, axis=-1), v))
        out = T.reshape(T.permute(out, (0, 2, 1)), (b, d, h, w))
        return from_batch(out, added)


def make_mixer(kind, dim, factorization=None, rng=None) -> Module:
    if kind == "poolattn":
        return PoolAttn(dim, factorization, rng)
    if kind == "pooling":
        return Pooling(dim)
    if kind == "attention":
        return Attention(dim, rng)
    raise ValueError(f"unknown mixer {kind!r}; expected one of {MIXERS}")


class Mlp(Module):
    """Per-position D -> 4D -> D with exact GELU."""

    def __init__(self, dim, rng=None, ratio=4):
        self.fc1 = ChannelLinear(dim, ratio * dim, rng)
        self.fc2 = ChannelLinear(ratio * dim, dim, rng)

    def forward(self, x):
        return self.fc2(T.gelu(self.fc1(x)))


class PatBlock(Module):
    """x + mixer(LN(x)), then + MLP(LN(.))."""

    def __init__(self, dim, mixer="poolattn", factorization=None, rng=None, eps=T.LN_EPS):
        self.dim = dim
        self.mixer_kind = mixer
        self.norm1 = LayerNorm(dim, eps)
        self.mixer = make_mixer(mixer, dim, factorization, rng)
        self.norm2 = LayerNorm(dim, eps)
        self.mlp = Mlp(dim, rng)

    def forward(self, x_in):
        x, added = to_batch(x_in)
        x_attn = T.add(self.mixer(self.norm1(x)), x)
        x_out = T.add(self.mlp(self.norm2(x_attn)), x_attn)
        return from_batch(x_out, added)


def zero_block(block: PatBlock) -> PatBlock:
    """Zero every weight, bias and LN offset in place (LN scales untouched)."""
    for name, p in block.named_parameters():
        if not name.endswith("gamma"):
            p.data = np.zeros_like(p.data)
    return block
