"""Hierarchical basic stream, high-resolution stream, heads and mesh losses."""
from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .config import ModelConfig
from .mixers import PatBlock
from .nn import ChannelLinear, Conv2d, Linear, Module, from_batch, make_rng, to_batch
from .tensor import Tensor


def patchify(image, p=4):
    """[B, 3, H, W] -> [B, H/p, W/p, 3*p*p]; patch values ordered (c, a, b)."""
    b, c, h, w = image.shape
    if h % p or w % p:
        raise ValueError(f"image {h}x{w} not divisible by patch size {p}")
    x = T.reshape(image, (b, c, h // p, p, w // p, p))
    x = T.permute(x, (0, 2, 4, 1, 3, 5))
    return T.reshape(x, (b, h // p, w // p, c * p * p))


class PatchEmbed(Module):
    """Image [3, H, W] -> [D1, H/4, W/4].

    ``patchify``: non-overlapping 4x4 patches, linear 48 -> D1.
    ``overlap``: 7x7 convolution, stride 4, padding 2.
    """

    def __init__(self, dim, kind="patchify", p=4, in_chans=3, rng=None):
        self.kind, self.p, self.dim = kind, p, dim
        if kind == "patchify":
            self.proj = Linear(in_chans * p * p, dim, rng)
        elif kind == "overlap":
            self.proj = Conv2d(in_chans, dim, 7, stride=4, padding=2, rng=rng)
        else:
            raise ValueError(f"unknown embed kind {kind!r}")

    def forward(self, image):
        x, added = to_batch(image)
        if self.kind == "patchify":
            y = T.permute(self.proj(patchify(x, self.p)), (0, 3, 1, 2))
        else:
            y = self.proj(x)
        return from_batch(y, added)


def merge_2x2(x):
    """[B, D, h, w] -> [B, h/2, w/2, 4D], neighbours ordered (0,0),(1,0),(0,1),(1,1)."""
    b, d, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"patch merge needs even extents, got {h}x{w}")
    x = T.reshape(x, (b, d, h // 2, 2, w // 2, 2))
    x = T.permute(x, (0, 2, 4, 5, 3, 1))
    return T.reshape(x, (b, h // 2, w // 2, 4 * d))


class PatchMerge(Module):
    """Halve the grid between stages: 2x2 concat + linear, or 3x3/2 conv."""

    def __init__(self, d_in, d_out, kind="linear", rng=None):
        self.kind, self.d_in, self.d_out = kind, d_in, d_out
        if kind == "linear":
            self.proj = Linear(4 * d_in, d_out, rng)
        elif kind == "conv":
            self.proj = Conv2d(d_in, d_out, 3, stride=2, padding=1, rng=rng)
        else:
            raise ValueError(f"unknown merge kind {kind!r}")

    def forward(self, x_in):
        x, added = to_batch(x_in)
        if self.kind == "linear":
            y = T.permute(self.proj(merge_2x2(x)), (0, 3, 1, 2))
        else:
            h, w = x.shape[-2:]
            if h % 2 or w % 2:
                raise ValueError(f"patch merge needs even extents, got {h}x{w}")
            y = self.proj(x)
        return from_batch(y, added)


def pixel_shuffle(x, s):
    """[B, C*s*s, h, w] -> [B, C, s*h, s*w]; channel c*s*s + a*s + b goes to offset (a, b)."""
    b, cs, h, w = x.shape
    c = cs // (s * s)
    if c * s * s != cs:
        raise ValueError(f"{cs} channels not divisible by {s * s}")
    x = T.reshape(x, (b, c, s, s, h, w))
    x = T.permute(x, (0, 1, 4, 2, 5, 3))
    return T.reshape(x, (b, c, h * s, w * s))


class PatchSplit(Module):
    """Linear D_i -> s*s*D1 per position, then sub-pixel rearrangement."""

    def __init__(self, d_in, d_out, scale, rng=None):
        if scale not in (2, 4, 8):
            raise ValueError(f"split factor must be 2, 4 or 8, got {scale}")
        self.d_in, self.d_out, self.scale = d_in, d_out, scale
        self.proj = ChannelLinear(d_in, scale * scale * d_out, rng)

    def forward(self, x_in):
        x, added = to_batch(x_in)
        return from_batch(pixel_shuffle(self.proj(x), self.scale), added)


class ClassifyHead(Module):
    """Spatial mean over (h, w) followed by a linear classifier."""

    def __init__(self, dim, classes, rng=None):
        self.dim, self.classes = dim, classes
        self.fc = Linear(dim, classes, rng)

    def forward(self, x_in):
        x, added = to_batch(x_in)
        pooled = T.reshape(T.axis_mean(T.axis_mean(x, -1), -2), x.shape[:2])
        logits = self.fc(pooled)
        return T.reshape(logits, (self.classes,)) if added else logits


class Stage(Module):
    def __init__(self, dim, depth, mixer, factorization, rng=None, eps=1e-5):
        self.blocks = [PatBlock(dim, mixer, factorization, rng, eps) for _ in range(depth)]

    def forward(self, x):
        for blk in self.blocks:
            x = blk(x)
        return x


class Potter(Module):
    """Four-stage basic stream, optional HR stream, optional classify head."""

    def __init__(self, config: ModelConfig, seed=0, init=True):
        self.config = cfg = config
        rng = make_rng(seed) if init else None
        self.embed = PatchEmbed(cfg.dims[0], cfg.embed, cfg.patch_size, rng=rng)
        self.stages = [Stage(d, n, cfg.mixer, f, rng, cfg.ln_eps)
                       for d, n, f in zip(cfg.dims, cfg.depths, cfg.factorizations)]
        self.merges = [PatchMerge(cfg.dims[i], cfg.dims[i + 1], cfg.merge, rng) for i in range(3)]
        if cfg.hr_enabled:
            d1 = cfg.dims[0]
            self.hr_splits = [PatchSplit(cfg.dims[i], d1, 2 ** i, rng) for i in (1, 2, 3)]
            self.hr_stages = [Stage(d1, m, cfg.mixer, cfg.factorizations[0], rng, cfg.ln_eps)
                              for m in cfg.hr_depths]
        if cfg.head_kind == "classify":
            self.head = ClassifyHead(cfg.dims[3], cfg.classes, rng)

    def basic_stream(self, image):
        """Return the four stage outputs [D_i, H/2^(i+1), W/2^(i+1)]."""
        x, added = to_batch(image)
        outs = []
        x = self.embed(x)
        for i, stage in enumerate(self.stages):
            if i > 0:
                x = self.merges[i - 1](x)
            x = stage(x)
            outs.append(x)
        return tuple(from_batch(o, added) for o in outs)

    def hr_stream(self, stage_outputs):
        """HR state starts at stage-1 output; each later stage adds its split
        output and runs that stage's HR blocks at dimension D1."""
        if not self.config.hr_enabled:
            raise ValueError("HR stream is disabled in this config")
        batched = [to_batch(o) for o in stage_outputs]
        added = batched[0][1]
        state = batched[0][0]
        for split, stage, (basic, _) in zip(self.hr_splits, self.hr_stages, batched[1:]):
            up = split(basic)
            if up.shape != state.shape:
                raise ValueError(f"split output {up.shape} does not match HR state {state.shape}")
            state = stage(T.add(up, state))
        return from_batch(state, added)

    def features(self, image):
        outs = self.basic_stream(image)
        if self.config.hr_enabled:
            return self.hr_stream(outs)
        return outs[-1]

    def forward(self, image):
        if self.config.head_kind == "classify":
            return self.head(self.basic_stream(image)[-1])
        return self.features(image)


# -- mesh recovery losses ----------------------------------------------------

HMR_WEIGHTS = (0.01, 0.01, 1.0)


@dataclass
class HmrTargets:
    """Shape coefficients, pose parameters and 3-D joints [k, 3]."""

    beta: object
    theta: object
    joints: object


def regress_joints(mesh, w_reg):
    """J = W_reg @ M for mesh [Nv, 3] and regressor [k, Nv]."""
    mesh, w_reg = T.as_tensor(mesh), T.as_tensor(w_reg)
    if mesh.ndim != 2 or mesh.shape[1] != 3:
        raise ValueError(f"mesh must be [Nv, 3], got {mesh.shape}")
    if w_reg.ndim != 2 or w_reg.shape[1] != mesh.shape[0]:
        raise ValueError(f"regressor {w_reg.shape} incompatible with mesh {mesh.shape}")
    return T.matmul(w_reg, mesh)


def _sq_dist(a, b):
    a, b = T.as_tensor(a), T.as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"prediction shape {a.shape} != ground truth {b.shape}")
    r = T.sub(a, b)
    return T.tsum(T.mul(r, r))


def hmr_loss(pred: HmrTargets, gt: HmrTargets, weights=HMR_WEIGHTS) -> Tensor:
    """Weighted sum of squared residuals of beta, theta and joints."""
    w1, w2, w3 = weights
    terms = (T.mul(_sq_dist(pred.beta, gt.beta), w1),
             T.mul(_sq_dist(pred.theta, gt.theta), w2),
             T.mul(_sq_dist(pred.joints, gt.joints), w3))
    return T.add(T.add(terms[0], terms[1]), terms[2])


def model_input_shape(cfg: ModelConfig, batch=None):
    shape = (3, cfg.input_h, cfg.input_w)
    return shape if batch is None else (batch,) + shape


def random_image(cfg: ModelConfig, seed=0, batch=None):
    rng = make_rng(seed, stream=99)
    return rng.uniform(0.0, 1.0, size=model_input_shape(cfg, batch))

