"""Parameter and multiply-accumulate accounting.

Two conventions:

``table`` mode follows the per-block complexity table: layer norms,
pooling and the squeezed-feature matmuls cost nothing, linear-layer biases
are not counted, depthwise projections count 9D weights + D biases.
Attention is reported as one closed-form row (4D^2+4D params,
4DN^2+2D^2N MACs) exactly as tabulated.

``exact`` mode counts every stored scalar and every multiply-accumulate of
the implementation: LN is 2 MACs per element (variance accumulate and the
affine), the two outer products are DN each, attention is 4D^2N for the
projections plus 2DN^2 for logits and the weighted sum, and the 3x3 average
pool costs 9DN like the fixed-kernel depthwise conv it is.

All counts are Python ints. A leading batch extent multiplies MACs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import singledispatch

from .backbone import ClassifyHead, PatchEmbed, PatchMerge, PatchSplit, Potter, Stage
from .mixers import Attention, Mlp, PatBlock, Pooling, PoolAttn
from .nn import ChannelLinear, Conv2d, DepthwiseConv3x3, LayerNorm, Linear, Module

MODES = ("table", "exact")


@dataclass
class LayerRecord:
    name: str
    kind: str
    params: int
    macs: int


@dataclass
class ComplexityReport:
    mode: str
    input_shape: tuple
    records: list = field(default_factory=list)
    closed_form: dict = None

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.records)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.records)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "input_shape": list(self.input_shape) if self.input_shape else None,
            "records": [asdict(r) for r in self.records],
            "total_params": self.total_params,
            "total_macs": self.total_macs,
            "closed_form": self.closed_form,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self) -> str:
        name_w = max([len(r.name) for r in self.records] + [5])
        kind_w = max([len(r.kind) for r in self.records] + [4])
        lines = [f"mode={self.mode} input={self.input_shape}",
                 f"{'layer':<{name_w}}  {'kind':<{kind_w}}  {'params':>14}  {'MACs':>16}"]
        for r in self.records:
            lines.append(f"{r.name:<{name_w}}  {r.kind:<{kind_w}}  {r.params:>14,}  {r.macs:>16,}")
        lines.append(f"{'TOTAL':<{name_w}}  {'':<{kind_w}}  {self.total_params:>14,}  {self.total_macs:>16,}")
        if self.closed_form:
            cf = self.closed_form
            lines.append(f"closed form: {cf['params_formula']} = {cf['params']:,} params; "
                         f"{cf['macs_formula']} = {cf['macs']:,} MACs (D={cf['D']}, N={cf['N']})")
        return "\n".join(lines)


def _check_mode(mode):
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def _split_shape(shape):
    """(batch, C, h, w) from [C,h,w] or [B,C,h,w]."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 3:
        return (1,) + shape
    if len(shape) == 4:
        return shape
    raise ValueError(f"input shape must be [C,h,w] or [B,C,h,w], got {shape}")


@singledispatch
def _walk(module, shape, mode, name):
    """Return (records, output shape) for ``module`` fed [B, C, h, w]."""
    raise TypeError(f"no complexity rule for {type(module).__name__}")


@_walk.register
def _(m: DepthwiseConv3x3, shape, mode, name):
    b, d, h, w = shape
    params = m.weight.size + m.bias.size
    return [LayerRecord(name, "dwconv3x3", params, b * 9 * d * h * w)], shape


@_walk.register
def _(m: LayerNorm, shape, mode, name):
    b, d, h, w = shape
    if mode == "table":
        return [], shape
    return [LayerRecord(name, "layernorm", m.gamma.size + m.beta.size, b * 2 * d * h * w)], shape


def _linear_params(m: Linear, mode):
    bias = 0 if (m.bias is None or mode == "table") else m.bias.size
    return m.weight.size + bias


@_walk.register
def _(m: ChannelLinear, shape, mode, name):
    b, d, h, w = shape
    if d != m.d_in:
        raise ValueError(f"{name}: expected {m.d_in} channels, got {d}")
    rec = LayerRecord(name, "linear", _linear_params(m, mode), b * m.d_in * m.d_out * h * w)
    return [rec], (b, m.d_out, h, w)


@_walk.register
def _(m: Conv2d, shape, mode, name):
    b, c, h, w = shape
    ho, wo = m.out_hw(h, w)
    k2 = m.kernel * m.kernel
    params = m.weight.size + m.bias.size
    return [LayerRecord(name, f"conv{m.kernel}x{m.kernel}", params, b * m.c_out * c * k2 * ho * wo)], \
        (b, m.c_out, ho, wo)


@_walk.register
def _(m: PoolAttn, shape, mode, name):
    b, d, h, w = shape
    recs = []
    if mode == "exact":
        recs.append(LayerRecord(f"{name}.patch_matmul", "outer", 0, b * d * h * w))
        recs.append(LayerRecord(f"{name}.embed_matmul", "outer", 0, b * d * h * w))
    for key in ("proj1", "proj2", "proj3"):
        recs += _walk(getattr(m, key), shape, mode, f"{name}.{key}")[0]
    return recs, shape


@_walk.register
def _(m: Pooling, shape, mode, name):
    b, d, h, w = shape
    macs = 0 if mode == "table" else b * 9 * d * h * w
    return [LayerRecord(name, "avgpool3x3", 0, macs)], shape


def attention_closed_form(dim, n):
    """Tabulated attention cost: (4D^2 + 4D) params, (4DN^2 + 2D^2N) MACs."""
    return 4 * dim * dim + 4 * dim, 4 * dim * n * n + 2 * dim * dim * n


@_walk.register
def _(m: Attention, shape, mode, name):
    b, d, h, w = shape
    n = h * w
    if mode == "table":
        params, macs = attention_closed_form(d, n)
        return [LayerRecord(name, "attention(closed form)", params, b * macs)], shape
    recs = [LayerRecord(f"{name}.{key}", "linear", getattr(m, key).weight.size + getattr(m, key).bias.size,
                        b * d * d * n) for key in ("q", "k", "v", "o")]
    recs.insert(3, LayerRecord(f"{name}.logits", "matmul", 0, b * d * n * n))
    recs.insert(4, LayerRecord(f"{name}.weighted_sum", "matmul", 0, b * d * n * n))
    return recs, shape


@_walk.register
def _(m: Mlp, shape, mode, name):
    r1, s = _walk(m.fc1, shape, mode, f"{name}.fc1")
    r2, s = _walk(m.fc2, s, mode, f"{name}.fc2")
    return r1 + r2, s


@_walk.register
def _(m: PatBlock, shape, mode, name):
    recs = []
    for key in ("norm1", "mixer", "norm2", "mlp"):
        recs += _walk(getattr(m, key), shape, mode, f"{name}.{key}")[0]
    return recs, shape


@_walk.register
def _(m: Stage, shape, mode, name):
    recs = []
    for i, blk in enumerate(m.blocks):
        recs += _walk(blk, shape, mode, f"{name}.blocks.{i}")[0]
    return recs, shape


@_walk.register
def _(m: PatchEmbed, shape, mode, name):
    b, c, h, w = shape
    if m.kind == "overlap":
        return _walk(m.proj, shape, mode, f"{name}.proj")
    p = m.p
    lin = m.proj
    rec = LayerRecord(f"{name}.proj", "linear", _linear_params(lin, mode),
                      b * lin.d_in * lin.d_out * (h // p) * (w // p))
    return [rec], (b, lin.d_out, h // p, w // p)


@_walk.register
def _(m: PatchMerge, shape, mode, name):
    b, d, h, w = shape
    if m.kind == "conv":
        return _walk(m.proj, shape, mode, f"{name}.proj")
    lin = m.proj
    rec = LayerRecord(f"{name}.proj", "linear", _linear_params(lin, mode),
                      b * lin.d_in * lin.d_out * (h // 2) * (w // 2))
    return [rec], (b, lin.d_out, h // 2, w // 2)


@_walk.register
def _(m: PatchSplit, shape, mode, name):
    recs, (b, c, h, w) = _walk(m.proj, shape, mode, f"{name}.proj")
    s = m.scale
    return recs, (b, c // (s * s), h * s, w * s)


@_walk.register
def _(m: ClassifyHead, shape, mode, name):
    b, d, h, w = shape
    lin = m.fc
    rec = LayerRecord(f"{name}.fc", "linear", _linear_params(lin, mode), b * d * m.classes)
    return [rec], (b, m.classes)


@_walk.register
def _(m: Potter, shape, mode, name):
    cfg = m.config
    prefix = f"{name}." if name else ""
    recs, s = _walk(m.embed, shape, mode, f"{prefix}embed")
    stage_shapes = []
    for i, stage in enumerate(m.stages):
        if i > 0:
            r, s = _walk(m.merges[i - 1], s, mode, f"{prefix}merges.{i - 1}")
            recs += r
        recs += _walk(stage, s, mode, f"{prefix}stages.{i}")[0]
        stage_shapes.append(s)
    out = s
    if cfg.hr_enabled:
        hr = stage_shapes[0]
        for i, (split, stage) in enumerate(zip(m.hr_splits, m.hr_stages)):
            r, up = _walk(split, stage_shapes[i + 1], mode, f"{prefix}hr_splits.{i}")
            if up != hr:
                raise ValueError(f"split output {up} does not match HR state {hr}")
            recs += r
            recs += _walk(stage, hr, mode, f"{prefix}hr_stages.{i}")[0]
        out = hr
    if cfg.head_kind == "classify":
        r, out = _walk(m.head, s, mode, f"{prefix}head")
        recs += r
    return recs, out


def default_input_shape(model: Module, dim=None, n=None):
    if isinstance(model, Potter):
        return (3, model.config.input_h, model.config.input_w)
    d = dim or getattr(model, "dim", None)
    if d is None or n is None:
        raise ValueError("input shape required for this module")
    side = math.isqrt(n)
    if side * side == n:
        return (d, side, side)
    return (d, 1, n)


def profile(model: Module, input_shape=None, mode="exact", name="") -> ComplexityReport:
    """Per-layer params and MACs for ``model`` on ``input_shape``."""
    _check_mode(mode)
    if input_shape is None:
        input_shape = default_input_shape(model)
    recs, _ = _walk(model, _split_shape(input_shape), mode, name or type(model).__name__.lower())
    return ComplexityReport(mode, tuple(input_shape), recs)


def count_params(model: Module, mode="exact") -> ComplexityReport:
    """Parameter counts (MAC column zeroed; params do not depend on shape)."""
    _check_mode(mode)
    shape = _nominal_shape(model)
    rep = profile(model, shape, mode)
    for r in rep.records:
        r.macs = 0
    rep.input_shape = None
    return rep


def _nominal_shape(model):
    if isinstance(model, Potter):
        return default_input_shape(model)
    dim = getattr(model, "dim", None)
    if dim is None:
        raise ValueError("cannot infer a nominal shape for this module")
    return (dim, 2, 2)


def count_macs(model: Module, input_shape, mode="exact") -> ComplexityReport:
    return profile(model, input_shape, mode)


def closed_form_pat(dim: int, n: int) -> tuple[int, int]:
    """One PAT block: 30D + 8D^2 params, 27DN + 8D^2N MACs."""
    if dim < 1 or n < 1:
        raise ValueError("D and N must be >= 1")
    return 30 * dim + 8 * dim * dim, 27 * dim * n + 8 * dim * dim * n


def closed_form_poolattn(dim: int, n: int) -> tuple[int, int]:
    return 30 * dim, 27 * dim * n


def closed_form_attention(dim: int, n: int) -> tuple[int, int]:
    if dim < 1 or n < 1:
        raise ValueError("D and N must be >= 1")
    return attention_closed_form(dim, n)


def closed_form_block(kind, dim, n):
    if kind == "pat":
        return closed_form_pat(dim, n), ("30D + 8D^2", "27DN + 8D^2N")
    if kind == "poolattn":
        return closed_form_poolattn(dim, n), ("30D", "27DN")
    if kind == "attention":
        return closed_form_attention(dim, n), ("4D^2 + 4D", "4DN^2 + 2D^2N")
    if kind == "pooling":
        return (0, 0), ("0", "0")
    raise ValueError(f"no closed form for {kind!r}")


def attach_closed_form(report: ComplexityReport, kind, dim, n):
    (p, m), (pf, mf) = closed_form_block(kind, dim, n)
    report.closed_form = {"kind": kind, "D": dim, "N": n, "params": p, "macs": m,
                          "params_formula": pf, "macs_formula": mf}
    return report


def scaling_audit(kind, dim, n_list, mode="table"):
    """MACs of one mixer versus patch count, with local growth exponents.

    Rows: (N, macs, ratio to previous row, log-log slope to previous row).
    The last slope approaches 1 for pooling attention and 2 for attention.
    """
    from .mixers import make_mixer

    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("N_list must be strictly ascending")
    mixer = make_mixer(kind, dim, rng=None)
    rows = []
    prev = None
    for n in n_list:
        macs = profile(mixer, (dim, 1, n), mode).total_macs
        if prev is None:
            rows.append((n, macs, None, None))
        else:
            pn, pm = prev
            ratio = macs / pm if pm else math.nan
            slope = math.log(ratio) / math.log(n / pn) if pm else math.nan
            rows.append((n, macs, ratio, slope))
        prev = (n, macs)
    return rows


def fitted_exponent(rows) -> float:
    """Least-squares slope of log(MACs) against log(N)."""
    pts = [(math.log(n), math.log(m)) for n, m, *_ in rows if m > 0]
    k = len(pts)
    mx = sum(p[0] for p in pts) / k
    my = sum(p[1] for p in pts) / k
    num = sum((x - mx) * (y - my) for x, y in pts)
    den = sum((x - mx) ** 2 for x, _ in pts)
    return num / den
