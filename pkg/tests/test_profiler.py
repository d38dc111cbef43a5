import json

import numpy as np
import pytest

from potter.backbone import Potter
from potter.config import get_preset
from potter.mixers import Attention, PatBlock, PoolAttn, Pooling
from potter.profiler import (closed_form_attention, closed_form_pat, closed_form_poolattn, count_macs,
                             count_params, fitted_exponent, profile, scaling_audit)


def test_closed_form_examples():
    assert closed_form_pat(1, 1) == (38, 35)
    assert closed_form_pat(512, 196) == (2_112_512, 413_751_296)
    assert closed_form_attention(1, 1) == (8, 6)
    assert closed_form_attention(512, 196) == (1_050_624, 181_436_416)
    assert closed_form_poolattn(512, 196) == (15_360, 2_709_504)
    with pytest.raises(ValueError):
        closed_form_pat(0, 3)


def test_poolattn_to_attention_param_ratio():
    ratio = closed_form_poolattn(512, 196)[0] / closed_form_attention(512, 196)[0]
    assert ratio == pytest.approx(0.0146, abs=1e-4)


@pytest.mark.parametrize("mode", ["table", "exact"])
def test_mixer_param_counts(mode):
    assert count_params(PoolAttn(512), mode).total_params == 15_360
    assert count_params(Attention(512), mode).total_params == 1_050_624
    assert count_params(Pooling(512), mode).total_params == 0


def test_table_mode_pat_matches_formula():
    rng = np.random.default_rng(0)
    for _ in range(20):
        d, h, w = int(rng.integers(1, 64)), int(rng.integers(1, 20)), int(rng.integers(1, 20))
        rep = profile(PatBlock(d), (d, h, w), "table")
        assert (rep.total_params, rep.total_macs) == closed_form_pat(d, h * w)


def test_exact_mode_adds_norms_biases_and_squeezes():
    d, h, w = 12, 5, 7
    n = h * w
    rep = profile(PatBlock(d), (d, h, w), "exact")
    p, m = closed_form_pat(d, n)
    assert rep.total_params == p + 4 * d + 4 * d + d  # two LNs, fc1 and fc2 biases
    # LN: 2 MACs per element, twice; two squeezed outer products at D*N each
    assert rep.total_macs == m + 2 * (2 * d * n) + 2 * d * n
    assert rep.total_params == PatBlock(d).num_params()


def test_exact_params_equal_stored_scalars():
    for name in ("micro", "micro_hr", "cls_s12"):
        model = Potter(get_preset(name), init=False)
        assert count_params(model, "exact").total_params == model.num_params()


def test_mac_examples():
    assert profile(PoolAttn(512), (512, 14, 14), "table").total_macs == 2_709_504
    assert profile(PoolAttn(512), (512, 16, 16), "table").total_macs == 3_538_944
    assert profile(Attention(512), (512, 14, 14), "table").total_macs == 181_436_416
    ffn = profile(PatBlock(512).mlp, (512, 14, 14), "table").total_macs
    assert ffn == 8 * 512 * 512 * 196 == 411_041_792


def test_exact_attention_uses_standard_counting():
    d, n = 16, 9
    assert profile(Attention(d), (d, 3, 3), "exact").total_macs == 4 * d * d * n + 2 * d * n * n


def test_params_shape_invariant_and_macs_linear_in_batch():
    model = Potter(get_preset("micro_hr"), init=False)
    a = profile(model, (3, 32, 32))
    b = profile(model, (3, 64, 64))
    c = profile(model, (5, 3, 32, 32))
    assert a.total_params == b.total_params == c.total_params
    assert c.total_macs == 5 * a.total_macs
    assert isinstance(a.total_macs, int)


def test_count_macs_alias_and_report_formats():
    rep = count_macs(PoolAttn(4), (4, 2, 2))
    d = json.loads(rep.to_json())
    assert d["total_macs"] == rep.total_macs and d["mode"] == "exact"
    assert "TOTAL" in rep.to_text()


def test_bad_mode():
    with pytest.raises(ValueError):
        profile(PoolAttn(4), (4, 2, 2), "rough")


def test_scaling_audit_examples():
    rows = scaling_audit("poolattn", 512, [196, 392, 784])
    assert [r[2] for r in rows[1:]] == [2.0, 2.0]
    assert fitted_exponent(rows) == pytest.approx(1.0, abs=1e-12)
    att = scaling_audit("attention", 512, [196, 392])
    want = (4 * 512 * 392 ** 2 + 2 * 512 ** 2 * 392) / 181_436_416
    assert att[1][2] == pytest.approx(want, rel=1e-15)
    logits = [2 * 512 * n * n for n in (196, 392)]
    assert logits[1] / logits[0] == 4.0
    big = scaling_audit("attention", 64, [3136, 6272, 12544, 25088])
    assert big[-1][3] > 1.9
    with pytest.raises(ValueError):
        scaling_audit("poolattn", 8, [4, 4])
