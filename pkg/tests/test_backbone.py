import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potter import tensor as T
from potter.backbone import (ClassifyHead, HmrTargets, PatchEmbed, PatchMerge, PatchSplit, Potter,
                             hmr_loss, merge_2x2, pixel_shuffle, random_image, regress_joints)
from potter.config import ModelConfig, get_preset
from potter.harness import random_config
from potter.mixers import zero_block


def small_cfg(**kw):
    base = dict(input_h=64, input_w=64, dims=(8, 16, 32, 64), depths=(1, 1, 1, 1),
                hr_depths=(1, 1, 1), head_kind="feature")
    base.update(kw)
    return ModelConfig(**base)


# -- patch embedding / merge / split ------------------------------------------------------

@pytest.mark.parametrize("kind", ["patchify", "overlap"])
def test_patch_embed_shape_and_zero_image(kind):
    emb = PatchEmbed(16, kind, rng=np.random.default_rng(0))
    assert emb(np.zeros((3, 32, 32))).shape == (16, 8, 8)
    assert not emb(np.zeros((3, 32, 32))).data.any()  # biases start at zero
    assert emb(np.zeros((3, 224, 224))).shape == (16, 56, 56)


def test_patchify_linear_matches_loop():
    rng = np.random.default_rng(1)
    emb = PatchEmbed(5, "patchify", rng=rng)
    img = rng.normal(size=(3, 8, 8))
    out = emb(img).data
    w, b = emb.proj.weight.data, emb.proj.bias.data
    for i in range(2):
        for j in range(2):
            vec = img[:, 4 * i:4 * i + 4, 4 * j:4 * j + 4].reshape(-1)
            np.testing.assert_allclose(out[:, i, j], vec @ w + b, atol=1e-13)


def test_patchify_rejects_indivisible():
    with pytest.raises(ValueError):
        PatchEmbed(4)(np.zeros((3, 30, 32)))


def test_merge_selector_example():
    m = PatchMerge(1, 1)
    m.proj.weight.data = np.array([[1.0], [0.0], [0.0], [0.0]])
    out = m(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    np.testing.assert_array_equal(out.data, [[[1.0]]])


def test_merge_concat_order():
    x = np.arange(8.0).reshape(2, 2, 2)
    cat = merge_2x2(T.reshape(x, (1, 2, 2, 2))).data.ravel()
    # neighbours (0,0),(1,0),(0,1),(1,1); channel k*D + d
    want = [x[d, a, b] for a, b in ((0, 0), (1, 0), (0, 1), (1, 1)) for d in range(2)]
    np.testing.assert_array_equal(cat, want)


@pytest.mark.parametrize("kind", ["linear", "conv"])
def test_merge_shapes_and_errors(kind):
    m = PatchMerge(64, 128, kind)
    assert m(np.zeros((64, 56, 56))).shape == (128, 28, 28)
    assert not m(np.zeros((64, 4, 4))).data.any()
    with pytest.raises(ValueError):
        m(np.zeros((64, 5, 4)))


def test_linear_merge_locality():
    rng = np.random.default_rng(2)
    m = PatchMerge(3, 4, rng=rng)
    x = rng.normal(size=(3, 4, 4))
    base = m(x).data
    y = x.copy()
    y[:, 2:4, 0:2] += 1.0
    changed = np.any(m(y).data != base, axis=0)
    assert changed.tolist() == [[False, False], [True, False]]


def test_split_hand_example():
    s = PatchSplit(4, 1, 2)
    s.proj.weight.data = np.eye(4)
    out = s(np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1, 1))
    np.testing.assert_array_equal(out.data, [[[1.0, 2.0], [3.0, 4.0]]])


def test_split_shapes_and_errors():
    assert PatchSplit(512, 64, 8)(np.zeros((512, 7, 7))).shape == (64, 56, 56)
    assert not PatchSplit(4, 2, 2)(np.zeros((4, 3, 3))).data.any()
    with pytest.raises(ValueError):
        PatchSplit(4, 1, 3)


def test_pixel_shuffle_loop_oracle():
    x = np.random.default_rng(3).normal(size=(1, 2 * 9, 2, 3))
    out = pixel_shuffle(T.as_tensor(x), 3).data
    for c in range(2):
        for a in range(3):
            for b in range(3):
                np.testing.assert_array_equal(out[0, c, a::3, b::3], x[0, c * 9 + a * 3 + b])


# -- head --------------------------------------------------------------------------------

def test_head_param_count_and_examples():
    assert ClassifyHead(512, 1000).num_params() == 513_000
    head = ClassifyHead(3, 2)
    head.fc.bias.data = np.array([0.5, -1.0])
    np.testing.assert_array_equal(head(np.random.default_rng(0).normal(size=(3, 2, 2))).data, [0.5, -1.0])
    head.fc.weight.data = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    x = np.stack([np.full((2, 2), 2.0), np.full((2, 2), 7.0), np.zeros((2, 2))])
    np.testing.assert_array_equal(head(x).data, [2.5, 6.0])


# -- streams -----------------------------------------------------------------------------

def test_basic_stream_shape_example():
    model = Potter(small_cfg())
    shapes = [o.shape for o in model.basic_stream(np.zeros((3, 64, 64)))]
    assert shapes == [(8, 16, 16), (16, 8, 8), (32, 4, 4), (64, 2, 2)]


def test_zero_depths_still_shape_correct():
    model = Potter(small_cfg(depths=(0, 0, 0, 0), hr_depths=(0, 0, 0), hr_enabled=True))
    x = np.zeros((3, 64, 64))
    assert [o.shape[0] for o in model.basic_stream(x)] == [8, 16, 32, 64]
    assert model.features(x).shape == (8, 16, 16)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_shape_ladder_random_configs(seed):
    cfg = random_config(np.random.default_rng(seed))
    model = Potter(cfg, seed=seed)
    outs = model.basic_stream(random_image(cfg, seed))
    for i, o in enumerate(outs):
        assert o.shape == (cfg.dims[i], cfg.input_h >> (i + 2), cfg.input_w >> (i + 2))
    if cfg.hr_enabled:
        assert model.hr_stream(outs).shape == (cfg.dims[0], cfg.input_h // 4, cfg.input_w // 4)


def test_hr_stream_with_zero_addends_returns_stage_one():
    model = Potter(small_cfg(hr_enabled=True))
    for stage in model.hr_stages:
        for blk in stage.blocks:
            zero_block(blk)
    x1 = np.random.default_rng(0).normal(size=(8, 16, 16))
    outs = (x1, np.zeros((16, 8, 8)), np.zeros((32, 4, 4)), np.zeros((64, 2, 2)))
    np.testing.assert_array_equal(model.hr_stream(outs).data, x1)


def test_hr_output_resolution_ignores_later_dims():
    for dims in [(8, 16, 32, 64), (8, 4, 12, 6)]:
        model = Potter(small_cfg(dims=dims, hr_enabled=True))
        assert model(np.zeros((3, 64, 64))).shape == (8, 16, 16)


def test_hr_stream_errors():
    model = Potter(small_cfg(hr_enabled=False))
    assert model(np.zeros((3, 64, 64))).shape == (64, 2, 2)
    with pytest.raises(ValueError):
        model.hr_stream([np.zeros((8, 16, 16))] * 4)
    hr = Potter(small_cfg(hr_enabled=True))
    bad = (np.zeros((8, 16, 16)), np.zeros((16, 4, 4)), np.zeros((32, 4, 4)), np.zeros((64, 2, 2)))
    with pytest.raises(ValueError, match="split output"):
        hr.hr_stream(bad)


def test_hr_stream_matches_manual_composition():
    model = Potter(small_cfg(hr_enabled=True), seed=4)
    outs = model.basic_stream(random_image(model.config, 4))
    state = outs[0]
    for split, stage, o in zip(model.hr_splits, model.hr_stages, outs[1:]):
        state = stage(T.add(split(o), state))
    np.testing.assert_array_equal(model.hr_stream(outs).data, state.data)


def test_batched_forward_matches_single():
    cfg = get_preset("micro")
    model = Potter(cfg, seed=1)
    xb = random_image(cfg, 0, batch=3)
    np.testing.assert_allclose(model(xb).data, np.stack([model(x).data for x in xb]), atol=1e-13)


def test_same_seed_same_weights():
    a, b = Potter(get_preset("micro"), seed=9), Potter(get_preset("micro"), seed=9)
    for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
        assert ka == kb and va.tobytes() == vb.tobytes()
    c = Potter(get_preset("micro"), seed=10)
    assert a.state_dict()["embed.proj.weight"].tobytes() != c.state_dict()["embed.proj.weight"].tobytes()


def test_init_statistics():
    w = Potter(get_preset("cls_s12"), seed=0).stages[3].blocks[0].mlp.fc1.weight.data
    assert np.abs(w).max() <= 0.04
    assert abs(w.std() - 0.02 * 0.8796) < 5e-4  # std of a normal truncated at 2 sigma


def test_load_state_dict_reports_every_problem():
    model = Potter(get_preset("micro"))
    state = model.state_dict()
    state.pop("embed.proj.weight")
    state.pop("head.fc.bias")
    state["extra"] = np.zeros(1)
    state["head.fc.weight"] = np.zeros((2, 2))
    with pytest.raises(ValueError) as err:
        model.load_state_dict(state)
    msg = str(err.value)
    for key in ("embed.proj.weight", "head.fc.bias", "extra", "head.fc.weight"):
        assert key in msg


# -- mesh losses -------------------------------------------------------------------------

def test_regress_joints_examples():
    rng = np.random.default_rng(0)
    mesh = rng.normal(size=(5, 3))
    onehot = np.zeros((2, 5))
    onehot[0, 3] = onehot[1, 0] = 1.0
    np.testing.assert_array_equal(regress_joints(mesh, onehot).data, mesh[[3, 0]])
    np.testing.assert_allclose(regress_joints(mesh, np.full((4, 5), 0.2)).data,
                               np.tile(mesh.mean(axis=0), (4, 1)), atol=1e-15)
    w = rng.normal(size=(3, 5))
    want = [[sum(w[k, v] * mesh[v, c] for v in range(5)) for c in range(3)] for k in range(3)]
    np.testing.assert_allclose(regress_joints(mesh, w).data, want, atol=1e-12)
    with pytest.raises(ValueError):
        regress_joints(mesh, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        regress_joints(np.zeros((5, 2)), np.zeros((2, 5)))


def targets(rng):
    return HmrTargets(rng.normal(size=10), rng.normal(size=72), rng.normal(size=(24, 3)))


def test_hmr_loss_examples():
    gt = targets(np.random.default_rng(0))
    assert hmr_loss(gt, gt).item() == 0.0
    b = gt.beta.copy()
    b[3] += 1.0
    assert hmr_loss(HmrTargets(b, gt.theta, gt.joints), gt).item() == pytest.approx(0.01, abs=1e-15)
    j = gt.joints.copy()
    j[5, 1] -= 1.0
    assert hmr_loss(HmrTargets(gt.beta, gt.theta, j), gt).item() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        hmr_loss(HmrTargets(gt.beta[:5], gt.theta, gt.joints), gt)


def test_hmr_loss_hand_arithmetic():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p, g = targets(rng), targets(rng)
        want = (0.01 * sum((a - c) ** 2 for a, c in zip(p.beta, g.beta))
                + 0.01 * sum((a - c) ** 2 for a, c in zip(p.theta, g.theta))
                + sum((a - c) ** 2 for a, c in zip(p.joints.ravel(), g.joints.ravel())))
        assert abs(hmr_loss(p, g).item() - want) < 1e-12
