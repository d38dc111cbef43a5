import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from potter import tensor as T
from potter.mixers import (Attention, PatBlock, PoolAttn, Pooling, embedwise_pool_attention, factorize,
                           make_mixer, patchwise_pool_attention, zero_block)
from potter.tensor import Tensor

from oracles import identity_kernels, loop_dw, loop_embedwise, loop_patchwise


# -- frozen hand values ---------------------------------------------------------------

X22 = np.array([[[1.0, 2.0], [3.0, 4.0]]])


def test_patchwise_hand_example():
    np.testing.assert_array_equal(patchwise_pool_attention(X22).data, [[[3.0, 4.5], [7.0, 10.5]]])


def test_embedwise_hand_example():
    x = np.array([1.0, 2.0, 3.0, 4.0]).reshape(4, 1, 1)
    out = embedwise_pool_attention(x, 2, 2).data.ravel()
    np.testing.assert_array_equal(out, [3.0, 4.5, 7.0, 10.5])


def test_poolattn_identity_projections_hand_example():
    m = PoolAttn(1)
    for p in (m.proj1, m.proj2, m.proj3):
        p.weight.data = identity_kernels(1)
    np.testing.assert_array_equal(m(X22).data, [[[4.0, 8.5], [16.0, 26.5]]])


def test_constant_and_zero_inputs():
    c = np.full((4, 3, 3), -1.5)
    np.testing.assert_array_equal(patchwise_pool_attention(c).data, 2.25)
    np.testing.assert_array_equal(embedwise_pool_attention(c, 2, 2).data, 2.25)
    assert not patchwise_pool_attention(np.zeros((2, 3, 3))).data.any()


def test_poolattn_zero_proj3_gives_bias():
    m = PoolAttn(2, rng=np.random.default_rng(0))
    m.proj3.weight.data = np.zeros((2, 3, 3))
    m.proj3.bias.data = np.array([0.25, -1.0])
    out = m(np.random.default_rng(1).normal(size=(2, 3, 3))).data
    assert np.all(out[0] == 0.25) and np.all(out[1] == -1.0)


def test_embedwise_rejects_bad_factorization():
    with pytest.raises(ValueError):
        embedwise_pool_attention(np.zeros((6, 2, 2)), 2, 2)
    with pytest.raises(ValueError):
        PoolAttn(6, factorization=(2, 2))


@pytest.mark.parametrize("dim,want", [(1, (1, 1)), (4, (2, 2)), (12, (3, 4)), (64, (8, 8)),
                                      (320, (16, 20)), (7, (1, 7)), (512, (16, 32))])
def test_factorize(dim, want):
    assert factorize(dim) == want


# -- equivalence with the loop oracles on 100 random inputs -------------------------------

def test_pool_attention_matches_loop_oracles_on_100_inputs():
    rng = np.random.default_rng(123)
    worst = 0.0
    for _ in range(100):
        d = int(rng.choice([1, 2, 4, 6, 8, 12]))
        h, w = (int(v) for v in rng.integers(1, 5, size=2))
        dh, dw = factorize(d)
        x = rng.uniform(-1, 1, size=(d, h, w))
        x1 = patchwise_pool_attention(x).data
        x3 = embedwise_pool_attention(x, dh, dw).data
        worst = max(worst, np.abs(x1 - loop_patchwise(x)).max(),
                    np.abs(x3 - loop_embedwise(x, dh, dw)).max())
        m = PoolAttn(d, rng=rng)
        want = loop_dw(loop_dw(loop_patchwise(x), m.proj1.weight.data, m.proj1.bias.data)
                       + loop_dw(loop_embedwise(x, dh, dw), m.proj2.weight.data, m.proj2.bias.data),
                       m.proj3.weight.data, m.proj3.bias.data)
        worst = max(worst, np.abs(m(x).data - want).max())
    assert worst < 1e-12


def test_batched_equals_unbatched():
    rng = np.random.default_rng(7)
    m = PoolAttn(6, rng=rng)
    xb = rng.normal(size=(3, 6, 4, 5))
    stacked = np.stack([m(x).data for x in xb])
    np.testing.assert_allclose(m(xb).data, stacked, rtol=0, atol=1e-14)


# -- structural properties ----------------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.sampled_from([4, 6, 8, 12]), st.integers(1, 5), st.integers(1, 5))
def test_attention_maps_have_rank_at_most_one(seed, d, h, w):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(d, h, w))
    x1 = patchwise_pool_attention(x).data
    for c in range(d):
        assert np.linalg.matrix_rank(x1[c], tol=1e-10) <= 1
    dh, dw = factorize(d)
    x3 = embedwise_pool_attention(x, dh, dw).data
    for i in range(h):
        for j in range(w):
            assert np.linalg.matrix_rank(x3[:, i, j].reshape(dh, dw), tol=1e-10) <= 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.permutations(range(5)))
def test_patchwise_is_channel_equivariant(seed, perm):
    x = np.random.default_rng(seed).normal(size=(5, 3, 4))
    perm = list(perm)
    np.testing.assert_array_equal(patchwise_pool_attention(x[perm]).data,
                                  patchwise_pool_attention(x).data[perm])


def test_embedwise_output_patch_depends_only_on_its_patch():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(6, 3, 3))
    base = embedwise_pool_attention(x, 2, 3).data
    y = x.copy()
    y[:, 1, 2] += rng.normal(size=6)
    out = embedwise_pool_attention(y, 2, 3).data
    changed = np.any(out != base, axis=0)
    assert changed[1, 2] and changed.sum() == 1
    single = embedwise_pool_attention(x[:, 1:2, 2:3], 2, 3).data[:, 0, 0]
    np.testing.assert_array_equal(base[:, 1, 2], single)


@pytest.mark.parametrize("mixer", ["poolattn", "attention"])
def test_zero_block_is_identity(mixer):
    blk = zero_block(PatBlock(8, mixer, rng=np.random.default_rng(0)))
    x = np.random.default_rng(1).normal(size=(8, 4, 4))
    out = blk(x)
    assert out.shape == (8, 4, 4)
    np.testing.assert_array_equal(out.data, x)


def test_zero_block_with_pooling_keeps_mixer_branch():
    # pooling has no weights, so only the MLP branch vanishes
    blk = zero_block(PatBlock(4, "pooling"))
    x = np.random.default_rng(2).normal(size=(4, 3, 3))
    ln = T.layer_norm(x, np.ones(4), np.zeros(4)).data
    want = x + T.avg_pool3x3(ln).data - ln
    np.testing.assert_allclose(blk(x).data, want, atol=1e-15)


def test_pat_block_preserves_shape_and_changes_values():
    blk = PatBlock(8, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(8, 4, 4))
    out = blk(x).data
    assert out.shape == x.shape and not np.array_equal(out, x)


def test_pat_block_gradcheck_three_patches():
    rng = np.random.default_rng(11)
    blk = PatBlock(4, rng=rng)
    for p in blk.parameters():
        p.data = rng.uniform(-0.5, 0.5, size=p.shape)
    x = Tensor(rng.uniform(-1, 1, size=(4, 1, 3)), requires_grad=True)
    leaves = [x] + blk.parameters()
    for t in leaves:
        t.requires_grad = True
    with T.GradTape() as tape:
        out = T.tsum(blk(x))
    grads = tape.backward(out, wrt=leaves)
    for t in leaves:
        orig = t.data

        def f(a, t=t):
            t.data = a
            return blk(x).data.sum()

        num = T.finite_diff_grad(f, orig)
        t.data = orig
        assert T.grad_rel_error(grads[t], num) < 1e-4


# -- baselines -------------------------------------------------------------------------

def test_pooling_mixer_examples():
    c = Pooling()(np.full((2, 5, 5), 3.0)).data
    assert np.all(c[:, 1:4, 1:4] == 0.0)
    assert c[0, 0, 0] == pytest.approx(3.0 * 4 / 9 - 3.0)
    assert not Pooling()(np.zeros((2, 3, 3))).data.any()
    assert Pooling(8).num_params() == 0


def test_attention_zero_query_key_is_uniform():
    rng = np.random.default_rng(0)
    m = Attention(3, rng=rng)
    for lin in (m.q, m.k):
        lin.weight.data = np.zeros((3, 3))
        lin.bias.data = rng.normal(size=3)
    x = rng.normal(size=(3, 2, 2))
    tokens = x.reshape(3, 4).T
    v = tokens @ m.v.weight.data + m.v.bias.data
    want = v.mean(axis=0) @ m.o.weight.data + m.o.bias.data
    out = m(x).data.reshape(3, 4).T
    np.testing.assert_allclose(out, np.tile(want, (4, 1)), atol=1e-14)


def test_attention_single_token_and_loop_oracle():
    rng = np.random.default_rng(1)
    m = Attention(4, rng=rng)
    x = rng.normal(size=(4, 1, 1))
    want = (x.ravel() @ m.v.weight.data + m.v.bias.data) @ m.o.weight.data + m.o.bias.data
    np.testing.assert_allclose(m(x).data.ravel(), want, atol=1e-14)

    x = rng.normal(size=(4, 2, 3))
    tok = x.reshape(4, 6).T
    q = tok @ m.q.weight.data + m.q.bias.data
    k = tok @ m.k.weight.data + m.k.bias.data
    v = tok @ m.v.weight.data + m.v.bias.data
    out = np.zeros_like(tok)
    for i in range(6):
        s = [math.exp(q[i] @ k[j] / 2.0) for j in range(6)]
        z = sum(s)
        out[i] = sum(s[j] / z * v[j] for j in range(6)) @ m.o.weight.data + m.o.bias.data
    np.testing.assert_allclose(m(x).data.reshape(4, 6).T, out, atol=1e-12)


def test_attention_param_count_at_512():
    assert Attention(512).num_params() == 1_050_624


def test_make_mixer_rejects_unknown():
    with pytest.raises(ValueError):
        make_mixer("conv", 4)
