import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import matmul_loops, simplex_projection_bruteforce, softmax_ref
from sparse_marl.attention import (
    AttentionParams,
    EntitySet,
    attend_dense,
    attend_heads,
    attend_sparse,
    embed_entities,
    project_qkv,
)
from sparse_marl.errors import ShapeMismatch
from sparse_marl.numerics import Linear, Tensor


def _params(d_e, d_x, seed=0):
    return AttentionParams.init(np.random.default_rng(seed), d_e, d_x)


def _attn_ref(Q, K, V, norm):
    """Row-by-row reference: normalise scaled dot products, then weight V."""
    d = Q.shape[1]
    logits = matmul_loops(Q, K.T) / math.sqrt(d)
    W = np.array([norm(row) for row in logits])
    return matmul_loops(W, V), W


# -- EntitySet ---------------------------------------------------------------


def test_entity_set_validates_shapes():
    with pytest.raises(ShapeMismatch):
        EntitySet(np.zeros((0, 3)), np.zeros(0, bool))
    with pytest.raises(ShapeMismatch):
        EntitySet(np.zeros((2, 3)), np.zeros(3, bool))


# -- embedding and projections ----------------------------------------------


def test_embed_zero_params():
    p = _params(4, 3)
    p.embed = Linear(Tensor(np.zeros((4, 3))), Tensor(np.zeros(3)))
    X = embed_entities(EntitySet(np.ones((5, 4)), np.ones(5, bool)), p)
    np.testing.assert_array_equal(X.data, np.zeros((5, 3)))


def test_embed_identity():
    p = _params(4, 4)
    p.embed = Linear(Tensor(np.eye(4)), Tensor(np.zeros(4)))
    obs = np.random.default_rng(1).normal(size=(3, 4))
    np.testing.assert_array_equal(embed_entities(EntitySet(obs, np.ones(3, bool)), p).data, obs)


def test_embed_matches_per_row_reference():
    p = _params(5, 3, seed=2)
    obs = np.random.default_rng(3).normal(size=(6, 5))
    X = embed_entities(obs, p).data
    for m in range(6):
        ref = [sum(obs[m, k] * p.embed.W.data[k, j] for k in range(5)) + p.embed.b.data[j]
               for j in range(3)]
        np.testing.assert_allclose(X[m], ref, atol=1e-12)


def test_embed_width_mismatch():
    with pytest.raises(ShapeMismatch):
        embed_entities(np.zeros((2, 3)), _params(4, 2))


def test_project_identity_and_zero():
    p = _params(2, 3)
    p.W_Q = p.W_K = p.W_V = Tensor(np.eye(3))
    X = np.random.default_rng(0).normal(size=(4, 3))
    for out in project_qkv(Tensor(X), p):
        np.testing.assert_array_equal(out.data, X)
    for out in project_qkv(Tensor(np.zeros((4, 3))), _params(2, 3)):
        np.testing.assert_array_equal(out.data, 0.0)


def test_project_matches_loops():
    p = _params(2, 3, seed=5)
    X = np.random.default_rng(6).normal(size=(4, 3))
    Q, K, V = project_qkv(Tensor(X), p)
    np.testing.assert_allclose(Q.data, matmul_loops(X, p.W_Q.data), atol=1e-12)
    np.testing.assert_allclose(K.data, matmul_loops(X, p.W_K.data), atol=1e-12)
    np.testing.assert_allclose(V.data, matmul_loops(X, p.W_V.data), atol=1e-12)


def test_project_width_mismatch():
    with pytest.raises(ShapeMismatch):
        project_qkv(Tensor(np.zeros((2, 4))), _params(2, 3))


# -- heads -------------------------------------------------------------------


@pytest.mark.parametrize("attend", [attend_dense, attend_sparse])
def test_single_entity_returns_value_row(attend):
    rng = np.random.default_rng(0)
    Q, K, V = rng.normal(size=(3, 1, 4))
    Y, W = attend(Q, K, V)
    np.testing.assert_array_equal(W.data, [[1.0]])
    np.testing.assert_allclose(Y.data, V, atol=1e-15)


@pytest.mark.parametrize("attend", [attend_dense, attend_sparse])
def test_identical_keys_average_values(attend):
    rng = np.random.default_rng(1)
    Q = rng.normal(size=(4, 3))
    K = np.tile(rng.normal(size=(1, 3)), (4, 1))
    V = rng.normal(size=(4, 3))
    Y, _ = attend(Q, K, V)
    np.testing.assert_allclose(Y.data, np.tile(V.mean(axis=0), (4, 1)), atol=1e-12)


def test_dense_matches_reference_pipeline():
    rng = np.random.default_rng(2)
    Q, K, V = rng.normal(size=(3, 2, 3))
    Y, W = attend_dense(Q, K, V)
    Y_ref, W_ref = _attn_ref(Q, K, V, softmax_ref)
    np.testing.assert_allclose(W.data, W_ref, atol=1e-12)
    np.testing.assert_allclose(Y.data, Y_ref, atol=1e-12)


def test_sparse_matches_reference_pipeline():
    rng = np.random.default_rng(3)
    Q, K, V = rng.normal(scale=2.0, size=(3, 3, 4))
    Y, W = attend_sparse(Q, K, V)
    Y_ref, W_ref = _attn_ref(Q, K, V, simplex_projection_bruteforce)
    np.testing.assert_allclose(W.data, W_ref, atol=1e-12)
    np.testing.assert_allclose(Y.data, Y_ref, atol=1e-12)


def test_sparse_aligned_key_selects_its_value_row():
    # logit gap of 10 -> one-hot weights, output is exactly V[1]
    Q = np.array([[10.0, 0.0]])
    K = np.array([[0.0, 0.0], [math.sqrt(2.0), 0.0], [-math.sqrt(2.0), 0.0]])
    Q = np.tile(Q, (3, 1))
    V = np.arange(6.0).reshape(3, 2)
    Y, W = attend_sparse(Q, K, V)
    np.testing.assert_array_equal(W.data, np.tile([0.0, 1.0, 0.0], (3, 1)))
    np.testing.assert_array_equal(Y.data, np.tile(V[1], (3, 1)))


def test_equal_logits_heads_agree():
    Q = np.zeros((4, 3))
    V = np.random.default_rng(4).normal(size=(4, 3))
    Yd, Wd = attend_dense(Q, np.ones((4, 3)), V)
    Ys, Ws = attend_sparse(Q, np.ones((4, 3)), V)
    np.testing.assert_allclose(Wd.data, 0.25, atol=1e-15)
    np.testing.assert_allclose(Ws.data, 0.25, atol=1e-15)
    np.testing.assert_allclose(Yd.data, Ys.data, atol=1e-15)


def test_tiny_spread_heads_converge():
    rng = np.random.default_rng(5)
    Q = rng.uniform(-1, 1, size=(5, 4)) * 1e-6 / 8
    K = rng.uniform(-1, 1, size=(5, 4))
    V = rng.normal(size=(5, 4))
    _, Wd = attend_dense(Q, K, V)
    _, Ws = attend_sparse(Q, K, V)
    assert np.max(np.abs(Wd.data - Ws.data)) <= 1e-6


def test_masked_keys_get_exact_zero_weight():
    rng = np.random.default_rng(6)
    Q, K, V = rng.normal(size=(3, 5, 4))
    mask = np.array([True, False, True, False, True])
    for attend in (attend_dense, attend_sparse):
        _, W = attend(Q, K, V, mask)
        assert np.all(W.data[:, ~mask] == 0.0)
        np.testing.assert_allclose(W.data.sum(axis=1), 1.0, atol=1e-12)


def test_self_column_survives_empty_mask():
    rng = np.random.default_rng(7)
    Q, K, V = rng.normal(size=(3, 3, 2))
    for attend in (attend_dense, attend_sparse):
        _, W = attend(Q, K, V, np.zeros(3, bool))
        np.testing.assert_array_equal(W.data, np.tile([1.0, 0.0, 0.0], (3, 1)))


def test_heads_share_one_logit_matrix():
    rng = np.random.default_rng(8)
    Q, K, V = rng.normal(size=(3, 4, 3))
    out = attend_heads(Q, K, V)
    np.testing.assert_array_equal(out["dense"][1].data, attend_dense(Q, K, V)[1].data)
    np.testing.assert_array_equal(out["sparse"][1].data, attend_sparse(Q, K, V)[1].data)


def test_shared_params_move_both_heads():
    p = _params(3, 4, seed=9)
    obs = np.random.default_rng(10).normal(size=(5, 3))

    def run():
        out = attend_heads(*project_qkv(embed_entities(obs, p), p))
        return out["dense"][0].data.copy(), out["sparse"][0].data.copy()

    d0, s0 = run()
    p.W_V.data[0, 0] += 0.5
    d1, s1 = run()
    assert not np.allclose(d0, d1) and not np.allclose(s0, s1)


def test_unknown_head_rejected():
    with pytest.raises(ValueError):
        attend_heads(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), heads=("mystery",))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_heads_permutation_equivariant(m, seed):
    rng = np.random.default_rng(seed)
    Q, K, V = rng.normal(size=(3, m, 3))
    perm = rng.permutation(m)
    for attend in (attend_dense, attend_sparse):
        Y, W = attend(Q, K, V)
        Yp, Wp = attend(Q[perm], K[perm], V[perm])
        np.testing.assert_allclose(Yp.data, Y.data[perm], atol=1e-12)
        np.testing.assert_allclose(Wp.data, W.data[perm][:, perm], atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**31 - 1))
def test_weight_rows_on_simplex(m, seed):
    rng = np.random.default_rng(seed)
    Q, K, V = rng.normal(scale=3.0, size=(3, m, 4))
    mask = rng.random(m) < 0.6
    for attend in (attend_dense, attend_sparse):
        _, W = attend(Q, K, V, mask)
        assert np.all(W.data >= 0)
        np.testing.assert_allclose(W.data.sum(axis=1), 1.0, atol=1e-9)
