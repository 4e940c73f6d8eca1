import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamh.nets import (
    Actor,
    Critic,
    Embedding,
    embed_obs,
    entropy,
    gat_attention,
    gat_layer,
    graph_mask,
    joint_value,
    one_hot,
)
from hamh.nn import F, ShapeError, Tensor, grad_check
from hamh.rng import substream


def zero_all(params):
    for p in params.values():
        p.data[...] = 0.0


def small_actor(k=4, n=3, seed=0, hidden=16, **kw):
    return Actor(n_agents=n, k=k, seed=seed, hidden=hidden, **kw)


# ---------------------------------------------------------------- embedding


def test_embedding_zero_network():
    emb = Embedding(12, 8, np.random.default_rng(0))
    zero_all(emb.parameters("e"))
    assert np.all(embed_obs(np.arange(12.0), emb).data == 0.0)


def test_embedding_bias_pass_through():
    emb = Embedding(12, 12, np.random.default_rng(0))
    emb.W_d.data[...] = np.eye(12)
    emb.b_d.data[...] = 0.0
    emb.W_c.data[...] = 0.0
    emb.b_c.data[...] = 1.0
    assert np.all(embed_obs(np.arange(12.0), emb).data == 1.0)


def test_embedding_distinguishes_inputs():
    emb = Embedding(12, 128, substream(0, "init", "actor"))
    a = embed_obs(np.zeros(12), emb).data
    b = embed_obs(np.ones(12), emb).data
    # W_d columns summing to zero is the only way these could coincide
    assert not np.allclose(emb.W_d.data.sum(axis=0), 0.0)
    assert not np.allclose(a, b)


def test_embedding_dimension_mismatch():
    emb = Embedding(12, 8, np.random.default_rng(0))
    with pytest.raises(ShapeError):
        embed_obs(np.zeros(11), emb)


# ---------------------------------------------------------------- GRU


def test_gru_zero_parameters_halves_state():
    actor = small_actor(hidden=5)
    for p in (actor.gru_W, actor.gru_U, actor.gru_b):
        p.data[...] = 0.0
    h0 = np.array([[1.0, -2.0, 0.5, 3.0, 0.0]])
    out = actor.gru_step(np.random.default_rng(1).normal(size=(1, 5)), h0).data
    assert np.allclose(out, 0.5 * h0, atol=1e-15)


def test_gru_zero_everything_stays_zero():
    actor = small_actor(hidden=5)
    for p in (actor.gru_W, actor.gru_U, actor.gru_b):
        p.data[...] = 0.0
    assert np.all(actor.gru_step(np.zeros((1, 5)), np.zeros((1, 5))).data == 0.0)


def test_gru_shape_mismatch():
    actor = small_actor(hidden=5)
    with pytest.raises(ShapeError):
        actor.gru_step(np.zeros((1, 4)), np.zeros((1, 5)))


def test_fused_unroll_matches_stepwise():
    actor = small_actor(hidden=6)
    rng = np.random.default_rng(3)
    xs = rng.normal(size=(7, 2, 6))
    h = rng.normal(size=(2, 6))
    fused = actor.gru_sequence(Tensor(xs), h).data
    steps = []
    for t in range(7):
        h = actor.gru_step(xs[t], h).data
        steps.append(h)
    assert np.allclose(fused, np.stack(steps), atol=1e-13)


def test_gru_gradient():
    actor = small_actor(hidden=4)
    rng = np.random.default_rng(0)
    x, h = Tensor(rng.normal(size=(2, 4))), Tensor(rng.normal(size=(2, 4)))
    err = grad_check(lambda: F.sum(actor.gru_step(x, h)), [actor.gru_W, actor.gru_U, actor.gru_b])
    assert err < 1e-4


# ---------------------------------------------------------------- policy heads


def test_zero_head_is_uniform():
    actor = small_actor()
    actor.head_W.data[...] = 0.0
    actor.head_b.data[...] = 0.0
    p = actor.action_policy(np.ones((1, 16))).data
    assert np.allclose(p, 0.125, atol=0)


def test_saturated_logit():
    actor = small_actor()
    actor.head_W.data[...] = 0.0
    actor.head_b.data[...] = 0.0
    actor.head_b.data[5] = 1000.0
    p = actor.action_policy(np.zeros((1, 16))).data[0]
    assert np.all(np.isfinite(p))
    assert abs(p[5] - 1.0) < 1e-12


def test_sampled_actions_match_probabilities():
    from hamh.algo import sample_actions

    p = np.array([0.05, 0.1, 0.2, 0.3, 0.15, 0.1, 0.05, 0.05])
    n = 100_000
    draws = sample_actions(np.tile(p, (n, 1)), substream(0, "policy"))
    freq = np.bincount(draws, minlength=8)
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(freq - n * p) < 3 * sigma)
    # joint goodness of fit as well
    from scipy.stats import chisquare

    assert chisquare(freq, n * p).pvalue > 1e-3


def test_zero_hyper_head_uniform():
    actor = small_actor(k=5)
    actor.W_e.data[...] = 0.0
    actor.b_e.data[...] = 0.0
    w = actor.hyper_action(np.random.default_rng(0).normal(size=(2, 16)), np.array([0, 2])).data
    assert np.allclose(w, 0.2, atol=0)


def test_hyper_action_k2_format():
    actor = small_actor(k=2)
    w = actor.hyper_action(np.random.default_rng(0).normal(size=(1, 16)), np.array([1])).data[0]
    assert w.shape == (2,) and abs(w.sum() - 1.0) < 1e-12 and np.all(w >= 0)


def test_agent_index_changes_hyper_action():
    actor = Actor(n_agents=3, k=4, seed=0)
    h = np.tile(np.random.default_rng(0).normal(size=128), (3, 1))
    w = actor.hyper_action(h, np.arange(3)).data
    rows = actor.W_e.data[128:]
    assert not np.allclose(rows[0], rows[1]) and not np.allclose(rows[1], rows[2])
    assert not np.allclose(w[0], w[1]) and not np.allclose(w[1], w[2])


def test_agent_index_out_of_range():
    actor = small_actor(n=3)
    with pytest.raises(IndexError):
        actor.hyper_action(np.zeros((1, 16)), np.array([3]))
    with pytest.raises(IndexError):
        one_hot(-1, 3)


def test_actor_without_hyper_head():
    actor = small_actor(k=1, use_hyper=False)
    w = actor.hyper_action(np.zeros((2, 16)), np.array([0, 1])).data
    assert w.tolist() == [[1.0], [1.0]]
    assert actor.hyper_parameters() == {}
    with pytest.raises(ValueError):
        small_actor(k=2, use_hyper=False)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 8, 32]), st.floats(0.1, 30.0))
def test_policy_outputs_are_simplex(seed, k, scale):
    actor = small_actor(k=k, seed=seed % 1000)
    h = np.random.default_rng(seed).normal(size=(4, 16)) * scale
    for out in (actor.action_policy(h).data, actor.hyper_action(h, np.array([0, 1, 2, 0])).data):
        assert np.all(out >= 0)
        assert np.all(np.abs(out.sum(-1) - 1.0) < 1e-9)


# ---------------------------------------------------------------- entropy / joint value


def test_entropy_extremes():
    k = 32
    w = np.full(k, 1.0 / k)
    assert entropy(Tensor(w), Tensor(np.log(w))).data == pytest.approx(np.log(k), abs=1e-15)
    logits = np.full(k, -1e4)
    logits[3] = 0.0
    ls = F.log_softmax_lastdim(Tensor(logits))
    assert entropy(F.softmax_lastdim(Tensor(logits)), ls).data == 0.0


def test_joint_value_examples():
    z = Tensor([1.0, 2.0, 3.0, 4.0])
    assert joint_value(z, Tensor([0.1, 0.2, 0.3, 0.4])).data == pytest.approx(3.0, abs=1e-15)
    assert joint_value(z, Tensor([0.0, 0.0, 1.0, 0.0])).data == 3.0
    assert joint_value(z, Tensor([0.25] * 4)).data == pytest.approx(2.5, abs=1e-15)
    with pytest.raises(ShapeError):
        joint_value(z, Tensor([0.5, 0.5]))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 10), st.integers(0, 10_000))
def test_joint_value_bounded_and_linear(k, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=k) * 10
    w = rng.dirichlet(np.ones(k))
    v = joint_value(Tensor(z), Tensor(w)).data
    assert z.min() - 1e-12 <= v <= z.max() + 1e-12
    z2 = rng.normal(size=k)
    assert joint_value(Tensor(z + 2 * z2), Tensor(w)).data == pytest.approx(v + 2 * np.dot(z2, w), abs=1e-10)


def test_k1_collapse_joint_value():
    z = Tensor([[4.2], [-1.0]])
    assert joint_value(z, Tensor(np.ones((2, 1)))).data.tolist() == [4.2, -1.0]


# ---------------------------------------------------------------- GAT


def _layer(seed=0, d_in=6, d=3, heads=2):
    rng = np.random.default_rng(seed)
    return [
        (Tensor(rng.normal(size=(d_in, d)), requires_grad=True), Tensor(rng.normal(size=(2 * d,)), requires_grad=True))
        for _ in range(heads)
    ]


def test_graph_mask_forces_self_loops():
    m = graph_mask(np.zeros((3, 3)))
    assert np.all(np.diag(m) == 0.0) and m[0, 1] < -1e29


def test_isolated_node_attends_to_itself():
    heads = _layer(heads=1)
    X = np.random.default_rng(1).normal(size=(3, 6))
    G = np.array([[1, 1, 0], [1, 1, 0], [0, 0, 1]])
    alpha = gat_attention(X, G, *heads[0])
    assert alpha[2].tolist() == [0.0, 0.0, 1.0]
    W = heads[0][0].data
    out = gat_layer(X, G, heads, "concat").data
    expected = X[2] @ W
    assert np.allclose(out[2], np.where(expected > 0, expected, np.expm1(expected)), atol=1e-14)


def test_identical_nodes_split_attention():
    heads = _layer(heads=1)
    X = np.tile(np.random.default_rng(1).normal(size=6), (2, 1))
    alpha = gat_attention(X, np.ones((2, 2)), *heads[0])
    assert np.allclose(alpha, 0.5, atol=1e-15)


def _dense_gat_oracle(X, G, heads, combine, slope=0.2):
    n = X.shape[0]
    outs = []
    for W, a in heads:
        W, a = W.data, a.data
        d = W.shape[1]
        Wx = X @ W
        alpha = np.zeros((n, n))
        for i in range(n):
            nb = [j for j in range(n) if G[i, j] or i == j]
            e = np.array([np.concatenate([Wx[i], Wx[j]]) @ a for j in nb])
            e = np.where(e > 0, e, slope * e)
            e = np.exp(e - e.max())
            alpha[i, nb] = e / e.sum()
        agg = alpha @ Wx
        outs.append(np.where(agg > 0, agg, np.expm1(agg)))
        assert np.allclose(alpha.sum(1), 1.0, atol=1e-12)
        _ = d
    return np.concatenate(outs, -1) if combine == "concat" else np.mean(outs, axis=0)


@pytest.mark.parametrize("combine", ["concat", "mean"])
def test_gat_matches_dense_oracle_on_path(combine):
    heads = _layer(seed=0, heads=4)
    X = np.random.default_rng(0).normal(size=(3, 6))
    G = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    out = gat_layer(X, G, heads, combine).data
    assert np.allclose(out, _dense_gat_oracle(X, G, heads, combine), atol=1e-10)


def test_gat_attention_rows_sum_to_one():
    heads = _layer(heads=1)
    X = np.random.default_rng(2).normal(size=(5, 6)) * 10
    G = (np.random.default_rng(3).uniform(size=(5, 5)) < 0.4).astype(int)
    G = G | G.T
    alpha = gat_attention(X, G, *heads[0])
    assert np.all(np.abs(alpha.sum(1) - 1.0) < 1e-9)


def test_gat_graph_size_mismatch():
    with pytest.raises(ShapeError):
        gat_layer(np.zeros((3, 6)), np.ones((4, 4)), _layer(), "concat")


def test_gat_gradient():
    heads = _layer(heads=2)
    X = Tensor(np.random.default_rng(0).normal(size=(3, 6)), requires_grad=True)
    G = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]])
    params = [p for pair in heads for p in pair] + [X]
    assert grad_check(lambda: F.sum(F.square(gat_layer(X, G, heads, "concat"))), params) < 1e-4


# ---------------------------------------------------------------- critic


def _critic(k=3, hidden=8, seed=0):
    emb = Embedding(12, hidden, substream(seed, "init", "e"))
    return Critic(emb, k=k, seed=seed, hidden=hidden, heads=4)


def test_critic_shapes_and_parameter_names():
    c = Critic(Embedding(12, 128, np.random.default_rng(0)), k=32)
    names = c.parameters()
    assert "critic.gat.0.head.2.a" in names and "critic.value.W2" in names
    assert names["critic.gat.0.head.0.W"].shape == (128, 32)
    assert names["critic.value.W2"].shape == (128, 32)
    Z = c.values(np.zeros((3, 12)), np.ones((3, 3)))
    assert Z.shape == (3, 32)


def test_zero_critic_outputs_zero():
    c = _critic()
    zero_all(c.parameters())
    zero_all(c.embed.parameters("e"))
    Z = c.values(np.random.default_rng(0).poisson(3, size=(4, 12)).astype(float), np.ones((4, 4)))
    assert np.all(Z.data == 0.0)


def test_critic_k1_is_scalar_head():
    c = _critic(k=1)
    assert c.values(np.zeros((2, 12)), np.ones((2, 2))).shape == (2, 1)


def test_critic_permutation_equivariant():
    c = _critic(k=3)
    rng = np.random.default_rng(0)
    obs = rng.poisson(4, size=(4, 12)).astype(float)
    G = np.array([[1, 1, 0, 0], [1, 1, 1, 0], [0, 1, 1, 1], [0, 0, 1, 1]])
    perm = np.array([2, 0, 3, 1])
    Z = c.values(obs, G).data
    Zp = c.values(obs[perm], G[np.ix_(perm, perm)]).data
    assert np.allclose(Zp, Z[perm], atol=1e-12)


def test_critic_observation_shape_error():
    c = _critic()
    with pytest.raises(ShapeError):
        c.values(np.zeros((3, 11)), np.ones((3, 3)))
