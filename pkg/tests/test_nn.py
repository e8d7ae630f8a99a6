"""Module layer: parameter traversal, init statistics, the building-block
layers, and the set-pooling oracle."""

import numpy as np
import pytest

from unips.errors import CheckpointError, ShapeError
from unips.nd import (
    EVAL_STATE,
    AttentionPool,
    Conv2d,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    PatchMerge,
    RunState,
    TransformerLayer,
    assign_dropout_ids,
    check_gradients,
    tensor,
    trunc_normal,
)
from unips.nd.functional import attention


def rng0():
    return np.random.default_rng(0)


class Toy(Module):
    def __init__(self):
        g = rng0()
        self.a = Linear(4, 3, g)
        self.blocks = [Linear(3, 3, g), Linear(3, 2, g)]

    def forward(self, x):
        x = self.a(x)
        for b in self.blocks:
            x = b(x)
        return x


# -------------------------------------------------------------- traversal

def test_named_parameters_cover_nested_lists():
    m = Toy()
    names = [n for n, _ in m.named_parameters()]
    assert "a.weight" in names and "a.bias" in names
    assert "blocks.0.weight" in names and "blocks.1.bias" in names
    assert m.num_parameters() == (4 * 3 + 3) + (3 * 3 + 3) + (3 * 2 + 2)


def test_state_dict_round_trip():
    m1, m2 = Toy(), Toy()
    for p in m1.parameters():
        p.data = p.data + 1.0
    m2.load_state_dict(m1.state_dict())
    for (n1, p1), (n2, p2) in zip(m1.named_parameters(),
                                  m2.named_parameters()):
        assert n1 == n2
        np.testing.assert_array_equal(p1.data, p2.data)


def test_load_state_dict_rejects_mismatches():
    m = Toy()
    state = m.state_dict()
    bad = dict(state)
    bad.pop("a.weight")
    with pytest.raises(CheckpointError):
        m.load_state_dict(bad)
    bad = dict(state)
    bad["extra"] = np.zeros(3)
    with pytest.raises(CheckpointError):
        m.load_state_dict(bad)
    bad = dict(state)
    bad["a.weight"] = np.zeros((7, 7))
    with pytest.raises(CheckpointError):
        m.load_state_dict(bad)


def test_zero_grad_clears_gradients():
    m = Toy()
    out = m(tensor(np.ones((2, 4), dtype=np.float32)))
    out.sum().backward()
    assert any(p.grad is not None for p in m.parameters())
    m.zero_grad()
    assert all(p.grad is None for p in m.parameters())


# ------------------------------------------------------------------- init

def test_trunc_normal_statistics():
    vals = trunc_normal(np.random.default_rng(1), (20000,), std=0.02)
    assert np.abs(vals).max() <= 0.04 + 1e-7
    assert abs(vals.mean()) < 0.002
    assert 0.015 < vals.std() < 0.025


def test_init_is_seed_deterministic():
    w1 = Linear(8, 8, np.random.default_rng(42)).weight.data
    w2 = Linear(8, 8, np.random.default_rng(42)).weight.data
    np.testing.assert_array_equal(w1, w2)


# ----------------------------------------------------------------- layers

def test_linear_matches_affine(rng):
    lin = Linear(5, 3, rng0())
    x = rng.normal(size=(4, 5)).astype(np.float32)
    got = lin(tensor(x)).numpy()
    want = x @ lin.weight.data + lin.bias.data
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_conv2d_module_shapes(rng):
    conv = Conv2d(3, 8, kernel=4, stride=4, rng=rng0())
    x = tensor(rng.normal(size=(2, 16, 16, 3)).astype(np.float32))
    y = conv(x)
    assert y.shape == (2, 4, 4, 8)


def test_layer_norm_module_learns_scale(rng):
    ln = LayerNorm(6)
    ln.gamma.data = np.full(6, 2.0, dtype=np.float32)
    ln.beta.data = np.full(6, -1.0, dtype=np.float32)
    x = rng.normal(size=(3, 6)).astype(np.float32)
    y = ln(tensor(x)).numpy()
    np.testing.assert_allclose(y.mean(axis=-1), -1.0, atol=1e-5)


def test_dropout_module_threads_state(rng):
    d = Dropout(0.5)
    d.layer_id = 11
    x = tensor(np.ones((64,), dtype=np.float32))
    train = RunState(seed=3, step=5, training=True)
    y1 = d(x, train).numpy()
    y2 = d(x, train).numpy()
    np.testing.assert_array_equal(y1, y2)      # same (seed, layer, step)
    y3 = d(x, RunState(seed=3, step=6, training=True)).numpy()
    assert (y1 != y3).any()
    np.testing.assert_array_equal(d(x, EVAL_STATE).numpy(), x.numpy())


def test_assign_dropout_ids_unique_and_stable():
    class Net(Module):
        def __init__(self):
            self.t1 = TransformerLayer(8, 2, rng0(), dropout=0.1)
            self.t2 = TransformerLayer(8, 2, rng0(), dropout=0.1)

        def forward(self, x, state):
            return self.t2(self.t1(x, state), state)

    n1, n2 = Net(), Net()
    assign_dropout_ids(n1)
    assign_dropout_ids(n2)
    ids1 = [m.layer_id for _, m in n1.named_modules()
            if isinstance(m, Dropout)]
    ids2 = [m.layer_id for _, m in n2.named_modules()
            if isinstance(m, Dropout)]
    assert ids1 == ids2                 # derived from names, not object ids
    assert len(set(ids1)) == len(ids1)  # distinct per site


def test_multihead_attention_reduces_to_functional(rng):
    mha = MultiHeadAttention(8, 2, rng0())
    for lin in (mha.wq, mha.wk, mha.wv, mha.wo):
        lin.weight.data = np.eye(8, dtype=np.float32)
        lin.bias.data = np.zeros(8, dtype=np.float32)
    x = tensor(rng.normal(size=(1, 5, 8)).astype(np.float32))
    got = mha(x, x, x).numpy()
    want = attention(x, x, x, heads=2).numpy()
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_transformer_layer_shape_and_grads(rng):
    layer = TransformerLayer(8, 2, rng0(), ff_dim=16).astype(np.float64)
    x = tensor(rng.normal(size=(2, 5, 8)), requires_grad=True,
               dtype=np.float64)
    y = layer(x, EVAL_STATE)
    assert y.shape == (2, 5, 8)
    leaves = [x] + layer.parameters()
    err = check_gradients(lambda: (layer(x, EVAL_STATE) ** 2).sum(), leaves,
                          rng=np.random.default_rng(10))
    assert err < 1e-4


def test_patch_merge_space_to_depth(rng):
    pm = PatchMerge(3, 6, rng0())
    x = rng.normal(size=(1, 4, 4, 3)).astype(np.float32)
    y = pm(tensor(x))
    assert y.shape == (1, 2, 2, 6)
    with pytest.raises(ShapeError):
        pm(tensor(rng.normal(size=(1, 3, 4, 3)).astype(np.float32)))


# ----------------------------------------------------------- set pooling

def test_attention_pool_is_permutation_invariant(rng):
    pool = AttentionPool(8, 2, rng0())
    x = rng.normal(size=(2, 6, 8)).astype(np.float32)
    base = pool(tensor(x)).numpy()
    perm = np.random.default_rng(3).permutation(6)
    shuffled = pool(tensor(x[:, perm])).numpy()
    np.testing.assert_allclose(shuffled, base, atol=1e-6)
    assert base.shape == (2, 8)


def test_attention_pool_of_identical_elements_is_single_element(rng):
    """With every set element equal, pooling must return the same output as
    the singleton set: the softmax weights collapse to a convex combination
    of identical values."""
    pool = AttentionPool(8, 2, rng0())
    one = rng.normal(size=(1, 1, 8)).astype(np.float32)
    rep = np.repeat(one, 5, axis=1)
    np.testing.assert_allclose(pool(tensor(rep)).numpy(),
                               pool(tensor(one)).numpy(), atol=1e-6)


def test_attention_pool_seed_query_receives_gradient(rng):
    pool = AttentionPool(8, 2, rng0()).astype(np.float64)
    x = tensor(rng.normal(size=(1, 4, 8)), dtype=np.float64)
    (pool(x) ** 2).sum().backward()
    assert pool.seed.grad is not None and np.any(pool.seed.grad)
