"""Lighting-context encoder: configuration law, shapes for every placement,
cross-image communication, and the resolution-independence contract."""

import numpy as np
import pytest

from unips.errors import ConfigError, ShapeError
from unips.nd import EVAL_STATE, ActivationCounter, RunState, tensor
from unips.encoder import PLACEMENTS, Encoder, EncoderConfig, uniform_pool
from unips.prep import preprocess


def tiny_config(**kw):
    base = dict(s=16, c=8, d_e=16, num_stages=2, heads=4, window=4,
                dropout=0.0)
    base.update(kw)
    return EncoderConfig(**base)


def canonical(rng, q=2, s=16):
    x = rng.uniform(0, 1, size=(q, s, s, 4)).astype(np.float32)
    x[..., 3] = 1.0
    return x


# ---------------------------------------------------------------- config

def test_config_defaults_describe_desk_scale():
    cfg = EncoderConfig()
    assert (cfg.s, cfg.c, cfg.d_e) == (64, 24, 64)
    assert cfg.placement == "pre-fusion"
    assert cfg.stage_dims == [24, 48, 96, 192]
    assert cfg.stage_res == [16, 8, 4, 2]
    assert cfg.context_res == 16


def test_config_validation():
    with pytest.raises(ConfigError):
        tiny_config(placement="everywhere")
    with pytest.raises(ConfigError):
        tiny_config(num_stages=0)
    with pytest.raises(ConfigError):
        tiny_config(s=20)               # not divisible by 4 * 2^(stages-1)
    with pytest.raises(ConfigError):
        tiny_config(c=6, heads=4)       # stage dim not divisible by heads
    with pytest.raises(ConfigError):
        tiny_config(d_e=18, heads=4)


@pytest.mark.parametrize("placement", PLACEMENTS)
def test_forward_shapes_per_placement(rng, placement):
    cfg = tiny_config(placement=placement)
    enc = Encoder(cfg, np.random.default_rng(0))
    out = enc(tensor(canonical(rng)), EVAL_STATE)
    assert out.shape == (2, 4, 4, 16)    # (q, s/4, s/4, d_e)


def test_uniform_collapses_to_single_vector(rng):
    cfg = tiny_config(uniform=True)
    enc = Encoder(cfg, np.random.default_rng(0))
    out = enc(tensor(canonical(rng)), EVAL_STATE)
    assert out.shape == (2, 1, 1, 16)


def test_uniform_pool_is_spatial_mean(rng):
    grid = rng.normal(size=(3, 4, 4, 8)).astype(np.float32)
    pooled = uniform_pool(tensor(grid)).numpy()
    want = grid.mean(axis=(1, 2), keepdims=True)
    np.testing.assert_allclose(pooled, want, atol=1e-6)


def test_encoder_rejects_wrong_input_shape(rng):
    enc = Encoder(tiny_config(), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        enc(tensor(rng.normal(size=(2, 32, 32, 4)).astype(np.float32)),
            EVAL_STATE)
    with pytest.raises(ShapeError):
        enc(tensor(rng.normal(size=(2, 16, 16, 3)).astype(np.float32)),
            EVAL_STATE)


# ----------------------------------------------------- communication scope

def test_no_placement_means_independent_images(rng):
    """With placement 'none' each image's context is a function of that
    image alone: swapping the other image in the stack must not change it."""
    enc = Encoder(tiny_config(placement="none"), np.random.default_rng(0))
    x = canonical(rng, q=2)
    y = x.copy()
    y[1] = canonical(np.random.default_rng(99), q=1)[0]
    a = enc(tensor(x), EVAL_STATE).numpy()
    b = enc(tensor(y), EVAL_STATE).numpy()
    np.testing.assert_allclose(a[0], b[0], atol=1e-6)
    assert np.abs(a[1] - b[1]).max() > 1e-4


@pytest.mark.parametrize("placement",
                         ["during-extraction", "pre-fusion", "post-fusion"])
def test_communication_placements_mix_images(rng, placement):
    enc = Encoder(tiny_config(placement=placement), np.random.default_rng(0))
    x = canonical(rng, q=2)
    y = x.copy()
    y[1] = canonical(np.random.default_rng(99), q=1)[0]
    a = enc(tensor(x), EVAL_STATE).numpy()
    b = enc(tensor(y), EVAL_STATE).numpy()
    # image 0's context reacts to image 1 changing
    assert np.abs(a[0] - b[0]).max() > 1e-6


def test_communication_is_permutation_equivariant(rng):
    enc = Encoder(tiny_config(placement="pre-fusion"),
                  np.random.default_rng(0))
    x = canonical(rng, q=3)
    perm = [2, 0, 1]
    a = enc(tensor(x), EVAL_STATE).numpy()
    b = enc(tensor(x[perm]), EVAL_STATE).numpy()
    np.testing.assert_allclose(b, a[perm], atol=1e-5)


# --------------------------------------------- resolution independence

def test_encoder_work_ignores_original_resolution(rng):
    """The encoder runs on the canonical stack, so its allocation count must
    be byte-for-byte identical whether the capture was 64x64 or 256x256."""
    cfg = tiny_config()
    enc = Encoder(cfg, np.random.default_rng(0))
    counts = []
    for original in (64, 256):
        images = rng.uniform(0.1, 1.0,
                             size=(2, original, original, 3)).astype(np.float32)
        mask = np.zeros((original, original), dtype=bool)
        lo, hi = original // 4, 3 * original // 4
        mask[lo:hi, lo:hi] = True
        stack = preprocess(images, mask, s=cfg.s)
        with ActivationCounter() as counter:
            enc(tensor(stack.canonical), EVAL_STATE)
        counts.append((counter.elements, counter.tensors))
    assert counts[0] == counts[1]


def test_encoder_work_scales_with_q(rng):
    cfg = tiny_config()
    enc = Encoder(cfg, np.random.default_rng(0))
    def count(q):
        with ActivationCounter() as c:
            enc(tensor(canonical(rng, q=q)), EVAL_STATE)
        return c.elements
    assert count(4) > count(2) > count(1)


def test_dropout_makes_training_stochastic_but_reproducible(rng):
    enc = Encoder(tiny_config(dropout=0.3), np.random.default_rng(0))
    x = tensor(canonical(rng))
    s1 = RunState(seed=5, step=1, training=True)
    s2 = RunState(seed=5, step=2, training=True)
    a = enc(x, s1).numpy()
    b = enc(x, s1).numpy()
    c = enc(x, s2).numpy()
    np.testing.assert_array_equal(a, b)
    assert (a != c).any()
    # eval mode ignores the dropout entirely
    e1 = enc(x, EVAL_STATE).numpy()
    e2 = enc(x, EVAL_STATE).numpy()
    np.testing.assert_array_equal(e1, e2)
