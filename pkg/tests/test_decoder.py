"""Per-pixel decoder: context sampling against a brute-force oracle, both
aggregation modes, and the output normalization contract."""

import numpy as np
import pytest

from unips.decoder import AGGREGATIONS, Decoder, DecoderConfig, normalize_rows, sample_context
from unips.errors import ConfigError, NonFiniteError, ShapeError
from unips.nd import EVAL_STATE, tensor


def tiny_decoder(aggregation="transformer", d_e=8):
    cfg = DecoderConfig(depth=1, d_t=16, ff_dim=32, heads=4,
                        aggregation=aggregation, dropout=0.0)
    return Decoder(cfg, d_e=d_e, rng=np.random.default_rng(0))


# ----------------------------------------------------------------- config

def test_config_validation():
    with pytest.raises(ConfigError):
        DecoderConfig(aggregation="average")
    with pytest.raises(ConfigError):
        DecoderConfig(depth=0, aggregation="transformer")
    with pytest.raises(ConfigError):
        DecoderConfig(d_t=30, heads=4)
    DecoderConfig(depth=0, aggregation="max-pool")  # depth unused: fine
    assert set(AGGREGATIONS) == {"transformer", "max-pool"}


# --------------------------------------------------------- context sampling

def bilinear_oracle(grid, r, c):
    h, w = grid.shape[:2]
    r = min(max(r, 0.0), h - 1.0)
    c = min(max(c, 0.0), w - 1.0)
    r0, c0 = int(np.floor(r)), int(np.floor(c))
    r1, c1 = min(r0 + 1, h - 1), min(c0 + 1, w - 1)
    fr, fc = r - r0, c - c0
    return ((1 - fr) * (1 - fc) * grid[r0, c0] + (1 - fr) * fc * grid[r0, c1]
            + fr * (1 - fc) * grid[r1, c0] + fr * fc * grid[r1, c1])


def test_sample_context_matches_alignment_oracle(rng):
    """Pixel x of a length-n axis lands at (x + 0.5) * g/n - 0.5 on the
    g-cell context grid; values come from clamped bilinear interpolation."""
    contexts = rng.normal(size=(2, 4, 5, 3)).astype(np.float64)
    crop_hw = (16, 20)
    coords = np.array([[0, 0], [15, 19], [7, 3], [8, 10], [0, 19], [3.5, 2.25]],
                      dtype=np.float64)
    got = sample_context(tensor(contexts), coords, crop_hw).numpy()
    for qi in range(2):
        for pi, (pr, pc) in enumerate(coords):
            gr = (pr + 0.5) * (4 / 16) - 0.5
            gc = (pc + 0.5) * (5 / 20) - 0.5
            want = bilinear_oracle(contexts[qi], gr, gc)
            np.testing.assert_allclose(got[qi, pi], want, atol=1e-9)


def test_sample_context_exact_at_aligned_pixels(rng):
    """When n == g the map is the identity: integer pixels hit grid nodes."""
    contexts = rng.normal(size=(1, 6, 6, 4)).astype(np.float64)
    coords = np.array([[r, c] for r in range(6) for c in range(6)], float)
    got = sample_context(tensor(contexts), coords, (6, 6)).numpy()
    np.testing.assert_array_equal(got[0], contexts[0].reshape(36, 4))


def test_sample_context_uniform_broadcast(rng):
    contexts = rng.normal(size=(3, 1, 1, 5)).astype(np.float32)
    coords = np.array([[0, 0], [9, 9], [4, 2]], dtype=np.float64)
    got = sample_context(tensor(contexts), coords, (10, 10)).numpy()
    assert got.shape == (3, 3, 5)
    for pi in range(3):
        np.testing.assert_array_equal(got[:, pi], contexts[:, 0, 0])


def test_sample_context_gradients_flow(rng):
    contexts = tensor(rng.normal(size=(2, 4, 4, 3)), requires_grad=True,
                      dtype=np.float64)
    coords = np.array([[1.0, 2.0], [7.5, 3.25]])
    out = sample_context(contexts, coords, (8, 8))
    (out * out).sum().backward()
    assert contexts.grad is not None and np.any(contexts.grad)


# ----------------------------------------------------------------- decoder

@pytest.mark.parametrize("aggregation", AGGREGATIONS)
def test_decoder_outputs_unit_normals(rng, aggregation):
    dec = tiny_decoder(aggregation)
    q, n = 3, 17
    rgb = tensor(rng.normal(size=(q, n, 3)).astype(np.float32))
    ctx = tensor(rng.normal(size=(q, n, 8)).astype(np.float32))
    out = dec(rgb, ctx, EVAL_STATE)
    assert out.shape == (n, 3)
    np.testing.assert_allclose(np.linalg.norm(out.numpy(), axis=1), 1.0,
                               atol=1e-6)


@pytest.mark.parametrize("aggregation", AGGREGATIONS)
def test_decoder_is_permutation_invariant_over_images(rng, aggregation):
    dec = tiny_decoder(aggregation)
    q, n = 4, 9
    rgb = rng.normal(size=(q, n, 3)).astype(np.float32)
    ctx = rng.normal(size=(q, n, 8)).astype(np.float32)
    base = dec(tensor(rgb), tensor(ctx), EVAL_STATE).numpy()
    perm = [3, 0, 2, 1]
    out = dec(tensor(rgb[perm]), tensor(ctx[perm]), EVAL_STATE).numpy()
    np.testing.assert_allclose(out, base, atol=1e-5)


@pytest.mark.parametrize("aggregation", AGGREGATIONS)
def test_decoder_handles_single_image(rng, aggregation):
    dec = tiny_decoder(aggregation)
    rgb = tensor(rng.normal(size=(1, 5, 3)).astype(np.float32))
    ctx = tensor(rng.normal(size=(1, 5, 8)).astype(np.float32))
    out = dec(rgb, ctx, EVAL_STATE)
    assert out.shape == (5, 3)


def test_decoder_shape_validation(rng):
    dec = tiny_decoder()
    rgb = tensor(rng.normal(size=(2, 5, 3)).astype(np.float32))
    bad_ctx = tensor(rng.normal(size=(3, 5, 8)).astype(np.float32))
    with pytest.raises(ShapeError):
        dec(rgb, bad_ctx, EVAL_STATE)
    short_ctx = tensor(rng.normal(size=(2, 4, 8)).astype(np.float32))
    with pytest.raises(ShapeError):
        dec(rgb, short_ctx, EVAL_STATE)


def test_max_pool_path_takes_elementwise_maximum(rng):
    """In max-pool mode, duplicating the single image must not change the
    output (max over identical rows)."""
    dec = tiny_decoder("max-pool")
    rgb = rng.normal(size=(1, 6, 3)).astype(np.float32)
    ctx = rng.normal(size=(1, 6, 8)).astype(np.float32)
    one = dec(tensor(rgb), tensor(ctx), EVAL_STATE).numpy()
    many = dec(tensor(np.repeat(rgb, 5, axis=0)),
               tensor(np.repeat(ctx, 5, axis=0)), EVAL_STATE).numpy()
    np.testing.assert_allclose(many, one, atol=1e-6)


def test_transformer_path_stable_under_duplication(rng):
    """Identical set elements pool to the singleton output in the attention
    aggregator as well."""
    dec = tiny_decoder("transformer")
    rgb = rng.normal(size=(1, 6, 3)).astype(np.float32)
    ctx = rng.normal(size=(1, 6, 8)).astype(np.float32)
    one = dec(tensor(rgb), tensor(ctx), EVAL_STATE).numpy()
    many = dec(tensor(np.repeat(rgb, 4, axis=0)),
               tensor(np.repeat(ctx, 4, axis=0)), EVAL_STATE).numpy()
    np.testing.assert_allclose(many, one, atol=1e-5)


def test_max_pool_has_fewer_parameters_than_transformer():
    t = tiny_decoder("transformer")
    m = tiny_decoder("max-pool")
    assert m.num_parameters() < t.num_parameters()


# ----------------------------------------------------------- normalization

def test_normalize_rows_unit_and_direction(rng):
    raw = rng.normal(size=(20, 3)) * 5
    out = normalize_rows(tensor(raw, dtype=np.float64)).numpy()
    np.testing.assert_allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-12)
    want = raw / np.linalg.norm(raw, axis=1, keepdims=True)
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_normalize_rows_rejects_zero_vector():
    with pytest.raises(NonFiniteError):
        normalize_rows(tensor(np.zeros((2, 3))))


def test_normalize_rows_gradients(rng):
    from unips.nd import check_gradients
    raw = tensor(rng.normal(size=(4, 3)), requires_grad=True,
                 dtype=np.float64)
    w = tensor(rng.normal(size=(4, 3)), dtype=np.float64)
    err = check_gradients(lambda: (normalize_rows(raw) * w).sum(), [raw],
                          rng=np.random.default_rng(3))
    assert err < 1e-6
