"""Built-in invariant suite behind ``unips selftest``.

Each check exercises one load-bearing contract with fixed seeds and no
timing-dependent output, so the emitted report is byte-identical across
runs on the same build.  Failures carry the measured value; the suite
keeps going so one regression does not hide another.
"""

from __future__ import annotations

import io

import numpy as np

from .baseline import CalibratedProblem, solve_lambertian
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .model import LightingContextNetwork, NetworkConfig
from .nd import functional as F
from .nd.checkpoint import read_checkpoint, write_checkpoint
from .nd.gradcheck import check_gradients
from .nd.nn import EVAL_STATE, AttentionPool, TransformerLayer
from .nd.tensor import Tensor
from .prep import preprocess
from .render.dataset import generate_scene
from .render.geometry import HeightField
from .render.lighting import DirectionalLight
from .render.scene import render_views
from .render.materials import MaterialField
from .training import sample_pixels

__all__ = ["run_selftest", "SELFTEST_CHECKS"]


def _check_transformer_gradients():
    rng = np.random.default_rng(11)
    layer = TransformerLayer(8, heads=2, rng=rng, dropout=0.0)
    layer.astype(np.float64)
    x = Tensor(rng.normal(size=(2, 3, 8)), requires_grad=True)
    leaves = [p for _, p in layer.named_parameters()] + [x]
    worst = check_gradients(lambda: layer(x, EVAL_STATE).sum(), leaves,
                            rng=np.random.default_rng(12))
    assert worst < 1e-4, f"worst relative error {worst:.3e}"


def _check_attention_oracle():
    rng = np.random.default_rng(21)
    q = Tensor(rng.normal(size=(2, 4, 8)))
    k = Tensor(rng.normal(size=(2, 5, 8)))
    v = Tensor(rng.normal(size=(2, 5, 8)))
    got = F.attention(q, k, v, heads=2).data
    want = np.zeros_like(got)
    dh = 4
    for b in range(2):
        for h in range(2):
            qs = q.data[b, :, h * dh:(h + 1) * dh]
            ks = k.data[b, :, h * dh:(h + 1) * dh]
            vs = v.data[b, :, h * dh:(h + 1) * dh]
            scores = qs @ ks.T / np.sqrt(dh)
            w = np.exp(scores - scores.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            want[b, :, h * dh:(h + 1) * dh] = w @ vs
    diff = np.abs(got - want).max()
    assert diff < 1e-5, f"attention deviates from dense oracle by {diff:.3e}"


def _check_bilinear_oracle():
    rng = np.random.default_rng(31)
    grid = rng.normal(size=(2, 5, 6, 3)).astype(np.float32)
    pts = np.stack([rng.uniform(-1, 5.5, size=40),
                    rng.uniform(-1, 6.5, size=40)], axis=1)
    got = F.bilinear_sample_grid(Tensor(grid), pts).data
    want = np.zeros_like(got)
    for i, (r, c) in enumerate(pts):
        r0 = int(np.floor(r)); c0 = int(np.floor(c))
        fr, fc = r - r0, c - c0
        for dr, dc, wgt in ((0, 0, (1 - fr) * (1 - fc)),
                            (0, 1, (1 - fr) * fc),
                            (1, 0, fr * (1 - fc)),
                            (1, 1, fr * fc)):
            rr = min(max(r0 + dr, 0), 4)
            cc = min(max(c0 + dc, 0), 5)
            want[:, i] += wgt * grid[:, rr, cc]
    diff = np.abs(got - want).max()
    assert diff < 1e-5, f"bilinear sampler deviates by {diff:.3e}"


def _check_pool_permutation():
    rng = np.random.default_rng(41)
    pool = AttentionPool(16, heads=4, rng=rng)
    x = rng.normal(size=(3, 6, 16)).astype(np.float32)
    base = pool(Tensor(x)).data
    perm = pool(Tensor(np.ascontiguousarray(x[:, ::-1]))).data
    diff = np.abs(base - perm).max()
    assert diff < 1e-5, f"pooling changed by {diff:.3e} under permutation"


def _tiny_model() -> NetworkConfig:
    return NetworkConfig(
        encoder=EncoderConfig(s=16, c=8, d_e=16, num_stages=2, heads=4,
                              window=4),
        decoder=DecoderConfig(d_t=32, ff_dim=64, heads=4))


def _tiny_scene():
    scene = generate_scene(seed=17, index=0, q=3, res=48,
                           lighting="directional")
    assert scene is not None, "reference scene failed the entropy bar"
    return scene


def _check_model_invariances():
    scene = _tiny_scene()
    model = LightingContextNetwork(_tiny_model())
    stack = preprocess(scene["images"], scene["mask"], 16)
    coords = np.argwhere(stack.mask)[::9]
    base = model.forward(stack, coords, EVAL_STATE).data
    norms = np.linalg.norm(base, axis=1)
    assert np.abs(norms - 1).max() < 1e-6, "outputs are not unit normals"
    flipped = preprocess(scene["images"][::-1], scene["mask"], 16)
    perm = model.forward(flipped, coords, EVAL_STATE).data
    diff = np.abs(base - perm).max()
    assert diff < 1e-5, f"normals changed by {diff:.3e} under image reorder"
    doubled = preprocess(scene["images"] * 4.0, scene["mask"], 16)
    scaled = model.forward(doubled, coords, EVAL_STATE).data
    sdiff = np.abs(base - scaled).max()
    assert sdiff == 0.0, f"normals changed by {sdiff:.3e} under 4x exposure"


def _check_checkpoint_roundtrip(tmp_dir):
    rng = np.random.default_rng(51)
    state = {"a.w": rng.normal(size=(3, 4)).astype(np.float32),
             "b": np.float32(2.5),
             "c.v": rng.normal(size=(2,)).astype(np.float32)}
    path = tmp_dir / "roundtrip.ckpt"
    write_checkpoint(path, state)
    first = path.read_bytes()
    write_checkpoint(path, state)
    assert path.read_bytes() == first, "checkpoint bytes differ on rewrite"
    back = read_checkpoint(path)
    assert list(back) == list(state), "key order not preserved"
    for key in state:
        assert np.array_equal(back[key], state[key]), f"mismatch at {key}"


def _check_render_reference():
    field = HeightField(seed=3, amplitude=0.0, octaves=1)
    material = MaterialField.constant((0.6, 0.6, 0.6), roughness=1.0,
                                      metallic=0.0)
    light = DirectionalLight(np.array([0.0, 0.0, 1.0]),
                             np.array([1.0, 1.0, 1.0]))
    images, scales, normals, mask = render_views(field, material, [light],
                                                 res=24, autoexpose=False)
    want = 0.6 / np.pi
    diff = np.abs(images[0] - want).max()
    assert diff < 1e-6, f"flat diffuse render off by {diff:.3e}"
    exposed, _, _, _ = render_views(field, material, [light], res=24)
    mean = exposed[0][mask].mean()
    assert abs(mean - 0.3) < 1e-6, f"exposure target missed: {mean:.6f}"


def _check_calibrated_identity():
    rho = 0.7
    images = np.zeros((3, 1, 1, 3))
    images[2, 0, 0] = rho
    problem = CalibratedProblem(
        images=images, directions=np.eye(3),
        intensities=np.ones((3, 3)), mask=np.ones((1, 1), dtype=bool))
    normals, albedo, valid = solve_lambertian(problem, tau_fraction=0.0)
    assert valid[0, 0], "identity solve marked invalid"
    assert np.allclose(normals[0, 0], [0, 0, 1], atol=1e-12), \
        f"normal {normals[0, 0]} is not +z"
    assert abs(albedo[0, 0] - np.pi * rho) < 1e-6, f"albedo {albedo[0, 0]}"


def _check_dropout_determinism():
    shape = (4, 5)
    a = F.dropout_mask(shape, rate=0.5, seed=9, layer_id=100, step=3)
    b = F.dropout_mask(shape, rate=0.5, seed=9, layer_id=100, step=3)
    c = F.dropout_mask(shape, rate=0.5, seed=9, layer_id=100, step=4)
    assert np.array_equal(a, b), "same key produced different masks"
    assert not np.array_equal(a, c), "mask did not change with the step"


def _check_scene_determinism():
    one = generate_scene(seed=23, index=1, q=2, res=32)
    two = generate_scene(seed=23, index=1, q=2, res=32)
    assert one is not None and two is not None
    for key in ("images", "normals", "mask"):
        assert np.array_equal(one[key], two[key]), f"{key} not reproducible"


def _check_pixel_sampler():
    rng = np.random.default_rng(61)
    mask = np.ones((16, 16), dtype=bool)
    mask[0, :] = False
    coords = sample_pixels(mask, 16, 0, rng)
    assert len(coords) == mask.sum(), "identity-resolution set incomplete"
    assert mask[coords[:, 0], coords[:, 1]].all(), "sampled outside mask"


def run_selftest(log=None, tmp_dir=None):
    """Run every check; returns (passed, failures, report_text)."""
    import tempfile
    from pathlib import Path

    if tmp_dir is None:
        tmp_dir = Path(tempfile.mkdtemp(prefix="unips_selftest_"))
    buf = io.StringIO()
    failures = []
    passed = 0
    for name, fn, wants_tmp in SELFTEST_CHECKS:
        try:
            fn(tmp_dir) if wants_tmp else fn()
        except AssertionError as exc:
            failures.append(name)
            line = f"FAIL {name}: {exc}"
        except Exception as exc:  # noqa: BLE001 - reported, not hidden
            failures.append(name)
            line = f"FAIL {name}: {type(exc).__name__}: {exc}"
        else:
            passed += 1
            line = f"ok {name}"
        buf.write(line + "\n")
        if log is not None:
            log(line)
    summary = f"selftest: {passed} passed, {len(failures)} failed"
    buf.write(summary + "\n")
    if log is not None:
        log(summary)
    return passed, failures, buf.getvalue()


SELFTEST_CHECKS = [
    ("transformer-gradients", _check_transformer_gradients, False),
    ("attention-dense-oracle", _check_attention_oracle, False),
    ("bilinear-sample-oracle", _check_bilinear_oracle, False),
    ("attention-pool-permutation", _check_pool_permutation, False),
    ("model-invariances", _check_model_invariances, False),
    ("checkpoint-roundtrip", _check_checkpoint_roundtrip, True),
    ("render-flat-diffuse", _check_render_reference, False),
    ("calibrated-identity", _check_calibrated_identity, False),
    ("dropout-determinism", _check_dropout_determinism, False),
    ("scene-determinism", _check_scene_determinism, False),
    ("pixel-sampler-identity", _check_pixel_sampler, False),
]
