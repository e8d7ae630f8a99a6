"""Estimator facade: parameter plumbing, fitted-state discipline, and the
predict/score surface."""

from pathlib import Path

import numpy as np
import pytest

import unips.estimator
from unips.errors import ConfigError, NotFittedError
from unips.estimator import PhotometricStereoEstimator
from unips.render.dataset import generate_scene, load_scene, write_scene
from unips.training import TrainResult

TINY = dict(canonical_res=32, channels=8, context_dim=16, decoder_dim=32,
            epochs=1, batch_scenes=2, n_random=32, q=4, augment=False, seed=3)


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("estdata")
    for i, (seed, index) in enumerate([(17, 0), (17, 1)]):
        sample = generate_scene(seed=seed, index=index, q=4, res=32,
                                lighting="directional")
        write_scene(root / f"scene_{i:04d}", sample)
    return root


@pytest.fixture(scope="module")
def fitted(data_root, tmp_path_factory):
    work = tmp_path_factory.mktemp("estwork")
    est = PhotometricStereoEstimator(work_dir=work, **TINY)
    out = est.fit(data_root)
    assert out is est
    return est


def test_get_params_reflects_constructor():
    est = PhotometricStereoEstimator(**TINY)
    params = est.get_params()
    for key, value in TINY.items():
        assert params[key] == value
    assert "work_dir" in params and "placement" in params


def test_params_clone_an_equivalent_estimator():
    est = PhotometricStereoEstimator(**TINY)
    clone = PhotometricStereoEstimator(**est.get_params())
    assert clone.get_params() == est.get_params()


def test_set_params_chains_and_validates():
    est = PhotometricStereoEstimator(**TINY)
    out = est.set_params(lr=0.5, epochs=9)
    assert out is est
    assert est.lr == 0.5 and est.epochs == 9
    with pytest.raises(ConfigError, match="invalid parameter"):
        est.set_params(learning_rate=0.5)


def test_unfitted_estimator_refuses_to_predict():
    est = PhotometricStereoEstimator(**TINY)
    images = np.ones((2, 8, 8, 3), dtype=np.float32)
    mask = np.ones((8, 8), dtype=bool)
    with pytest.raises(NotFittedError):
        est.predict(images, mask)
    with pytest.raises(NotFittedError):
        est.score(".")


def test_fit_exposes_trailing_underscore_state(fitted):
    assert fitted.model_ is not None
    assert Path(fitted.checkpoint_).exists()
    assert fitted.train_result_.steps >= 1
    assert Path(fitted.checkpoint_).parent == Path(fitted.work_dir)


def test_predict_returns_unit_normals(fitted, data_root):
    scene = load_scene(data_root / "scene_0000")
    normals, valid = fitted.predict(scene["images"], scene["mask"])
    assert normals.shape == scene["normals"].shape
    np.testing.assert_array_equal(valid, scene["mask"])
    lengths = np.linalg.norm(normals[valid], axis=1)
    np.testing.assert_allclose(lengths, 1.0, atol=1e-5)


def test_score_is_negative_mae(fitted, data_root):
    score = fitted.score(data_root)
    assert np.isfinite(score) and score <= 0.0
    scene = load_scene(data_root / "scene_0000")
    single = fitted.score_single(scene["images"], scene["mask"],
                                 scene["normals"])
    assert np.isfinite(single) and single <= 0.0


def test_load_checkpoint_restores_equivalent_estimator(fitted, data_root):
    est = PhotometricStereoEstimator()
    out = est.load_checkpoint(fitted.checkpoint_)
    assert out is est
    assert est.canonical_res == TINY["canonical_res"]
    assert est.decoder_dim == TINY["decoder_dim"]
    scene = load_scene(data_root / "scene_0000")
    a, _ = fitted.predict(scene["images"], scene["mask"])
    b, _ = est.predict(scene["images"], scene["mask"])
    np.testing.assert_array_equal(a, b)


def test_aborted_training_leaves_estimator_unfitted(data_root, tmp_path,
                                                    monkeypatch):
    def fake_train(data_dir, model, config, out, **kwargs):
        return TrainResult(checkpoint=Path(out), loss_csv=Path(out),
                           epochs_run=0, steps=1, final_loss=float("nan"),
                           aborted=True)

    monkeypatch.setattr(unips.estimator, "train", fake_train)
    est = PhotometricStereoEstimator(work_dir=tmp_path, **TINY)
    with pytest.raises(NotFittedError):
        est.fit(data_root)
    with pytest.raises(NotFittedError):
        est.predict(np.ones((2, 8, 8, 3), np.float32),
                    np.ones((8, 8), bool))
