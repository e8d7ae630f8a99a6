"""Estimator facade with the usual fit/predict parameter conventions.

Constructor arguments are stored verbatim; ``fit`` builds the network and
trains it on a rendered dataset directory, after which attributes with a
trailing underscore hold the fitted state.  ``get_params``/``set_params``
expose every constructor knob, so the estimator composes with generic
hyper-parameter search loops without importing any heavyweight framework.
"""

from __future__ import annotations

import inspect
import tempfile
from pathlib import Path

import numpy as np

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError, NotFittedError
from .evaluation import evaluate_model, mae_degrees
from .model import (LightingContextNetwork, NetworkConfig, infer_normal_map,
                    load_network)
from .training import TrainConfig, train

__all__ = ["PhotometricStereoEstimator"]


class PhotometricStereoEstimator:
    """Universal photometric stereo as a fit/predict estimator.

    Parameters mirror the network and training configuration; see
    EncoderConfig, DecoderConfig and TrainConfig for semantics.  ``predict``
    maps (images, mask) to unit normals at the original resolution.
    """

    def __init__(self, canonical_res: int = 64, channels: int = 24,
                 context_dim: int = 64, placement: str = "pre-fusion",
                 uniform: bool = False, aggregation: str = "transformer",
                 decoder_dim: int = 96, epochs: int = 20,
                 batch_scenes: int = 3, lr: float = 1e-4,
                 weight_decay: float = 0.05, n_random: int = 2500,
                 q: int = 8, vary_q: bool = False, augment: bool = True,
                 seed: int = 0, work_dir=None):
        self.canonical_res = canonical_res
        self.channels = channels
        self.context_dim = context_dim
        self.placement = placement
        self.uniform = uniform
        self.aggregation = aggregation
        self.decoder_dim = decoder_dim
        self.epochs = epochs
        self.batch_scenes = batch_scenes
        self.lr = lr
        self.weight_decay = weight_decay
        self.n_random = n_random
        self.q = q
        self.vary_q = vary_q
        self.augment = augment
        self.seed = seed
        self.work_dir = work_dir

    @classmethod
    def _param_names(cls) -> list[str]:
        signature = inspect.signature(cls.__init__)
        return [p for p in signature.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params) -> "PhotometricStereoEstimator":
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ConfigError(
                    f"invalid parameter '{name}'; valid parameters are "
                    f"{sorted(valid)}")
            setattr(self, name, value)
        return self

    def _network_config(self) -> NetworkConfig:
        return NetworkConfig(
            encoder=EncoderConfig(s=self.canonical_res, c=self.channels,
                                  d_e=self.context_dim,
                                  placement=self.placement,
                                  uniform=self.uniform),
            decoder=DecoderConfig(d_t=self.decoder_dim,
                                  aggregation=self.aggregation),
            init_seed=self.seed)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_scenes=self.batch_scenes,
                           lr=self.lr, weight_decay=self.weight_decay,
                           n_random=self.n_random, q=self.q,
                           vary_q=self.vary_q, augment=self.augment,
                           seed=self.seed)

    def fit(self, data_dir, max_steps: int | None = None,
            log=None) -> "PhotometricStereoEstimator":
        """Train on a rendered dataset directory; returns self."""
        work = Path(self.work_dir) if self.work_dir else Path(
            tempfile.mkdtemp(prefix="unips_fit_"))
        work.mkdir(parents=True, exist_ok=True)
        model = LightingContextNetwork(self._network_config())
        result = train(data_dir, model, self._train_config(),
                       work / "model.ckpt", max_steps=max_steps, log=log)
        if result.aborted:
            raise NotFittedError("training aborted on a non-finite loss; "
                                 f"last good checkpoint: {result.checkpoint}")
        self.model_ = model
        self.checkpoint_ = result.checkpoint
        self.train_result_ = result
        return self

    def _require_fitted(self) -> LightingContextNetwork:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError(
                "this estimator is not fitted yet; call fit() or "
                "load_checkpoint() first")
        return model

    def predict(self, images: np.ndarray, mask: np.ndarray,
                batch_size: int = 4096):
        """Unit normal map for one stack; returns (normals, valid)."""
        return infer_normal_map(self._require_fitted(), np.asarray(images),
                                np.asarray(mask), batch_size=batch_size)

    def score(self, test_root, q: int | None = None) -> float:
        """Negative mean angular error in degrees (higher is better)."""
        report = evaluate_model(self._require_fitted(), test_root, q=q)
        return -report.overall_mean()

    def score_single(self, images, mask, normals) -> float:
        """Negative MAE against ground truth for one stack."""
        pred, valid = self.predict(images, mask)
        return -mae_degrees(pred, normals, valid)

    def load_checkpoint(self, path) -> "PhotometricStereoEstimator":
        """Adopt trained weights (with config sidecar) as the fitted state."""
        model = load_network(path)
        self.model_ = model
        self.checkpoint_ = Path(path)
        enc, dec = model.config.encoder, model.config.decoder
        self.set_params(canonical_res=enc.s, channels=enc.c,
                        context_dim=enc.d_e, placement=enc.placement,
                        uniform=enc.uniform, aggregation=dec.aggregation,
                        decoder_dim=dec.d_t)
        return self
