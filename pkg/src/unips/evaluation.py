"""Angular-error evaluation and the ablation harness.

MAE is the mean over valid pixels of the angle, in degrees, between the
predicted and true unit normals.  Reports carry one row per evaluated
scene, tagged with its lighting variant, and all summary numbers are
recomputable from the rows.  The ablation harness trains one model per
configuration value on a shared seed, except the image-count axis, which
is a test-time property and reuses a single trained model.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import imgio
from .errors import ConfigError, EmptyMaskError, ShapeError
from .model import LightingContextNetwork, NetworkConfig, infer_normal_map
from .render.dataset import load_scene, scene_dirs
from .training import TrainConfig, train

__all__ = [
    "mae_degrees",
    "angular_error_map",
    "write_error_map",
    "SceneResult",
    "EvalReport",
    "evaluate_model",
    "evaluate_maps",
    "run_ablation",
    "ABLATION_AXES",
    "ERROR_MAP_CAP",
]

ERROR_MAP_CAP = 80.0  # degrees at full brightness in error-map images

ABLATION_AXES = ("placement", "canonical", "uniform", "aggregation", "q")

DEFAULT_AXIS_VALUES = {
    "placement": ["none", "during-extraction", "pre-fusion", "post-fusion"],
    "canonical": [32, 64],
    "uniform": [False, True],
    "aggregation": ["transformer", "max-pool"],
    "q": [1, 4, 8, 32],
}


def angular_error_map(pred: np.ndarray, gt: np.ndarray,
                      mask: np.ndarray) -> np.ndarray:
    """Per-pixel angle in degrees between unit normal maps; 0 outside mask."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 3 or pred.shape[2] != 3:
        raise ShapeError(f"normal map shapes differ: {pred.shape} vs {gt.shape}")
    dot = np.clip((pred * gt).sum(axis=2), -1.0, 1.0)
    err = np.degrees(np.arccos(dot))
    err[~np.asarray(mask, dtype=bool)] = 0.0
    return err.astype(np.float32)


def mae_degrees(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Mean angular error in degrees over the valid mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMaskError("no valid pixels to compare")
    err = angular_error_map(pred, gt, mask)
    return float(err[mask].mean())


def write_error_map(path, err_degrees: np.ndarray, mask: np.ndarray,
                    cap: float = ERROR_MAP_CAP) -> None:
    """Grayscale PNG, linear 0..cap degrees -> 0..255; masked-out stays 0."""
    scaled = np.clip(err_degrees / cap, 0.0, 1.0) * 255.0
    scaled[~np.asarray(mask, dtype=bool)] = 0.0
    imgio.write_png(path, np.round(scaled).astype(np.uint8))


@dataclass
class SceneResult:
    scene: str
    variant: str
    q: int
    mae: float
    seconds: float = 0.0


@dataclass
class EvalReport:
    rows: list[SceneResult] = field(default_factory=list)
    fingerprint: str = ""

    def mean_by_variant(self) -> dict[str, float]:
        groups: dict[str, list[float]] = {}
        for row in self.rows:
            groups.setdefault(row.variant, []).append(row.mae)
        return {k: float(np.mean(v)) for k, v in sorted(groups.items())}

    def overall_mean(self) -> float:
        if not self.rows:
            raise EmptyMaskError("report has no rows")
        return float(np.mean([r.mae for r in self.rows]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["scene", "variant", "q", "mae_degrees", "seconds"])
            for r in self.rows:
                writer.writerow([r.scene, r.variant, r.q, f"{r.mae:.6f}",
                                 f"{r.seconds:.3f}"])
            for variant, value in self.mean_by_variant().items():
                writer.writerow(["mean", variant, "", f"{value:.6f}", ""])
            writer.writerow(["mean", "all", "", f"{self.overall_mean():.6f}",
                             ""])


def _fingerprint(config: NetworkConfig, q) -> str:
    text = json.dumps({"config": config.to_dict(), "q": q}, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def _collect_scene_dirs(root) -> list[Path]:
    """Scene dirs under root, descending into lighting-variant subdirs."""
    root = Path(root)
    found = scene_dirs(root)
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        found.extend(scene_dirs(sub))
    if not found:
        raise ConfigError(f"no scene directories under {root}")
    return found


def evaluate_model(model: LightingContextNetwork, test_root, q: int | None = None,
                   batch_size: int = 4096, error_map_dir=None,
                   log=None) -> EvalReport:
    """Run inference over every scene under ``test_root`` and report MAE.

    ``q`` limits each stack to its first q images (None uses all).  Scenes
    are tagged with the lighting variant recorded at render time.
    """
    report = EvalReport(fingerprint=_fingerprint(model.config, q))
    if error_map_dir is not None:
        Path(error_map_dir).mkdir(parents=True, exist_ok=True)
    for scene_dir in _collect_scene_dirs(test_root):
        scene = load_scene(scene_dir)
        images = scene["images"][:q] if q else scene["images"]
        mask, gt = scene["mask"], scene["normals"]
        if gt is None:
            raise ConfigError(f"{scene_dir} has no ground-truth normals")
        t0 = time.time()
        pred, valid = infer_normal_map(model, images, mask,
                                       batch_size=batch_size)
        seconds = time.time() - t0
        name = _scene_name(scene_dir, test_root)
        result = SceneResult(scene=name,
                             variant=scene["meta"].get("lighting", "unknown"),
                             q=images.shape[0],
                             mae=mae_degrees(pred, gt, valid),
                             seconds=seconds)
        report.rows.append(result)
        if error_map_dir is not None:
            err = angular_error_map(pred, gt, valid)
            write_error_map(Path(error_map_dir)
                            / f"{name.replace('/', '_')}_error.png",
                            err, valid)
        if log is not None:
            log(f"{name}: {result.variant} q={result.q} "
                f"mae {result.mae:.2f} deg [{seconds:.1f}s]")
    return report


def _scene_name(scene_dir: Path, root) -> str:
    """Scene's path relative to the evaluation root, '/'-joined."""
    return scene_dir.relative_to(root).as_posix()


def evaluate_maps(pred_root, gt_root, error_map_dir=None) -> EvalReport:
    """Compare saved normal maps against a ground-truth dataset.

    Scenes pair up by their path relative to each root, so a prediction
    tree that mirrors the ground-truth layout (including lighting-variant
    subdirectories) matches one-to-one.
    """
    gt_dirs = {_scene_name(d, gt_root): d for d in _collect_scene_dirs(gt_root)}
    report = EvalReport()
    if error_map_dir is not None:
        Path(error_map_dir).mkdir(parents=True, exist_ok=True)
    for pred_dir in _collect_scene_dirs(pred_root):
        name = _scene_name(pred_dir, pred_root)
        if name not in gt_dirs:
            raise ConfigError(f"no ground-truth scene named {name}")
        gt_scene = load_scene(gt_dirs[name])
        pred = imgio.read_pfm(Path(pred_dir) / "normal.pfm")
        mask = gt_scene["mask"]
        pred_mask_path = Path(pred_dir) / "mask.png"
        if pred_mask_path.exists():
            mask = mask & imgio.read_mask(pred_mask_path)
        report.rows.append(SceneResult(
            scene=name,
            variant=gt_scene["meta"].get("lighting", "unknown"),
            q=gt_scene["images"].shape[0],
            mae=mae_degrees(pred, gt_scene["normals"], mask)))
        if error_map_dir is not None:
            err = angular_error_map(pred, gt_scene["normals"], mask)
            write_error_map(
                Path(error_map_dir) / f"{name.replace('/', '_')}_error.png",
                err, mask)
    return report


def _apply_axis(base: NetworkConfig, axis: str, value) -> NetworkConfig:
    encoder, decoder = replace(base.encoder), replace(base.decoder)
    if axis == "placement":
        encoder = replace(encoder, placement=str(value))
    elif axis == "canonical":
        encoder = replace(encoder, s=int(value))
    elif axis == "uniform":
        encoder = replace(encoder, uniform=_parse_bool(value))
    elif axis == "aggregation":
        decoder = replace(decoder, aggregation=str(value))
    else:
        raise ConfigError(f"axis must be one of {ABLATION_AXES}, got '{axis}'")
    return NetworkConfig(encoder=encoder, decoder=decoder,
                         init_seed=base.init_seed)


def _parse_bool(value) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).lower()
    if text in ("true", "1", "yes"):
        return True
    if text in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got '{value}'")


def run_ablation(axis: str, values, base_config: NetworkConfig,
                 train_config: TrainConfig, data_dir, test_root, out_dir,
                 error_maps: bool = False, log=None) -> list[dict]:
    """Train/evaluate along one configuration axis and rank the results.

    Returns one record per value with the overall and per-variant MAE, and
    writes ``ablation_<axis>.csv`` (ranked by overall MAE) plus per-value
    scene reports under ``out_dir``.  For ``axis='q'`` a single model is
    trained and only the number of images used at test time varies.
    """
    if axis not in ABLATION_AXES:
        raise ConfigError(f"axis must be one of {ABLATION_AXES}, got '{axis}'")
    values = list(values) if values else list(DEFAULT_AXIS_VALUES[axis])
    values = [_canonical_value(axis, v) for v in values]
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = []
    shared_model = None
    for value in values:
        tag = str(value).replace(" ", "")
        if axis == "q":
            if shared_model is None:
                shared_model = _train_fresh(base_config, train_config,
                                            data_dir, out_dir / "model_q.ckpt",
                                            log)
            model, eval_q = shared_model, int(value)
        else:
            config = _apply_axis(base_config, axis, value)
            model = _train_fresh(config, train_config, data_dir,
                                 out_dir / f"model_{axis}_{tag}.ckpt", log)
            eval_q = None
        if log is not None:
            log(f"evaluating {axis}={value}")
        report = evaluate_model(
            model, test_root, q=eval_q,
            error_map_dir=(out_dir / f"errors_{axis}_{tag}"
                           if error_maps else None),
            log=log)
        report.to_csv(out_dir / f"report_{axis}_{tag}.csv")
        record = {"axis": axis, "value": value,
                  "mae": report.overall_mean(),
                  "fingerprint": report.fingerprint}
        record.update({f"mae_{k}": v for k, v in
                       report.mean_by_variant().items()})
        records.append(record)

    ranked = sorted(records, key=lambda r: r["mae"])
    table_path = out_dir / f"ablation_{axis}.csv"
    fields = ["axis", "value", "mae"]
    extra = sorted({k for r in ranked for k in r} - set(fields)
                   - {"fingerprint"})
    with open(table_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields + extra + ["fingerprint"])
        for r in ranked:
            writer.writerow([_fmt(r.get(k, "")) for k in fields + extra]
                            + [r["fingerprint"]])
    if log is not None:
        log(f"wrote {table_path}")
    return records


def _canonical_value(axis: str, value):
    """Normalize a raw (possibly string) axis value to its native type."""
    if axis in ("canonical", "q"):
        try:
            return int(value)
        except ValueError as exc:
            raise ConfigError(f"{axis} values must be integers: {exc}")
    if axis == "uniform":
        return _parse_bool(value)
    return str(value)


def _fmt(value) -> str:
    return f"{value:.6f}" if isinstance(value, float) else str(value)


def _train_fresh(config: NetworkConfig, train_config: TrainConfig, data_dir,
                 ckpt_path, log) -> LightingContextNetwork:
    model = LightingContextNetwork(config)
    if log is not None:
        log(f"training {ckpt_path.name} "
            f"({model.num_parameters()} parameters)")
    result = train(data_dir, model, train_config, ckpt_path, log=log)
    if result.aborted:
        raise ConfigError(f"training aborted for {ckpt_path.name}; "
                          "see last good checkpoint")
    return model
