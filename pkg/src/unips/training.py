"""Training loop: pixel sampling, MSE objective, AdamW with step decay.

One step accumulates gradients over a small group of scenes.  Per scene the
stack is augmented, preprocessed, encoded once, and decoded at a sampled
pixel set: every masked pixel whose center projects exactly onto a center
of the canonical grid, plus a budget of random masked pixels so training
also sees sub-pixel context interpolation.  All randomness derives from
counter-based streams keyed on (seed, epoch), which makes runs repeatable
and lets a resumed run continue the exact stream at any epoch boundary.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyMaskError, NonFiniteError, ShapeError
from .model import LightingContextNetwork, save_network
from .nd.checkpoint import read_checkpoint, write_checkpoint
from .nd.nn import RunState
from .nd.optim import AdamW, step_decay_lr
from .nd.tensor import Tensor
from .prep import preprocess
from .render.augment import augment_sample
from .render.dataset import load_scene, scene_dirs

__all__ = ["TrainConfig", "TrainResult", "sample_pixels", "aligned_axis",
           "mse_loss", "train"]

ALIGN_TOL = 1e-6


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_scenes: int = 3
    lr: float = 1e-4
    weight_decay: float = 0.05
    decay_factor: float = 0.8
    decay_every: int = 3
    n_random: int = 2500
    q: int = 8
    vary_q: bool = False
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        positive = {"epochs": self.epochs, "batch_scenes": self.batch_scenes,
                    "lr": self.lr, "decay_factor": self.decay_factor,
                    "decay_every": self.decay_every, "q": self.q}
        for name, value in positive.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.weight_decay < 0 or self.n_random < 0:
            raise ConfigError("weight_decay and n_random must be >= 0")


@dataclass
class TrainResult:
    checkpoint: Path
    loss_csv: Path
    epochs_run: int
    steps: int
    final_loss: float
    aborted: bool = False
    seconds: float = 0.0


def aligned_axis(n: int, s: int) -> np.ndarray:
    """Indices r in [0, n) whose center lands on a canonical center.

    The projection of original pixel r onto the s-sized canonical axis is
    (r + 0.5) * s / n - 0.5; alignment means that value is an integer.
    """
    r = np.arange(n)
    x = (r + 0.5) * (s / n) - 0.5
    return r[np.abs(x - np.round(x)) < ALIGN_TOL]


def sample_pixels(mask: np.ndarray, canonical_res: int, n_random: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Deterministic (row, col) training coordinates within a cropped mask.

    Returns the union of the exactly-aligned masked pixels and ``n_random``
    uniformly drawn masked pixels, deduplicated and sorted row-major.
    """
    mask = np.asarray(mask, dtype=bool)
    masked = np.argwhere(mask)
    if len(masked) == 0:
        raise EmptyMaskError("cannot sample pixels from an empty mask")
    h, w = mask.shape
    rows = aligned_axis(h, canonical_res)
    cols = aligned_axis(w, canonical_res)
    flat = set()
    if len(rows) and len(cols):
        grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
        inside = mask[grid_r, grid_c]
        flat.update((grid_r[inside] * w + grid_c[inside]).tolist())
    if n_random > 0:
        take = min(n_random, len(masked))
        pick = rng.choice(len(masked), size=take, replace=False)
        flat.update((masked[pick, 0] * w + masked[pick, 1]).tolist())
    flat = np.array(sorted(flat), dtype=np.int64)
    return np.stack([flat // w, flat % w], axis=1)


def mse_loss(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean over samples of the squared normal error ||n_hat - n||^2."""
    target = np.asarray(target)
    if pred.shape != target.shape or pred.shape[0] == 0:
        raise ShapeError(
            f"prediction {pred.shape} vs target {target.shape} "
            "(need matching non-empty (n, 3))")
    diff = pred - Tensor(target.astype(pred.data.dtype))
    return (diff * diff).sum() * (1.0 / pred.shape[0])


def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, epoch], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _meta_path(out: Path) -> Path:
    return Path(str(out) + ".train.json")


def _opt_path(out: Path) -> Path:
    return Path(str(out) + ".opt")


def _truncate_csv(path: Path, max_step: int) -> list[list[str]]:
    rows = []
    if path.exists():
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if row and row[0] != "step" and int(row[0]) <= max_step:
                    rows.append(row)
    return rows


def train(data_dir, model: LightingContextNetwork, config: TrainConfig,
          out, resume: bool = False, max_steps: int | None = None,
          log=None) -> TrainResult:
    """Fit the model on a rendered dataset directory.

    Writes the checkpoint (plus optimizer and progress sidecars) after every
    epoch and appends one CSV row per optimizer step.  A non-finite loss or
    gradient aborts the run, leaving the last epoch checkpoint untouched.
    """
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dirs = scene_dirs(data_dir)
    if not dirs:
        raise ConfigError(f"no scene directories under {data_dir}")
    scenes = [load_scene(d) for d in dirs]
    s = model.config.encoder.s

    opt = AdamW(list(model.named_parameters()), lr=config.lr,
                weight_decay=config.weight_decay)
    start_epoch = 0
    global_step = 0
    if resume:
        meta = json.loads(_meta_path(out).read_text())
        start_epoch = meta["epoch"]
        global_step = meta["step"]
        model.load_state_dict(read_checkpoint(out))
        opt.load_state_dict(read_checkpoint(_opt_path(out)))

    csv_path = Path(str(out) + ".loss.csv")
    kept = _truncate_csv(csv_path, global_step) if resume else []
    csv_file = open(csv_path, "w", newline="")
    writer = csv.writer(csv_file)
    writer.writerow(["step", "epoch", "lr", "loss"])
    writer.writerows(kept)
    csv_file.flush()

    t0 = time.time()
    aborted = False
    last_loss = float("nan")
    epochs_run = start_epoch
    try:
        for epoch in range(start_epoch, config.epochs):
            lr = step_decay_lr(config.lr, epoch, config.decay_factor,
                               config.decay_every)
            opt.lr = lr
            rng = _epoch_rng(config.seed, epoch)
            order = rng.permutation(len(scenes))
            groups = [order[i:i + config.batch_scenes]
                      for i in range(0, len(order), config.batch_scenes)]
            for group in groups:
                model.zero_grad()
                losses = []
                for pos, scene_id in enumerate(group):
                    scene = scenes[scene_id]
                    images, mask, normals = (scene["images"], scene["mask"],
                                             scene["normals"])
                    if config.augment:
                        images, mask, normals = augment_sample(
                            images, mask, normals, rng)
                    q_avail = images.shape[0]
                    q_use = (int(rng.integers(1, config.q + 1))
                             if config.vary_q else config.q)
                    pick = rng.choice(q_avail, size=min(q_use, q_avail),
                                      replace=False)
                    stack = preprocess(images[pick], mask, s)
                    coords = sample_pixels(stack.mask, s, config.n_random, rng)
                    r0, _, c0, _ = stack.crop
                    gt = normals[coords[:, 0] + r0, coords[:, 1] + c0]
                    state = RunState(seed=config.seed, step=global_step * 64 + pos,
                                     training=True)
                    pred = model.forward(stack, coords, state)
                    loss = mse_loss(pred, gt)
                    (loss * (1.0 / len(group))).backward()
                    losses.append(float(loss.data))
                step_loss = float(np.mean(losses))
                if not np.isfinite(step_loss):
                    raise NonFiniteError(f"loss diverged at step {global_step}")
                opt.step()
                global_step += 1
                last_loss = step_loss
                writer.writerow([global_step, epoch, f"{lr:.9g}",
                                 f"{step_loss:.9g}"])
                csv_file.flush()
                if log is not None and (global_step % 10 == 0
                                        or global_step == 1):
                    log(f"step {global_step} epoch {epoch} lr {lr:.2e} "
                        f"loss {step_loss:.5f} [{time.time() - t0:.0f}s]")
                if max_steps is not None and global_step >= max_steps:
                    break
            else:
                epochs_run = epoch + 1
                _save_progress(out, model, opt, epochs_run, global_step, config)
                continue
            epochs_run = epoch + 1
            _save_progress(out, model, opt, epochs_run, global_step, config)
            break
    except NonFiniteError as exc:
        aborted = True
        if log is not None:
            log(f"aborted: {exc}; last good checkpoint is epoch {epochs_run}")
    finally:
        csv_file.close()
    return TrainResult(checkpoint=out, loss_csv=csv_path,
                       epochs_run=epochs_run, steps=global_step,
                       final_loss=last_loss, aborted=aborted,
                       seconds=time.time() - t0)


def _save_progress(out: Path, model, opt, epoch: int, step: int,
                   config: TrainConfig) -> None:
    save_network(out, model)
    write_checkpoint(_opt_path(out), opt.state_dict())
    _meta_path(out).write_text(json.dumps(
        {"epoch": epoch, "step": step, "config": asdict(config)},
        indent=2, sort_keys=True) + "\n")
