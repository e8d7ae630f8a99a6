"""Command-line entry point: render, train, infer, eval, ablate, selftest.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
Environment: UNIPS_SEED supplies the seed when no flag or config file sets
one; UNIPS_THREADS sizes worker pools and, when set before start-up, the
numeric backends.  Every subcommand is deterministic given its inputs,
flags, and seed.  Heavy imports happen inside the handlers so thread
limits apply before the numeric libraries initialize.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .errors import ConfigError, UnipsError

__all__ = ["main"]


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _apply_thread_env() -> None:
    text = os.environ.get("UNIPS_THREADS", "")
    if text.isdigit() and int(text) >= 1:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, text)


def _resolve_seed(flag_value) -> int:
    from .config import env_seed

    return env_seed(0) if flag_value is None else int(flag_value)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="unips",
        description="Universal photometric stereo: synthetic data, training, "
                    "inference, evaluation, and ablations.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--objects", type=int, default=10,
                   help="number of objects to attempt (default 10)")
    p.add_argument("--lighting", default="random",
                   choices=["directional", "env", "mix", "random"],
                   help="lighting kind per scene (default random)")
    p.add_argument("--res", type=int, default=128,
                   help="image resolution (default 128)")
    p.add_argument("--images", type=int, default=8,
                   help="images per scene (default 8)")
    p.add_argument("--seed", type=int, default=None,
                   help="dataset seed (default UNIPS_SEED or 0)")
    p.add_argument("--geometry", default=None,
                   choices=["spheres", "blobs", "terrain"],
                   help="restrict the geometry pool (default mixed)")
    p.add_argument("--png16", action="store_true",
                   help="additionally write 16-bit PNG images")
    p.add_argument("--uniform-lighting", action="store_true",
                   help="reuse one lighting condition for all images")
    p.add_argument("--test-set", action="store_true",
                   help="render each object under all three lighting kinds")
    p.add_argument("--threads", type=int, default=None,
                   help="render worker processes (default UNIPS_THREADS or 1)")
    p.set_defaults(handler=_cmd_render)

    p = sub.add_parser("train", help="train a model on a rendered dataset")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--config", default=None, help="INI run configuration")
    p.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint at --out")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--q", type=int, default=None,
                   help="images per scene per step")
    p.add_argument("--vary-q", action="store_true",
                   help="draw 1..q images per step instead of exactly q")
    p.add_argument("--n-random", type=int, default=None,
                   help="random pixel samples per scene")
    p.add_argument("--batch-scenes", type=int, default=None)
    p.add_argument("--no-augment", action="store_true")
    p.add_argument("--placement", default=None,
                   choices=["none", "during-extraction", "pre-fusion",
                            "post-fusion"])
    p.add_argument("--canonical", type=int, default=None,
                   help="canonical resolution s")
    p.add_argument("--uniform", action="store_true",
                   help="pool contexts to one vector per image")
    p.add_argument("--aggregation", default=None,
                   choices=["transformer", "max-pool"])
    p.add_argument("--max-steps", type=int, default=None,
                   help="stop after this many optimizer steps")
    p.set_defaults(handler=_cmd_train)

    p = sub.add_parser("infer", help="predict a normal map from images")
    p.add_argument("--images", required=True,
                   help="glob for the input images (pfm or png)")
    p.add_argument("--mask", required=True, help="mask png path")
    p.add_argument("--ckpt", required=True, help="trained checkpoint")
    p.add_argument("--out", required=True, help="output normal map (pfm)")
    p.add_argument("--png", action="store_true",
                   help="also write an 8-bit preview png next to --out")
    p.add_argument("--batch-size", type=int, default=4096,
                   help="pixels decoded per batch (default 4096)")
    p.set_defaults(handler=_cmd_infer)

    p = sub.add_parser("eval", help="score predicted normal maps")
    p.add_argument("--pred", required=True,
                   help="directory of predicted scenes (normal.pfm each)")
    p.add_argument("--gt", required=True, help="ground-truth dataset root")
    p.add_argument("--report", required=True, help="output CSV path")
    p.add_argument("--error-maps", default=None,
                   help="directory for per-scene error map PNGs")
    p.set_defaults(handler=_cmd_eval)

    p = sub.add_parser("ablate", help="train/evaluate along one config axis")
    p.add_argument("--axis", required=True,
                   choices=["placement", "canonical", "uniform",
                            "aggregation", "q"])
    p.add_argument("--data", required=True, help="training dataset directory")
    p.add_argument("--test", required=True, help="test dataset root")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--values", default=None,
                   help="comma-separated axis values (default: full sweep)")
    p.add_argument("--config", default=None, help="INI run configuration")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--error-maps", action="store_true",
                   help="write error map PNGs per value")
    p.set_defaults(handler=_cmd_ablate)

    p = sub.add_parser("selftest", help="run the built-in invariant suite")
    p.add_argument("--out", default=None, help="write the report to a file")
    p.set_defaults(handler=_cmd_selftest)
    return parser


def _cmd_render(args) -> int:
    from .config import env_threads
    from .render.dataset import generate_dataset, make_test_set

    seed = _resolve_seed(args.seed)
    workers = args.threads if args.threads else env_threads(1)
    lighting = {"env": "environment", "mix": "mixture"}.get(
        args.lighting, args.lighting)
    _log(f"render: out={args.out} objects={args.objects} lighting={lighting} "
         f"res={args.res} images={args.images} seed={seed} workers={workers}")
    if args.test_set:
        manifest = make_test_set(args.out, args.objects, args.images,
                                 args.res, seed=seed, workers=workers,
                                 log=_log)
        emitted = sum(len(v) for v in manifest["variants"].values())
    else:
        manifest = generate_dataset(
            args.out, args.objects, args.images, args.res, lighting=lighting,
            seed=seed, png16=args.png16, geometry_kind=args.geometry,
            uniform_lighting=args.uniform_lighting, workers=workers, log=_log)
        emitted = len(manifest["scenes"])
    print(f"wrote {emitted} scenes under {args.out}")
    return 0


def _train_overrides(args) -> dict:
    overrides = {
        "train.epochs": args.epochs,
        "train.lr": args.lr,
        "train.q": args.q,
        "train.n_random": args.n_random,
        "train.batch_scenes": args.batch_scenes,
        "encoder.placement": args.placement,
        "encoder.s": args.canonical,
        "decoder.aggregation": args.aggregation,
    }
    if args.vary_q:
        overrides["train.vary_q"] = True
    if args.no_augment:
        overrides["train.augment"] = False
    if args.uniform:
        overrides["encoder.uniform"] = True
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    return overrides


def _load_config(args, overrides) -> "RunConfig":
    from .config import env_seed, load_run_config

    config = load_run_config(args.config, overrides)
    if "run.seed" not in config.explicit:
        config.run.seed = env_seed(0)
    return config


def _cmd_train(args) -> int:
    from .config import format_resolved
    from .model import LightingContextNetwork
    from .training import train

    config = _load_config(args, _train_overrides(args))
    _log(format_resolved(config).rstrip())
    model = LightingContextNetwork(config.network_config())
    _log(f"model: {model.num_parameters()} parameters")
    result = train(args.data, model, config.train_config(), args.out,
                   resume=args.resume, max_steps=args.max_steps, log=_log)
    if result.aborted:
        _log("training aborted on a non-finite loss")
        return 2
    print(f"trained {result.epochs_run} epochs ({result.steps} steps), "
          f"final loss {result.final_loss:.6f}, checkpoint {result.checkpoint}")
    return 0


def _read_image_any(path: Path):
    import numpy as np

    from . import imgio
    from .render.dataset import PNG16_RANGE

    if path.suffix.lower() == ".pfm":
        return imgio.read_pfm(path)
    data = imgio.read_png(path)
    if data.dtype == np.uint16:
        return data.astype(np.float32) / 65535.0 * PNG16_RANGE
    return data.astype(np.float32) / 255.0


def _cmd_infer(args) -> int:
    import glob
    import time

    import numpy as np

    from . import imgio
    from .model import infer_normal_map, load_network

    paths = sorted(Path(p) for p in glob.glob(args.images))
    if not paths:
        raise ConfigError(f"no images match '{args.images}'")
    images = np.stack([_read_image_any(p) for p in paths])
    mask = imgio.read_mask(args.mask)
    model = load_network(args.ckpt)
    _log(f"infer: {len(paths)} images at {images.shape[1]}x{images.shape[2]}, "
         f"checkpoint {args.ckpt}")
    t0 = time.time()
    normals, valid = infer_normal_map(model, images, mask,
                                      batch_size=args.batch_size)
    _log(f"inference took {time.time() - t0:.2f}s")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    imgio.write_pfm(out, normals)
    if args.png:
        coded = np.zeros_like(normals)
        coded[valid] = (normals[valid] + 1.0) * 0.5
        imgio.write_png(Path(args.out).with_suffix(".png"),
                        np.round(coded * 255).astype(np.uint8))
    print(f"wrote {args.out}")
    return 0


def _cmd_eval(args) -> int:
    from .evaluation import evaluate_maps

    report = evaluate_maps(args.pred, args.gt, error_map_dir=args.error_maps)
    report.to_csv(args.report)
    for variant, value in report.mean_by_variant().items():
        print(f"{variant}: {value:.3f} deg")
    print(f"overall: {report.overall_mean():.3f} deg over {len(report.rows)} "
          f"scenes; report {args.report}")
    return 0


def _cmd_ablate(args) -> int:
    from .config import format_resolved
    from .evaluation import run_ablation

    overrides = {"train.epochs": args.epochs} if args.epochs else {}
    if args.seed is not None:
        overrides["run.seed"] = args.seed
    config = _load_config(args, overrides)
    _log(format_resolved(config).rstrip())
    values = args.values.split(",") if args.values else None
    records = run_ablation(args.axis, values, config.network_config(),
                           config.train_config(), args.data, args.test,
                           args.out, error_maps=args.error_maps, log=_log)
    for record in sorted(records, key=lambda r: r["mae"]):
        print(f"{args.axis}={record['value']}: {record['mae']:.3f} deg")
    return 0


def _cmd_selftest(args) -> int:
    from .selftest import run_selftest

    _, failures, text = run_selftest(log=print)
    if args.out:
        Path(args.out).write_text(text)
    return 2 if failures else 0


def main(argv=None) -> int:
    _apply_thread_env()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.handler(args)
    except ConfigError as exc:
        _log(f"error: {exc}")
        return 1
    except UnipsError as exc:
        _log(f"error: {exc}")
        return 2
    except OSError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
