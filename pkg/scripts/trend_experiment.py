#!/usr/bin/env python3
"""Configuration-trend experiment at desk scale.

Renders a shared synthetic training set and a three-variant test set, trains
three network variants on identical data and schedule, and records how test
MAE responds to (a) the number of images available at test time, (b) uniform
context pooling versus spatially-varying contexts, and (c) attention pooling
versus max pooling in the decoder.  Writes machine-readable results (JSON +
CSV reports + loss curves) into the repository's results directory; heavy
intermediates (datasets, checkpoints) stay in the work directory.

Run with --smoke for a minutes-long miniature end-to-end check of the same
pipeline.
"""

import argparse
import json
import shutil
import time
from dataclasses import asdict, replace
from pathlib import Path

from unips.decoder import DecoderConfig
from unips.encoder import EncoderConfig
from unips.evaluation import evaluate_model
from unips.model import LightingContextNetwork, NetworkConfig
from unips.render.dataset import generate_dataset, generate_scene, make_test_set
from unips.training import TrainConfig, train

T0 = time.time()


def log(msg: str) -> None:
    print(f"[{time.time() - T0:7.0f}s] {msg}", flush=True)


def attempts_for(target: int, seed: int, res: int, lighting: str,
                 cap: int = 400) -> int:
    """Smallest attempt count whose accepted scenes reach ``target``.

    The entropy gate runs before any lights are sampled, so probing with
    q=1 reproduces the acceptance pattern of the real render cheaply.
    """
    accepted = 0
    for index in range(cap):
        sample = generate_scene(seed=seed, index=index, q=1, res=res,
                                lighting=lighting)
        if sample is not None:
            accepted += 1
            if accepted == target:
                return index + 1
    raise RuntimeError(f"only {accepted} of {cap} attempts pass the gate")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--work", default="/root/trend_work",
                        help="scratch directory for datasets and checkpoints")
    parser.add_argument("--results", default=None,
                        help="artifact directory (default <repo>/results/trend)")
    parser.add_argument("--smoke", action="store_true",
                        help="miniature end-to-end run for plumbing checks")
    args = parser.parse_args()

    repo = Path(__file__).resolve().parent.parent
    results = Path(args.results) if args.results else repo / "results" / "trend"
    work = Path(args.work)
    work.mkdir(parents=True, exist_ok=True)
    results.mkdir(parents=True, exist_ok=True)

    if args.smoke:
        res, train_target, test_target = 48, 8, 3
        q_train, q_test, eval_qs = 4, 8, (1, 2, 4, 8)
        network = NetworkConfig(
            encoder=EncoderConfig(s=32, c=8, d_e=16, heads=4),
            decoder=DecoderConfig(d_t=32, ff_dim=64, heads=4))
        schedule = TrainConfig(epochs=2, batch_scenes=3, lr=1e-3,
                               weight_decay=0.01, decay_factor=0.8,
                               decay_every=6, n_random=300, q=q_train,
                               vary_q=True, augment=True, seed=0)
    else:
        res, train_target, test_target = 128, 50, 12
        q_train, q_test, eval_qs = 8, 32, (1, 4, 8, 32)
        network = NetworkConfig()          # desk-scale defaults
        schedule = TrainConfig(epochs=18, batch_scenes=3, lr=2e-4,
                               weight_decay=0.01, decay_factor=0.8,
                               decay_every=6, n_random=2500, q=q_train,
                               vary_q=True, augment=True, seed=0)

    train_seed, test_seed = 1000, 2000
    durations: dict[str, float] = {}

    # ------------------------------------------------------------- datasets
    t = time.time()
    train_dir = work / "train"
    if not (train_dir / "dataset.json").exists():
        attempts = attempts_for(train_target, train_seed, res, "random")
        log(f"training set: {attempts} attempts for {train_target} scenes")
        manifest = generate_dataset(train_dir, attempts, q_train, res,
                                    lighting="random", seed=train_seed,
                                    log=log)
        assert len(manifest["scenes"]) == train_target
    train_manifest = json.loads((train_dir / "dataset.json").read_text())
    log(f"training set ready: {len(train_manifest['scenes'])} scenes")

    test_dir = work / "test"
    if not (test_dir / "dataset.json").exists():
        attempts = attempts_for(test_target, test_seed, res, "directional")
        log(f"test set: {attempts} attempts for {test_target} objects")
        make_test_set(test_dir, attempts, q_test, res, seed=test_seed,
                      log=log)
    test_manifest = json.loads((test_dir / "dataset.json").read_text())
    counts = {k: len(v) for k, v in test_manifest["variants"].items()}
    assert all(c == test_target for c in counts.values()), counts
    log(f"test set ready: {counts}")
    durations["render"] = time.time() - t

    # ------------------------------------------------------------- training
    variants = {
        "base": network,
        "uniform": replace(network,
                           encoder=replace(network.encoder, uniform=True)),
        "max-pool": replace(network,
                            decoder=replace(network.decoder,
                                            aggregation="max-pool")),
    }
    models = {}
    for name, config in variants.items():
        t = time.time()
        ckpt = work / f"model_{name}.ckpt"
        model = LightingContextNetwork(config)
        if Path(str(ckpt) + ".train.json").exists():
            meta = json.loads(Path(str(ckpt) + ".train.json").read_text())
            if meta["epoch"] >= schedule.epochs:
                from unips.model import load_network
                log(f"{name}: reusing finished checkpoint")
                models[name] = load_network(ckpt)
                continue
        log(f"{name}: training {model.num_parameters()} parameters")
        result = train(train_dir, model, schedule, ckpt,
                       resume=Path(str(ckpt) + ".train.json").exists(),
                       log=log)
        if result.aborted:
            raise RuntimeError(f"{name}: training aborted")
        log(f"{name}: {result.steps} steps, final loss "
            f"{result.final_loss:.5f}, {result.seconds / 60:.1f} min")
        models[name] = model
        durations[f"train_{name}"] = time.time() - t
        shutil.copy(result.loss_csv, results / f"loss_{name}.csv")

    # ------------------------------------------------------------ evaluation
    evals: dict[str, dict] = {}

    def run_eval(tag: str, model, q: int) -> dict:
        t = time.time()
        report = evaluate_model(model, test_dir, q=q)
        report.to_csv(results / f"report_{tag}.csv")
        entry = {"overall": report.overall_mean(),
                 "by_variant": report.mean_by_variant(),
                 "q": q, "seconds": round(time.time() - t, 1)}
        log(f"eval {tag}: overall {entry['overall']:.2f} deg "
            f"{ {k: round(v, 2) for k, v in entry['by_variant'].items()} }")
        evals[tag] = entry
        return entry

    for q in eval_qs:
        run_eval(f"base_q{q}", models["base"], q)
    run_eval(f"uniform_q{q_train}", models["uniform"], q_train)
    run_eval(f"maxpool_q{q_train}", models["max-pool"], q_train)
    durations["evaluation"] = sum(e["seconds"] for e in evals.values())

    # -------------------------------------------------------------- results
    base_key = f"base_q{q_train}"
    summary = {
        "image_count": {str(q): evals[f"base_q{q}"]["overall"]
                        for q in eval_qs},
        "environment_pooling": {
            "varying": evals[base_key]["by_variant"]["environment"],
            "uniform": evals[f"uniform_q{q_train}"]["by_variant"]
            ["environment"],
        },
        "aggregation": {
            "transformer": evals[base_key]["overall"],
            "max-pool": evals[f"maxpool_q{q_train}"]["overall"],
        },
        "evals": evals,
        "setup": {
            "resolution": res,
            "train_scenes": len(train_manifest["scenes"]),
            "test_objects": test_target,
            "test_variants": sorted(test_manifest["variants"]),
            "train_seed": train_seed,
            "test_seed": test_seed,
            "network": network.to_dict(),
            "schedule": asdict(schedule),
            "smoke": args.smoke,
        },
        "durations_seconds": {k: round(v, 1) for k, v in durations.items()},
    }
    out = results / "trend.json"
    out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log(f"wrote {out}")

    ordered = [summary["image_count"][str(q)] for q in eval_qs]
    log(f"image-count MAE {dict(zip(eval_qs, [round(m, 2) for m in ordered]))}")
    log(f"environment pooling {summary['environment_pooling']}")
    log(f"aggregation {summary['aggregation']}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
