"""Universal photometric stereo: recover surface normals from image stacks
captured under arbitrary, unknown lighting.

The package bundles the full loop: a procedural renderer that fabricates
training scenes, a lighting-context network that maps an image stack plus
mask to a normal map, a calibrated Lambertian baseline, and the training /
evaluation / ablation harness behind the ``unips`` command-line tool.
"""

__version__ = "0.1.0"

from .errors import (
    CheckpointError,
    ConfigError,
    DegenerateImageError,
    EmptyMaskError,
    NonFiniteError,
    NotFittedError,
    RenderError,
    ShapeError,
    UnipsError,
)

__all__ = [
    "__version__",
    "UnipsError",
    "ShapeError",
    "NonFiniteError",
    "ConfigError",
    "EmptyMaskError",
    "DegenerateImageError",
    "RenderError",
    "CheckpointError",
    "NotFittedError",
]

# heavyweight modules resolve on first attribute access so that importing
# the package (e.g. from the console script) stays cheap and lets thread
# limits apply before the numeric backends load
_LAZY = {
    "PhotometricStereoEstimator": ".estimator",
    "LightingContextNetwork": ".model",
    "NetworkConfig": ".model",
    "infer_normal_map": ".model",
    "save_network": ".model",
    "load_network": ".model",
    "EncoderConfig": ".encoder",
    "DecoderConfig": ".decoder",
    "TrainConfig": ".training",
    "train": ".training",
    "sample_pixels": ".training",
    "mse_loss": ".training",
    "EvalReport": ".evaluation",
    "evaluate_model": ".evaluation",
    "evaluate_maps": ".evaluation",
    "mae_degrees": ".evaluation",
    "run_ablation": ".evaluation",
    "CalibratedProblem": ".baseline",
    "solve_lambertian": ".baseline",
    "load_calibrated": ".baseline",
    "preprocess": ".prep",
    "PreprocessedStack": ".prep",
    "RunConfig": ".config",
    "load_run_config": ".config",
    "generate_dataset": ".render.dataset",
    "make_test_set": ".render.dataset",
    "generate_scene": ".render.dataset",
    "load_scene": ".render.dataset",
    "run_selftest": ".selftest",
}

__all__ += sorted(_LAZY)


def __getattr__(name: str):
    if name in _LAZY:
        import importlib

        module = importlib.import_module(_LAZY[name], __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")


def __dir__():
    return sorted(set(globals()) | set(_LAZY))
