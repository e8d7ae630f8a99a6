"""Calibrated Lambertian solver: exact recovery on synthetic data, shadow
rejection, degeneracy handling, and agreement with the renderer."""

import numpy as np
import pytest

from unips.baseline import (
    CalibratedProblem,
    load_calibrated,
    solve_lambertian,
    solve_scene,
)
from unips.errors import ConfigError, ShapeError
from unips.render.dataset import generate_scene, write_scene
from unips.render.geometry import SphereSet
from unips.render.lighting import DirectionalLight
from unips.render.materials import MaterialField
from unips.render.scene import render_views

LIGHTS = np.array([
    [0.3, 0.2, 0.9327379053088816],
    [-0.4, 0.1, 0.9110433579144299],
    [0.1, -0.4, 0.9110433579144299],
    [0.0, 0.45, 0.8930285549745876],
])


def unit_rows(m):
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def make_problem(rng, h=6, w=7, q=4):
    """Exact Lambertian images: i = rho/pi * max(0, l.n) * light_rgb."""
    dirs = LIGHTS[:q]
    intensities = rng.uniform(0.5, 2.0, size=(q, 3))
    tilt = rng.uniform(-0.4, 0.4, size=(h, w, 2))
    normals = unit_rows(
        np.concatenate([tilt, np.ones((h, w, 1))], axis=2).reshape(-1, 3)
    ).reshape(h, w, 3)
    rho = rng.uniform(0.2, 1.0, size=(h, w, 3))
    shading = np.maximum(np.einsum("qk,hwk->qhw", dirs, normals), 0.0)
    images = (rho[None] / np.pi) * shading[..., None] * \
        intensities[:, None, None, :]
    mask = np.ones((h, w), dtype=bool)
    problem = CalibratedProblem(images=images, directions=dirs,
                                intensities=intensities, mask=mask)
    return problem, normals, rho


def angles_deg(a, b):
    dot = np.clip(np.sum(a * b, axis=-1), -1.0, 1.0)
    return np.degrees(np.arccos(dot))


def test_exact_recovery_with_colored_albedo(rng):
    problem, normals, rho = make_problem(rng)
    got, albedo, valid = solve_lambertian(problem, tau_fraction=0.0)
    assert valid.all()
    assert angles_deg(got, normals).max() < 1e-5
    np.testing.assert_allclose(albedo, rho.mean(axis=2), rtol=1e-10)


def test_residual_is_solver_limited(rng):
    problem, normals, _ = make_problem(rng)
    got, _, valid = solve_lambertian(problem, tau_fraction=0.0)
    assert np.abs(got[valid] - normals[valid]).max() < 1e-10


def test_shadowed_observation_is_dropped(rng):
    problem, normals, _ = make_problem(rng)
    problem.images[3, 2:4, :] = 0.0          # cast shadow under light 3
    got, _, valid = solve_lambertian(problem)
    assert valid.all()
    assert angles_deg(got, normals).max() < 1e-5


def test_keeping_shadowed_observation_biases_the_solve(rng):
    problem, normals, _ = make_problem(rng)
    problem.images[3, 2:4, :] = 0.0
    got, _, valid = solve_lambertian(problem, tau_fraction=0.0)
    assert angles_deg(got[2:4], normals[2:4]).min() > 1.0


def test_pixel_with_too_few_lights_is_invalid(rng):
    problem, normals, _ = make_problem(rng)
    problem.images[2:, 1, 5] = 0.0            # only two usable lights remain
    got, _, valid = solve_lambertian(problem)
    assert not valid[1, 5]
    np.testing.assert_array_equal(got[1, 5], 0.0)
    assert valid.sum() == problem.mask.sum() - 1


def test_coplanar_lights_are_rejected_not_solved(rng):
    dirs = unit_rows(np.array([
        [0.5, 0.0, 0.8], [-0.5, 0.0, 0.8], [0.0, 0.0, 1.0], [0.8, 0.0, 0.6],
    ]))
    problem, _, _ = make_problem(rng)
    coplanar = CalibratedProblem(images=problem.images, directions=dirs,
                                 intensities=problem.intensities,
                                 mask=problem.mask)
    got, _, valid = solve_lambertian(coplanar, tau_fraction=0.0)
    assert not valid.any()
    np.testing.assert_array_equal(got, 0.0)


def test_empty_mask_is_all_invalid(rng):
    problem, _, _ = make_problem(rng)
    problem.mask[:] = False
    got, albedo, valid = solve_lambertian(problem)
    assert not valid.any() and (got == 0).all() and (albedo == 0).all()


def test_joint_exposure_rescale_is_bit_exact(rng):
    problem, _, _ = make_problem(rng)
    base = solve_lambertian(problem)
    scales = np.array([4.0, 0.5, 2.0, 8.0])   # powers of two
    rescaled = CalibratedProblem(
        images=problem.images * scales[:, None, None, None],
        directions=problem.directions,
        intensities=problem.intensities * scales[:, None],
        mask=problem.mask)
    again = solve_lambertian(rescaled)
    for a, b in zip(base, again):
        np.testing.assert_array_equal(a, b)


# --------------------------------------------------------------- validation

def test_problem_rejects_too_few_images(rng):
    problem, _, _ = make_problem(rng)
    with pytest.raises(ConfigError):
        CalibratedProblem(images=problem.images[:2],
                          directions=problem.directions[:2],
                          intensities=problem.intensities[:2],
                          mask=problem.mask)


def test_problem_rejects_non_unit_directions(rng):
    problem, _, _ = make_problem(rng)
    with pytest.raises(ConfigError):
        CalibratedProblem(images=problem.images,
                          directions=problem.directions * 1.5,
                          intensities=problem.intensities,
                          mask=problem.mask)


def test_problem_rejects_shape_mismatches(rng):
    problem, _, _ = make_problem(rng)
    with pytest.raises(ShapeError):
        CalibratedProblem(images=problem.images[..., :2],
                          directions=problem.directions,
                          intensities=problem.intensities, mask=problem.mask)
    with pytest.raises(ShapeError):
        CalibratedProblem(images=problem.images,
                          directions=problem.directions,
                          intensities=problem.intensities,
                          mask=problem.mask[:-1])


def test_all_dark_light_channel_rejected(rng):
    problem, _, _ = make_problem(rng)
    problem.intensities[1] = 0.0
    with pytest.raises(ConfigError):
        solve_lambertian(problem)


# ------------------------------------------------------- against the renderer

def test_rendered_lambertian_sphere_recovers_normals():
    geometry = SphereSet(np.array([[0.5, 0.5, 0.0]]), np.array([0.4]))
    material = MaterialField.constant(base=(0.8, 0.55, 0.3))
    rgb = np.array([1.2, 1.0, 0.9])
    lights = [DirectionalLight(d, rgb) for d in LIGHTS]
    images, scales, normals, mask = render_views(geometry, material, lights,
                                                 48)
    problem = CalibratedProblem(images=images, directions=LIGHTS,
                                intensities=rgb * scales[:, None], mask=mask)
    got, albedo, valid = solve_lambertian(problem)
    assert valid.sum() > 0.6 * mask.sum()
    err = angles_deg(got[valid], normals[valid])
    assert err.mean() < 0.01
    np.testing.assert_allclose(albedo[valid], (0.8 + 0.55 + 0.3) / 3,
                               rtol=1e-6)


def test_solve_scene_round_trips_written_scene(tmp_path):
    sample = generate_scene(seed=17, index=0, q=4, res=32,
                            lighting="directional")
    scene_dir = tmp_path / "scene_0000"
    write_scene(scene_dir, sample)
    problem = load_calibrated(scene_dir)
    assert problem.images.shape == (4, 32, 32, 3)
    np.testing.assert_allclose(np.linalg.norm(problem.directions, axis=1),
                               1.0, atol=1e-6)
    direct = solve_lambertian(problem)
    wrapped = solve_scene(scene_dir)
    for a, b in zip(direct, wrapped):
        np.testing.assert_array_equal(a, b)
    got, _, valid = wrapped
    assert valid.any()
    err = angles_deg(got[valid], sample["normals"][valid])
    assert np.isfinite(err).all()


def test_load_calibrated_requires_directional_lights(tmp_path):
    sample = generate_scene(seed=29, index=2, q=3, res=32,
                            lighting="environment")
    scene_dir = tmp_path / "scene_0000"
    write_scene(scene_dir, sample)
    with pytest.raises(ConfigError):
        load_calibrated(scene_dir)
