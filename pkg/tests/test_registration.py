import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from streetscope import synth
from streetscope.calibration import build_camera, image_to_world
from streetscope.errors import DegenerateConfiguration, SchemaError, TooFewAnchors
from streetscope.registration import (Anchor, RegistrationTransform, anchors_from_json, apply_registration,
                                      fit_affine, fit_registration, leave_one_out, load_anchors,
                                      load_registration, pairwise_distance_error, save_anchors,
                                      save_registration)


def _scene(seed=0, **kw):
    sc = synth.make_scene(seed=seed, **kw)
    u0, v0, u1 = sc.vanishing_points()
    return sc, build_camera(sc.dims, u0, v0, u1, sc.h)


def _anchors_from_plane(cam, plane, transform):
    uv = np.array([np.asarray(cam.H @ [x, y, 1.0]) for x, y in plane])
    uv = uv[:, :2] / uv[:, 2:]
    bng = apply_registration(transform, np.asarray(plane))
    return [Anchor(f"a{i}", tuple(uv[i]), tuple(bng[i])) for i in range(len(plane))]


PLANE = [(2.0, 10.0), (-4.0, 18.0), (6.0, 25.0), (1.0, 14.0), (-2.0, 30.0)]


def test_pure_translation_fit():
    _, cam = _scene(seed=1)
    plane = np.array(PLANE[:4])
    hom = np.column_stack([plane, np.ones(4)]) @ cam.H.T
    uv = hom[:, :2] / hom[:, 2:]
    mapped = image_to_world(cam, uv)
    anchors = [Anchor(str(i), tuple(uv[i]), (mapped[i, 0] + 530000, mapped[i, 1] + 180000)) for i in range(4)]
    reg = fit_registration(anchors, cam)
    assert np.allclose(reg.A, np.eye(2), atol=1e-9)
    assert np.allclose(reg.t, (530000, 180000), atol=1e-6)
    assert np.abs(reg.residuals).max() < 1e-6


def test_known_transform_recovered():
    _, cam = _scene(seed=2)
    truth = RegistrationTransform.from_decomposition(math.pi / 6, 2, 2, 1, 1, 10, 20)
    reg = fit_registration(_anchors_from_plane(cam, PLANE, truth), cam)
    theta, k1, k2, k3, k4 = reg.decomposition()
    assert theta == pytest.approx(math.pi / 6, abs=1e-8)
    assert (k1, k2, k3, k4) == pytest.approx((2, 2, 1, 1), abs=1e-8)
    assert (reg.tx, reg.ty) == pytest.approx((10, 20), abs=1e-8)


def test_literal_zero_k3_k4_map_is_singular():
    # k3 = k4 = 0 zeroes the second column, so no fit can recover it
    truth = RegistrationTransform.from_decomposition(math.pi / 6, 2, 2, 0, 0, 10, 20)
    assert abs(np.linalg.det(truth.A)) < 1e-12
    plane = np.array(PLANE)
    with pytest.raises(DegenerateConfiguration):
        fit_affine(plane, apply_registration(truth, plane))


def test_too_few_and_collinear():
    _, cam = _scene(seed=3)
    truth = RegistrationTransform.identity()
    with pytest.raises(TooFewAnchors):
        fit_registration(_anchors_from_plane(cam, PLANE[:3], truth), cam)
    line = [(0.0, 10.0 + i) for i in range(5)]
    with pytest.raises(DegenerateConfiguration):
        fit_registration(_anchors_from_plane(cam, line, truth), cam)


affines = st.tuples(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
                    st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)).filter(
    lambda a: abs(a[0] * a[3] - a[1] * a[2]) > 0.05)


@given(affines, st.integers(0, 10_000))
def test_exact_affine_recovered(a, seed):
    rng = np.random.default_rng(seed)
    plane = rng.uniform(-30, 30, (8, 2))
    truth = RegistrationTransform(*a)
    reg = fit_affine(plane, apply_registration(truth, plane))
    got = np.array([reg.a11, reg.a12, reg.a21, reg.a22, reg.tx, reg.ty])
    assert np.allclose(got, a, rtol=0, atol=1e-8 * max(1.0, np.abs(a).max()))


@given(affines)
def test_decomposition_reconstructs(a):
    reg = RegistrationTransform(*a)
    theta, *k = reg.decomposition()
    back = RegistrationTransform.from_decomposition(theta, *k, reg.tx, reg.ty)
    assert np.allclose(back.A, reg.A, atol=1e-9)


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.1, 3), st.floats(0.1, 3))
def test_decomposition_axis_cases(s1, s2, k1, k2):
    # pure rotations by multiples of pi/2 and anti-diagonal maps
    for A in ([[0.0, s1 or 1.0], [s2 or 1.0, 0.0]], [[k1, 0.0], [0.0, -k2]], [[0.0, k1], [-k2, 0.0]]):
        reg = RegistrationTransform(A[0][0], A[0][1], A[1][0], A[1][1], 0.0, 0.0)
        back = RegistrationTransform.from_decomposition(*reg.decomposition(), 0.0, 0.0)
        assert np.allclose(back.A, reg.A, atol=1e-9)


def test_apply_registration_trivial():
    assert np.allclose(apply_registration(RegistrationTransform.identity(), (3.5, -2)), (3.5, -2))
    shift = RegistrationTransform(1, 0, 0, 1, 10, 20)
    assert np.allclose(apply_registration(shift, (0, 0)), (10, 20))


def test_held_out_point_matches_synth():
    rng = np.random.default_rng(4)
    sc, cam = _scene(seed=4)
    reg = fit_registration(synth.anchors_for(sc, 8, rng), cam)
    xy = synth.sample_ground_points(sc, 1, rng)[0]
    plane = image_to_world(cam, sc.project_ground(xy))
    assert np.allclose(apply_registration(reg, plane), sc.to_bng(xy), atol=1e-6)


def test_residuals_sum_to_zero(rng):
    sc, cam = _scene(seed=5)
    reg = fit_registration(synth.anchors_for(sc, 12, rng, bng_noise=0.5), cam)
    assert np.abs(reg.residuals.sum(axis=0)).max() < 1e-9


# ---- pairwise error

def test_epsilon_exact_and_single_pair():
    sc, cam = _scene(seed=6)
    anchors = synth.anchors_for(sc, 6, np.random.default_rng(0))
    assert pairwise_distance_error(anchors, fit_registration(anchors, cam), cam) < 1e-12
    plane = image_to_world(cam, np.array([a.pixel for a in anchors[:2]]))
    d = plane[1] - plane[0]
    d /= np.hypot(*d)
    moved = [Anchor("p", anchors[0].pixel, tuple(plane[0] + d)), Anchor("q", anchors[1].pixel, tuple(plane[1]))]
    # mapped pair is 1 m further apart than the "true" BNG pair
    assert pairwise_distance_error(moved, RegistrationTransform.identity(), cam) == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(TooFewAnchors):
        pairwise_distance_error(anchors[:1], RegistrationTransform.identity(), cam)


@given(st.floats(0, 2 * math.pi), st.floats(-1e5, 1e5), st.floats(-1e5, 1e5))
def test_epsilon_rigid_invariant(phi, dx, dy):
    rng = np.random.default_rng(7)
    sc, cam = _scene(seed=7)
    anchors = synth.anchors_for(sc, 8, rng, bng_noise=0.3)
    reg = fit_registration(anchors, cam)
    R = np.array([[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]])
    t = np.array([dx, dy])
    moved = [Anchor(a.id, a.pixel, tuple(R @ a.bng + t)) for a in anchors]
    reg2 = RegistrationTransform(*(R @ reg.A).ravel(), *(R @ reg.t + t))
    e1 = pairwise_distance_error(anchors, reg, cam)
    e2 = pairwise_distance_error(moved, reg2, cam)
    assert e2 == pytest.approx(e1, rel=1e-6, abs=1e-9)


def test_epsilon_pixel_noise_monte_carlo():
    sc, cam = _scene(seed=8)
    rng = np.random.default_rng(8)
    clean = synth.anchors_for(sc, 10, rng)

    def noisy_eps(r):
        anchors = [Anchor(a.id, tuple(np.array(a.pixel) + r.normal(0, 1, 2)), a.bng) for a in clean]
        return math.sqrt(pairwise_distance_error(anchors, fit_registration(anchors, cam), cam))

    oracle = np.mean([noisy_eps(np.random.default_rng(1000 + i)) for i in range(1000)])
    observed = noisy_eps(np.random.default_rng(1))
    assert 0 <= observed <= 3 * oracle


# ---- leave one out

def _scenes(n, n_anchors, noise, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for s in range(n):
        sc, cam = _scene(seed=s)
        out.append((synth.anchors_for(sc, n_anchors, rng, bng_noise=noise), cam))
    return out


def test_loo_noise_free():
    r = leave_one_out(_scenes(5, 6, 0.0))
    assert r.holdout_error < 1e-6 and r.discrepancy < 1e-6
    assert r.discrepancy == pytest.approx(abs(r.holdout_error - r.in_sample_error), abs=1e-12)


def test_loo_noisy_range():
    r = leave_one_out(_scenes(50, 30, 0.5))
    assert 0.3 <= r.holdout_error <= 1.2
    assert r.discrepancy == pytest.approx(abs(r.holdout_error - r.in_sample_error), abs=1e-12)


def test_loo_deterministic_and_minimum():
    scenes = _scenes(4, 7, 0.5)
    assert leave_one_out(scenes, seed=3) == leave_one_out(scenes, seed=3)
    with pytest.raises(TooFewAnchors):
        leave_one_out(_scenes(1, 4, 0.0))


# ---- files

def test_anchor_file_round_trip(tmp_path):
    sc, _ = _scene(seed=9)
    anchors = synth.anchors_for(sc, 5, np.random.default_rng(0))
    save_anchors(tmp_path / "a.json", anchors)
    rec = json.loads((tmp_path / "a.json").read_text())
    assert set(rec[0]) == {"id", "u", "v", "easting", "northing", "label"}
    assert load_anchors(tmp_path / "a.json") == anchors


@pytest.mark.parametrize("bad", [{"a": 1}, [{"id": "x", "u": 1}], [{"id": "x", "u": "q", "v": 1,
                                                                   "easting": 1, "northing": 2}]])
def test_anchor_schema_errors(bad):
    with pytest.raises(SchemaError):
        anchors_from_json(bad)


def test_nonfinite_anchor():
    with pytest.raises(SchemaError):
        Anchor("x", (float("nan"), 1.0), (0.0, 0.0))


def test_registration_file_round_trip(tmp_path):
    reg = RegistrationTransform(1.1, 0.2, -0.3, 0.9, 530000.0, 180000.0)
    save_registration(tmp_path / "r.json", reg, {"camera_id": "c"})
    back = load_registration(tmp_path / "r.json")
    assert np.array_equal(back.A, reg.A) and np.array_equal(back.t, reg.t)
