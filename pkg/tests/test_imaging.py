import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import raster_line
from streetscope import synth
from streetscope.errors import DecodeError, DimensionError
from streetscope.imaging import (CannyParams, EdgeMap, GrayImage, LineSegment, canny, hough_lines,
                                 load_image, split_orthogonal_sets, write_pgm)


# ---- GrayImage and file I/O

def test_zero_pgm_decodes(tmp_path):
    p = tmp_path / "z.pgm"
    p.write_bytes(b"P5\n64 48\n255\n" + bytes(64 * 48))
    img = load_image(p)
    assert (img.width, img.height) == (64, 48)
    assert not img.pixels.any()
    assert len(img.data) == 64 * 48


def test_pgm_maxval_65535_rejected(tmp_path):
    p = tmp_path / "wide.pgm"
    p.write_bytes(b"P5\n16 16\n65535\n" + bytes(2 * 256))
    with pytest.raises(DecodeError):
        load_image(p)


@pytest.mark.parametrize("payload", [b"", b"P6\n16 16\n255\n", b"P5\n16 16\n255\n" + bytes(10), b"garbage"])
def test_corrupt_files(tmp_path, payload):
    p = tmp_path / "bad.pgm"
    p.write_bytes(payload)
    with pytest.raises(DecodeError):
        load_image(p)


def test_small_image_rejected(tmp_path):
    p = tmp_path / "s.pgm"
    p.write_bytes(b"P5\n8 8\n255\n" + bytes(64))
    with pytest.raises(DimensionError):
        load_image(p)
    with pytest.raises(DimensionError):
        GrayImage(np.zeros((15, 40), np.uint8))
    with pytest.raises(DimensionError):
        GrayImage.from_bytes(20, 20, bytes(399))


def test_png_grayscale_and_colour(tmp_path):
    from PIL import Image

    px = np.arange(32 * 20, dtype=np.uint8).reshape(20, 32)
    Image.fromarray(px, mode="L").save(tmp_path / "g.png")
    assert np.array_equal(load_image(tmp_path / "g.png").pixels, px)
    Image.fromarray(np.zeros((20, 32, 3), np.uint8), mode="RGB").save(tmp_path / "c.png")
    with pytest.raises(DecodeError):
        load_image(tmp_path / "c.png")


def test_synth_frame_round_trip(tmp_path):
    scene = synth.make_scene(seed=4)
    img, _ = synth.render_line_image(scene, 4, 4, 0.5, seed=1)
    write_pgm(tmp_path / "f.pgm", img)
    back = load_image(tmp_path / "f.pgm")
    assert back.data == img.data


# ---- Canny

def test_uniform_image_has_no_edges():
    em = canny(GrayImage(np.full((40, 50), 128, np.uint8)))
    assert isinstance(em, EdgeMap) and not em.edge.any()


def test_vertical_step_gives_one_column():
    px = np.zeros((64, 64), np.uint8)
    px[:, 32:] = 255
    em = canny(GrayImage(px), CannyParams(1.0, 20.0, 60.0))
    rows, cols = np.nonzero(em.edge)
    assert set(cols.tolist()) in ({31}, {32})
    assert set(rows.tolist()) == set(range(1, 63))


def test_offset_invariance_on_synth_frame():
    img, _ = synth.render_line_image(synth.make_scene(seed=2), 4, 4, 0.0, seed=0)
    px = img.pixels.astype(int)
    px = np.clip(px, 0, 225)   # leave headroom so the shift cannot clip
    a = canny(GrayImage(px.astype(np.uint8)))
    b = canny(GrayImage((px + 30).astype(np.uint8)))
    assert a == b


@given(arrays(np.uint8, (24, 24), elements=st.integers(0, 200)), st.integers(1, 55))
def test_offset_invariance_property(px, shift):
    a = canny(GrayImage(px), CannyParams(1.0, 10.0, 30.0))
    b = canny(GrayImage(px + np.uint8(shift)), CannyParams(1.0, 10.0, 30.0))
    assert a == b


@given(arrays(np.uint8, (20, 24), elements=st.integers(0, 255)))
def test_edges_lie_on_nonzero_gradient(px):
    from streetscope.imaging import gradients

    em = canny(GrayImage(px))
    mag, _ = gradients(px, 1.0)
    assert not (em.edge & (mag == 0)).any()
    assert em.edge.shape == px.shape


def test_contrast_factors_union():
    img, _ = synth.render_line_image(synth.make_scene(seed=3), 4, 4, 0.0, seed=0)
    one = canny(img, CannyParams(contrast_factors=(1.0,)))
    many = canny(img, CannyParams(contrast_factors=(1.0, 0.5)))
    assert (one.edge <= many.edge).all()


@pytest.mark.parametrize("kw", [dict(gaussian_sigma=0), dict(low_threshold=5.0),
                                dict(low_threshold=5.0, high_threshold=5.0),
                                dict(contrast_factors=()), dict(contrast_factors=(1.0, -1.0))])
def test_canny_params_validation(kw):
    with pytest.raises(ValueError):
        CannyParams(**kw)


# ---- Hough

def _dist(seg, pts):
    a, b, c = seg.homogeneous()
    return np.abs(a * pts[:, 0] + b * pts[:, 1] + c) / math.hypot(a, b)


def test_empty_edge_map():
    assert hough_lines(EdgeMap(np.zeros((30, 30), bool))) == []


def test_single_segment_support_within_rho():
    mask = raster_line((10, 10), (90, 50), (64, 100))
    segs = hough_lines(EdgeMap(mask))
    assert len(segs) == 1
    v, u = np.nonzero(mask)
    d = _dist(segs[0], np.column_stack([u, v]).astype(float))
    assert d.max() <= 1.0
    assert segs[0].support >= 30


def test_two_crossing_segments():
    mask = raster_line((10, 10), (90, 50), (64, 100)) | raster_line((10, 55), (90, 15), (64, 100))
    segs = hough_lines(EdgeMap(mask))
    assert len(segs) == 2
    truth = sorted([math.atan2(40, 80), math.atan2(-40, 80) % math.pi])
    got = sorted(s.angle for s in segs)
    assert abs(truth[0] - 0.4636476) < 1e-6
    for g, t in zip(got, truth):
        assert abs(g - t) <= math.pi / 180


def test_every_segment_has_min_votes_support():
    img, _ = synth.render_line_image(synth.make_scene(seed=7), 6, 6, 0.5, seed=3)
    em = canny(img)
    segs = hough_lines(em)
    assert segs
    v, u = np.nonzero(em.edge)
    pix = np.column_stack([u, v]).astype(float)
    for s in segs:
        assert (_dist(s, pix) <= 1.0).sum() >= 30
        assert s.length >= 20.0


def test_hough_is_deterministic():
    img, _ = synth.render_line_image(synth.make_scene(seed=8), 6, 6, 0.5, seed=4)
    em = canny(img)
    assert hough_lines(em) == hough_lines(em)


# ---- line segments and orthogonal sets

@given(st.floats(-500, 500), st.floats(-500, 500), st.floats(-500, 500), st.floats(-500, 500))
def test_segment_angle_matches_endpoints(x0, y0, x1, y1):
    if math.hypot(x1 - x0, y1 - y0) < 1e-6:
        return
    s = LineSegment((x0, y0), (x1, y1))
    assert 0 <= s.angle < math.pi
    expect = math.atan2(y1 - y0, x1 - x0) % math.pi
    diff = abs(s.angle - expect)
    assert min(diff, math.pi - diff) < 1e-9
    assert s.length > 0


def test_degenerate_segment():
    with pytest.raises(ValueError):
        LineSegment((1, 1), (1, 1))


def _at(deg, v=100.0):
    r = math.radians(deg)
    return LineSegment((50.0, v), (50.0 + 40 * math.cos(r), v + 40 * math.sin(r)))


def test_split_by_angle():
    s5, s80, s85 = _at(5), _at(80), _at(85)
    sets = split_orthogonal_sets([s5, s80, s85], horizon_band=10)
    assert sets.road_perpendiculars == [s5]
    assert sets.road_edges == [s80, s85]


def test_split_drops_segments_above_band():
    segs = [LineSegment((0, 5), (40, 8)), LineSegment((10, 0), (12, 9))]
    sets = split_orthogonal_sets(segs, horizon_band=10)
    assert sets.road_edges == [] and sets.road_perpendiculars == []


@given(st.lists(st.tuples(st.floats(0, 180), st.floats(0, 200)), max_size=30),
       st.floats(0.05, 1.5))
def test_split_partitions_retained(specs, split):
    segs = [_at(a, v) for a, v in specs]
    sets = split_orthogonal_sets(segs, 50.0, split)
    ids_e = {id(s) for s in sets.road_edges}
    ids_p = {id(s) for s in sets.road_perpendiculars}
    assert not ids_e & ids_p
    retained = {id(s) for s in segs if not (s.p_start[1] < 50 and s.p_end[1] < 50)}
    assert ids_e | ids_p == retained


def test_synth_lines_classified_without_error():
    scene = synth.make_scene(seed=11)
    _, rendered = synth.render_line_image(scene, 6, 6, 0.0, seed=2)
    segs = [r.segment for r in rendered]
    sets = split_orthogonal_sets(segs, 0.0)
    label = {id(r.segment): r.label for r in rendered}
    assert all(label[id(s)] == "edge" for s in sets.road_edges)
    assert all(label[id(s)] == "perpendicular" for s in sets.road_perpendiculars)
