import colorsys
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from kfae.errors import IngestError
from kfae.imaging import (RawFrame, SceneSpec, bgr_to_hsv, generate_synthetic_sequence,
                          load_frame_sequence, preprocess_frame, render_contact_sheet,
                          resize_bilinear, write_frame)


@pytest.mark.parametrize("bgr, hsv", [
    ((0, 0, 255), (0.0, 1.0, 1.0)),
    ((0, 0, 0), (0.0, 0.0, 0.0)),
    ((255, 0, 0), (240 / 360, 1.0, 1.0)),
    ((128, 128, 128), (0.0, 0.0, 128 / 255)),
])
def test_bgr_to_hsv_cases(bgr, hsv):
    np.testing.assert_allclose(bgr_to_hsv(bgr), hsv, atol=1e-6)


def test_bgr_to_hsv_roundtrip_against_colorsys():
    rng = np.random.default_rng(0)
    px = rng.integers(0, 256, size=(10_000, 3))
    hsv = bgr_to_hsv(px)
    back = np.array([colorsys.hsv_to_rgb(*p) for p in hsv]) * 255
    rgb = px[:, ::-1]
    assert np.max(np.abs(back - rgb)) <= 1.0


def test_bgr_to_hsv_hue_in_unit_interval():
    rng = np.random.default_rng(1)
    hsv = bgr_to_hsv(rng.integers(0, 256, size=(5000, 3)))
    assert hsv.min() >= 0.0 and hsv.max() <= 1.0
    assert np.all(hsv[:, 0] < 1.0)


def test_resize_identity():
    img = np.random.default_rng(2).random((3, 7, 5))
    np.testing.assert_allclose(resize_bilinear(img, 5, 7), img, atol=1e-6)


def test_resize_2x2_to_1x1():
    out = resize_bilinear(np.array([[0.0, 1.0], [1.0, 0.0]]), 1, 1)
    np.testing.assert_allclose(out, [[0.5]])


def test_resize_row_upsample_by_hand():
    # src = (i + 0.5) * 2/4 - 0.5 -> -0.25 (clamped), 0.25, 0.75, 1.25 (clamped)
    out = resize_bilinear(np.array([[0.0, 1.0]]), 4, 1)
    np.testing.assert_allclose(out, [[0.0, 0.25, 0.75, 1.0]])


def test_preprocess_uniform_red():
    px = np.zeros((128, 128, 3), np.uint8)
    px[..., 2] = 255
    ft = preprocess_frame(RawFrame(px))
    assert ft.data.shape == (3, 64, 64) and ft.data.dtype == np.float32
    np.testing.assert_allclose(ft.data[0], 0.0)
    np.testing.assert_allclose(ft.data[1], 1.0)
    np.testing.assert_allclose(ft.data[2], 1.0)


def test_preprocess_black_is_zero():
    ft = preprocess_frame(RawFrame(np.zeros((40, 50, 3), np.uint8)))
    assert np.all(ft.data == 0)


def test_preprocess_half_red_half_blue():
    px = np.zeros((64, 64, 3), np.uint8)
    px[:, :32, 2] = 255
    px[:, 32:, 0] = 255
    h = preprocess_frame(RawFrame(px)).data[0]
    np.testing.assert_allclose(h[:, :32], 0.0)
    np.testing.assert_allclose(h[:, 32:], 240 / 360, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, st.tuples(st.integers(1, 20), st.integers(1, 20), st.just(3))))
def test_preprocess_output_in_unit_range(px):
    d = preprocess_frame(RawFrame(px), size=8).data
    assert d.min() >= 0.0 and d.max() <= 1.0


def _write_frames(tmp_path, indices, ext="png", size=(6, 4)):
    rng = np.random.default_rng(0)
    for i in indices:
        px = rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
        Image.fromarray(px).save(tmp_path / f"frame_{i:06d}.{ext}")


def test_load_sequence_in_order(tmp_path):
    _write_frames(tmp_path, [3, 0, 4, 1, 2])
    (tmp_path / "notes.txt").write_text("ignored")
    frames = load_frame_sequence(tmp_path)
    assert [f.index for f in frames] == [0, 1, 2, 3, 4]
    assert frames[0].pixels.shape == (4, 6, 3)


def test_load_ppm_and_channel_order(tmp_path):
    px = np.zeros((2, 3, 3), np.uint8)
    px[..., 0] = 200  # red in RGB file order
    Image.fromarray(px).save(tmp_path / "frame_000000.ppm")
    frames = load_frame_sequence(tmp_path)
    assert frames[0].pixels[0, 0].tolist() == [0, 0, 200]


def test_load_rgba_drops_alpha(tmp_path):
    px = np.zeros((2, 2, 4), np.uint8)
    px[..., 1] = 90
    px[..., 3] = 7
    Image.fromarray(px, "RGBA").save(tmp_path / "frame_000000.png")
    assert load_frame_sequence(tmp_path)[0].pixels[0, 0].tolist() == [0, 90, 0]


def test_load_gap_is_error(tmp_path):
    _write_frames(tmp_path, [0, 1, 3])
    with pytest.raises(IngestError, match="missing frame index 2"):
        load_frame_sequence(tmp_path)


def test_load_empty_dir_is_error(tmp_path):
    with pytest.raises(IngestError, match="no frames found"):
        load_frame_sequence(tmp_path)


def test_load_mixed_dimensions_is_error(tmp_path):
    _write_frames(tmp_path, [0])
    _write_frames(tmp_path, [1], size=(5, 5))
    with pytest.raises(IngestError, match="frame_000001.png"):
        load_frame_sequence(tmp_path)


def test_load_unreadable_file(tmp_path):
    _write_frames(tmp_path, [0])
    (tmp_path / "frame_000001.png").write_bytes(b"not a png")
    with pytest.raises(IngestError, match="frame_000001.png"):
        load_frame_sequence(tmp_path)


def test_synthetic_counts_and_truth(tmp_path):
    truth = generate_synthetic_sequence(SceneSpec(2, 10, seed=1), tmp_path / "f",
                                        tmp_path / "t.json")
    assert len(list((tmp_path / "f").glob("frame_*.png"))) == 20
    positives = [iv for iv in truth["intervals"] if iv["label"] == 1]
    assert len(positives) == 2
    assert positives[0] == {"start": 2, "end": 8, "label": 1}
    assert json.loads((tmp_path / "t.json").read_text()) == truth
    ends = [iv["start"] for iv in truth["intervals"][1:]]
    assert ends == [iv["end"] for iv in truth["intervals"][:-1]]
    assert truth["intervals"][-1]["end"] == truth["total_frames"] == 20


def test_synthetic_deterministic(tmp_path):
    spec = SceneSpec(3, 4, seed=9)
    generate_synthetic_sequence(spec, tmp_path / "a")
    generate_synthetic_sequence(spec, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_synthetic_scene_hues(tmp_path):
    spec = SceneSpec(4, 1, seed=0)
    generate_synthetic_sequence(spec, tmp_path)
    frames = load_frame_sequence(tmp_path)
    hues = []
    for f in frames:
        hsv = bgr_to_hsv(f.pixels)
        # background = the most common hue (the square is achromatic)
        vals, counts = np.unique(np.round(hsv[..., 0][hsv[..., 1] > 0], 3), return_counts=True)
        hues.append(vals[np.argmax(counts)])
    np.testing.assert_allclose(hues, [0.0, 0.25, 0.5, 0.75], atol=2e-3)


@pytest.mark.parametrize("scenes", [2, 5, 8])
def test_synthetic_scenes_separable_in_mean_hue(tmp_path, scenes):
    spec = SceneSpec(scenes, 6, seed=scenes)
    generate_synthetic_sequence(spec, tmp_path)
    means = np.array([preprocess_frame(f).data[0].mean() for f in load_frame_sequence(tmp_path)])
    per_scene = means.reshape(scenes, 6)
    for a in range(scenes):
        for b in range(a + 1, scenes):
            gap = np.abs(per_scene[a][:, None] - per_scene[b][None, :]).min()
            assert gap >= 1 / (2 * scenes)


def test_synthetic_square_moves_two_pixels(tmp_path):
    spec = SceneSpec(1, 5, seed=4)
    generate_synthetic_sequence(spec, tmp_path)
    frames = load_frame_sequence(tmp_path)
    corners = []
    for f in frames:
        ys, xs = np.nonzero(np.all(f.pixels == spec.square_value, axis=2))
        corners.append((xs.min(), ys.min()))
    steps = {abs(a[0] - b[0]) + abs(a[1] - b[1]) for a, b in zip(corners, corners[1:])}
    assert steps == {2}


def _frames(n, size=(20, 10)):
    return [(i, RawFrame(np.full((size[1], size[0], 3), 40 * i, np.uint8), i)) for i in range(n)]


def test_contact_sheet_layout_5_frames():
    img = render_contact_sheet(_frames(5), cols=3)
    assert img.size == (3 * 128 + 4 * 2, 2 * 128 + 3 * 2)
    arr = np.asarray(img)
    # cell (row 1, col 2) is empty -> black
    y0, x0 = 2 + 130, 2 + 2 * 130
    assert np.all(arr[y0:y0 + 128, x0:x0 + 128] == 0)
    # cell (row 1, col 1) holds frame 4
    assert np.all(arr[y0 + 10, 2 + 130 + 10] == 160)


def test_contact_sheet_single_frame():
    img = render_contact_sheet(_frames(1), cols=4)
    assert img.size == (4 * 128 + 5 * 2, 128 + 4)


def test_contact_sheet_6_frames_dims_and_order():
    items = list(reversed(_frames(6)))
    img = render_contact_sheet(items, cols=3)
    assert img.size == (392, 262)
    arr = np.asarray(img)
    firsts = [arr[2 + 60, 2 + c * 130 + 60, 0] for c in range(3)]
    assert firsts == [0, 40, 80]


def test_write_frame_roundtrip(tmp_path):
    px = np.random.default_rng(5).integers(0, 256, (3, 4, 3), dtype=np.uint8)
    write_frame(tmp_path / "frame_000000.png", RawFrame(px))
    assert np.array_equal(load_frame_sequence(tmp_path)[0].pixels, px)
