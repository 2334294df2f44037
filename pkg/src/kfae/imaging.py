"""Frame ingestion, HSV preprocessing, synthetic scenes and contact sheets.

Preprocessing converts BGR bytes to unit-range HSV first and resizes second.
Hue is interpolated linearly, so a boundary between hues near 0 and near 1
blends through the middle of the hue range; that artifact is accepted.
"""
from __future__ import annotations

import colorsys
import json
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import IngestError
from .numerics import Rng

FRAME_RE = re.compile(r"^frame_(\d{6})\.(png|ppm)$")
CELL = 128
BORDER = 2


@dataclass
class RawFrame:
    """Decoded frame; ``pixels`` is ``(height, width, 3)`` uint8 in B,G,R order."""
    pixels: np.ndarray
    index: int = 0

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class FrameTensor:
    data: np.ndarray  # (3, size, size) float32, planes H, S, V
    source_index: int = 0


@dataclass
class SceneSpec:
    scene_count: int
    frames_per_scene: int
    seed: int = 0
    width: int = 128
    height: int = 128
    square: int = 24
    square_value: int = 255

    def __post_init__(self):
        if self.scene_count < 1 or self.frames_per_scene < 1:
            raise ValueError("scene_count and frames_per_scene must be >= 1")
        if not (1 <= self.square <= min(self.width, self.height)):
            raise ValueError("square must fit inside the frame")

    @property
    def total_frames(self) -> int:
        return self.scene_count * self.frames_per_scene


def bgr_to_hsv(pixels) -> np.ndarray:
    """BGR bytes to unit HSV.

    Accepts one ``(b, g, r)`` triple or any array whose last axis is B,G,R.
    Hue is 0 for achromatic pixels; when channels tie for the maximum, red
    takes precedence over green, green over blue.
    """
    px = np.asarray(pixels, dtype=np.float64) / 255.0
    b, g, r = px[..., 0], px[..., 1], px[..., 2]
    v = np.maximum(np.maximum(r, g), b)
    mn = np.minimum(np.minimum(r, g), b)
    delta = v - mn
    safe_v = np.where(v > 0, v, 1.0)
    s = np.where(v > 0, delta / safe_v, 0.0)
    safe_d = np.where(delta > 0, delta, 1.0)
    h_r = np.mod((g - b) / safe_d, 6.0)
    h_g = (b - r) / safe_d + 2.0
    h_b = (r - g) / safe_d + 4.0
    h = np.where(v == r, h_r, np.where(v == g, h_g, h_b))
    h = np.where(delta > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def resize_bilinear(image: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Pixel-center bilinear resize of an ``(H, W)`` or ``(C, H, W)`` array."""
    if out_w < 1 or out_h < 1:
        raise ValueError("target size must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    _, src_h, src_w = img.shape
    if (src_h, src_w) == (out_h, out_w):
        out = img.copy()
        return out[0] if squeeze else out

    def axis_weights(src, dst):
        coord = (np.arange(dst) + 0.5) * (src / dst) - 0.5
        coord = np.clip(coord, 0.0, src - 1)
        lo = np.floor(coord).astype(np.intp)
        hi = np.minimum(lo + 1, src - 1)
        return lo, hi, coord - lo

    y0, y1, wy = axis_weights(src_h, out_h)
    x0, x1, wx = axis_weights(src_w, out_w)
    wy = wy[None, :, None]
    wx = wx[None, None, :]
    top = img[:, y0][:, :, x0] * (1 - wx) + img[:, y0][:, :, x1] * wx
    bot = img[:, y1][:, :, x0] * (1 - wx) + img[:, y1][:, :, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out[0] if squeeze else out


def preprocess_frame(raw: RawFrame, size: int = 64) -> FrameTensor:
    hsv = bgr_to_hsv(raw.pixels).transpose(2, 0, 1)
    data = resize_bilinear(hsv, size, size)
    return FrameTensor(np.clip(data, 0.0, 1.0).astype(np.float32), raw.index)


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            rgb = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise IngestError(f"unreadable frame file {path.name}: {exc}") from exc
    return np.ascontiguousarray(rgb[..., ::-1])


def load_frame_sequence(dir_path) -> list[RawFrame]:
    """Read ``frame_%06d.png``/``.ppm`` files in index order; indices must run 0..N-1."""
    root = Path(dir_path)
    if not root.is_dir():
        raise IngestError(f"no frames found in {root} (not a directory)")
    found: dict[int, Path] = {}
    for entry in sorted(root.iterdir()):
        m = FRAME_RE.match(entry.name)
        if not m:
            continue
        idx = int(m.group(1))
        if idx in found:
            raise IngestError(f"duplicate frame index {idx}: {found[idx].name} and {entry.name}")
        found[idx] = entry
    if not found:
        raise IngestError(f"no frames found in {root}")
    for expected in range(len(found)):
        if expected not in found:
            raise IngestError(f"missing frame index {expected}")

    frames = []
    for idx in range(len(found)):
        pixels = _read_image(found[idx])
        if frames and pixels.shape != frames[0].pixels.shape:
            raise IngestError(
                f"{found[idx].name} is {pixels.shape[1]}x{pixels.shape[0]}, "
                f"expected {frames[0].width}x{frames[0].height}")
        frames.append(RawFrame(pixels, idx))
    return frames


def write_frame(path, frame: RawFrame) -> None:
    Image.fromarray(frame.pixels[..., ::-1].copy(), "RGB").save(path)


def hue_to_bgr(hue: float) -> tuple[int, int, int]:
    r, g, b = colorsys.hsv_to_rgb(hue, 1.0, 1.0)
    return tuple(int(round(c * 255)) for c in (b, g, r))


def scene_intervals(spec: SceneSpec) -> list[dict]:
    """Middle half of every scene is positive, the flanks are negative."""
    f = spec.frames_per_scene
    q = f // 4
    intervals = []
    for s in range(spec.scene_count):
        base = s * f
        pieces = [(base, base + q, 0), (base + q, base + f - q, 1), (base + f - q, base + f, 0)]
        intervals += [{"start": a, "end": b, "label": lab} for a, b, lab in pieces if b > a]
    return intervals


def _bounce(pos: int, span: int) -> int:
    if span <= 0:
        return 0
    pos %= 2 * span
    return pos if pos <= span else 2 * span - pos


def square_path(spec: SceneSpec, rng: Rng) -> list[tuple[int, int]]:
    """Top-left corners of the moving square for one scene.

    The square travels 2 px per frame along a seeded axis and direction.
    The start is chosen so the whole path fits in the frame when possible;
    longer scenes bounce off the border.
    """
    travel = 2 * (spec.frames_per_scene - 1)
    axis = rng.integers(2)
    sign = 1 if rng.integers(2) == 0 else -1
    spans = (spec.width - spec.square, spec.height - spec.square)
    along, across = spans[axis], spans[1 - axis]
    slack = along - travel
    start = rng.integers(slack + 1) if slack >= 0 else 0
    if sign < 0:
        start = along - start
    other = rng.integers(across + 1)
    path = []
    for t in range(spec.frames_per_scene):
        pos = _bounce(start + sign * 2 * t + 2 * along, along)
        path.append((pos, other) if axis == 0 else (other, pos))
    return path


def synthetic_frame(spec: SceneSpec, scene: int, t: int, corner: tuple[int, int]) -> RawFrame:
    """Solid background of hue ``scene / scene_count`` with a black square."""
    pixels = np.empty((spec.height, spec.width, 3), dtype=np.uint8)
    pixels[:] = hue_to_bgr(scene / spec.scene_count)
    x, y = corner
    pixels[y:y + spec.square, x:x + spec.square] = spec.square_value
    return RawFrame(pixels, scene * spec.frames_per_scene + t)


def generate_synthetic_sequence(spec: SceneSpec, out_dir, truth_path=None) -> dict:
    """Write ``scene_count * frames_per_scene`` PNG frames and return the truth dict."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IngestError(f"cannot create output directory {out}: {exc}") from exc
    rng = Rng(spec.seed)
    for s in range(spec.scene_count):
        for t, corner in enumerate(square_path(spec, rng)):
            frame = synthetic_frame(spec, s, t, corner)
            write_frame(out / f"frame_{frame.index:06d}.png", frame)
    truth = {"total_frames": spec.total_frames, "intervals": scene_intervals(spec)}
    if truth_path is not None:
        atomic_write_text(truth_path, json.dumps(truth, indent=2) + "\n")
    return truth


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def render_contact_sheet(keyframes, cols: int = 4) -> Image.Image:
    """Grid montage of ``(frame_index, RawFrame)`` pairs.

    Cells are 128x128, separated and framed by 2 px borders; canvas is
    ``cols*128 + (cols+1)*2`` wide.  Unused cells stay black.
    """
    if not keyframes:
        raise ValueError("contact sheet needs at least one frame")
    if cols < 1:
        raise ValueError("cols must be >= 1")
    items = sorted(keyframes, key=lambda kv: kv[0])
    rows = math.ceil(len(items) / cols)
    width = cols * CELL + (cols + 1) * BORDER
    height = rows * CELL + (rows + 1) * BORDER
    sheet = Image.new("RGB", (width, height), (128, 128, 128))
    black = Image.new("RGB", (CELL, CELL), (0, 0, 0))
    for pos in range(rows * cols):
        r, c = divmod(pos, cols)
        xy = (BORDER + c * (CELL + BORDER), BORDER + r * (CELL + BORDER))
        if pos < len(items):
            frame = items[pos][1]
            thumb = Image.fromarray(frame.pixels[..., ::-1].copy(), "RGB")
            sheet.paste(thumb.resize((CELL, CELL), Image.BILINEAR), xy)
        else:
            sheet.paste(black, xy)
    return sheet
