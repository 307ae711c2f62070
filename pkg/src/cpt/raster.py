"""Pixel-level application of visual sub-prompts.

Regions are marked by alpha-blending a solid color over the original pixels:
``out = round(alpha * original + (1 - alpha) * color)`` per channel, so alpha
is the transparency of the overlay (alpha=1 leaves the image untouched,
alpha=0 paints the region solid). Rounding is half-up, per channel, which
keeps golden files bit-exact.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .colors import Color, Rgb
from .errors import (
    DimensionMismatch,
    DuplicateColor,
    EmptyIntersection,
    InputError,
    ShapeMismatch,
)


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left corner (x, y) plus extent (w, h), in pixels.

    Detector outputs are fractional, so coordinates are reals; rasterization
    floors the corner and ceils the far edge.
    """

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        for v in (self.x, self.y, self.w, self.h):
            if not math.isfinite(v):
                raise InputError(f"box coordinates must be finite, got {self}")
        if not (self.w > 0 and self.h > 0):
            raise InputError(f"box extent must be positive, got w={self.w}, h={self.h}")
        if self.x < 0 or self.y < 0:
            raise InputError(f"box corner must be non-negative, got ({self.x}, {self.y})")

    def area(self) -> float:
        return self.w * self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]


class RasterImage:
    """8-bit RGB image; (height, width, 3) uint8 array, row-major.

    Treated as immutable: every operation returns a new image.
    """

    def __init__(self, pixels: np.ndarray):
        pixels = np.asarray(pixels)
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
            raise InputError(f"expected (h, w, 3) uint8 array, got {pixels.shape} {pixels.dtype}")
        if pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise InputError("image must be at least 1x1")
        self.pixels = pixels

    @classmethod
    def filled(cls, rgb: Rgb, width: int, height: int) -> "RasterImage":
        if width < 1 or height < 1:
            raise InputError(f"image dimensions must be >= 1, got {width}x{height}")
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[..., 0] = rgb.r
        arr[..., 1] = rgb.g
        arr[..., 2] = rgb.b
        return cls(arr)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> "RasterImage":
        return RasterImage(self.pixels.copy())

    def __eq__(self, other) -> bool:
        return isinstance(other, RasterImage) and np.array_equal(self.pixels, other.pixels)

    def mean_over_box(self, box: BoundingBox) -> np.ndarray:
        """Per-channel float mean over the rasterized box."""
        x0, y0, x1, y1 = rasterize_box(box, self.width, self.height)
        return self.pixels[y0:y1, x0:x1].astype(np.float64).reshape(-1, 3).mean(axis=0)


@dataclass(frozen=True, eq=False)
class SegmentMask:
    """Boolean coverage mask; dimensions must match the image it marks."""

    bits: np.ndarray

    def __post_init__(self):
        if self.bits.ndim != 2 or self.bits.dtype != np.bool_:
            raise InputError(f"expected 2-d bool array, got {self.bits.shape} {self.bits.dtype}")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]


class PromptShape(enum.Enum):
    BLOCK = "block"
    MASK = "mask"


def rasterize_box(box: BoundingBox, width: int, height: int) -> tuple[int, int, int, int]:
    """Pixel bounds (x0, y0, x1, y1) covered by the box: corner floored, far
    edge ceiled, clipped to the image."""
    x0 = max(0, math.floor(box.x))
    y0 = max(0, math.floor(box.y))
    x1 = min(width, math.ceil(box.x + box.w))
    y1 = min(height, math.ceil(box.y + box.h))
    if x0 >= x1 or y0 >= y1:
        raise EmptyIntersection(f"box {box} covers no pixels of a {width}x{height} image")
    return x0, y0, x1, y1


def _blend(region: np.ndarray, rgb: Rgb, alpha: float) -> np.ndarray:
    overlay = np.array([rgb.r, rgb.g, rgb.b], dtype=np.float64)
    mixed = alpha * region.astype(np.float64) + (1.0 - alpha) * overlay
    return np.floor(mixed + 0.5).astype(np.uint8)  # round half up


def _check_alpha(alpha: float) -> None:
    if not (0.0 <= alpha <= 1.0):
        raise InputError(f"alpha must be in [0, 1], got {alpha}")


def blend_block(img: RasterImage, box: BoundingBox, rgb: Rgb, alpha: float) -> RasterImage:
    _check_alpha(alpha)
    x0, y0, x1, y1 = rasterize_box(box, img.width, img.height)
    out = img.pixels.copy()
    out[y0:y1, x0:x1] = _blend(out[y0:y1, x0:x1], rgb, alpha)
    return RasterImage(out)


def blend_mask(img: RasterImage, mask: SegmentMask, rgb: Rgb, alpha: float) -> RasterImage:
    _check_alpha(alpha)
    if (mask.height, mask.width) != (img.height, img.width):
        raise DimensionMismatch(
            f"mask is {mask.width}x{mask.height}, image is {img.width}x{img.height}"
        )
    out = img.pixels.copy()
    out[mask.bits] = _blend(out[mask.bits], rgb, alpha)
    return RasterImage(out)


def pure_color_block(rgb: Rgb, width: int, height: int) -> RasterImage:
    """Uniform block used as the probe scene in prompt search."""
    return RasterImage.filled(rgb, width, height)


def apply_visual_subprompt(
    img: RasterImage,
    assignments: list[tuple[BoundingBox | SegmentMask, Color]],
    alpha: float,
    shape: PromptShape = PromptShape.BLOCK,
) -> RasterImage:
    """Mark each assigned region with its color, blending in list order
    (later assignments blend over earlier output)."""
    if not (0.0 < alpha < 1.0):
        raise InputError(f"overlay transparency must be in (0, 1), got {alpha}")
    texts = [color.text for _, color in assignments]
    if len(set(texts)) != len(texts):
        raise DuplicateColor(f"assignment colors must be pairwise distinct, got {texts}")
    out = img
    for region, color in assignments:
        if isinstance(region, BoundingBox):
            if shape is not PromptShape.BLOCK:
                raise ShapeMismatch("bounding box given but mask shape requested")
            out = blend_block(out, region, color.visual, alpha)
        elif isinstance(region, SegmentMask):
            if shape is not PromptShape.MASK:
                raise ShapeMismatch("segmentation mask given but block shape requested")
            out = blend_mask(out, region, color.visual, alpha)
        else:
            raise InputError(f"unsupported region type {type(region).__name__}")
    return out


# --- PNG I/O ----------------------------------------------------------------

def encode_png(img: RasterImage) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> RasterImage:
    with Image.open(io.BytesIO(data)) as im:
        return RasterImage(np.asarray(im.convert("RGB"), dtype=np.uint8))


def save_png(img: RasterImage, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def load_png(path: str | Path) -> RasterImage:
    return decode_png(Path(path).read_bytes())


def load_mask_png(path: str | Path) -> SegmentMask:
    """Single-channel PNG; any nonzero value counts as set."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"))
    return SegmentMask(arr != 0)
