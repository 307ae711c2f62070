import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpt.colors import Color, Rgb
from cpt.errors import DimensionMismatch, DuplicateColor, EmptyIntersection, InputError, ShapeMismatch
from cpt.raster import (
    BoundingBox,
    PromptShape,
    RasterImage,
    SegmentMask,
    apply_visual_subprompt,
    blend_block,
    blend_mask,
    decode_png,
    encode_png,
    load_png,
    pure_color_block,
    rasterize_box,
    save_png,
)


def black(w=4, h=4):
    return RasterImage.filled(Rgb(0, 0, 0), w, h)


def brute_blend(pixels, x0, y0, x1, y1, rgb, alpha):
    """Reference per-pixel loop with round-half-up."""
    out = pixels.astype(np.float64).copy()
    for y in range(y0, y1):
        for x in range(x0, x1):
            for c, v in enumerate(rgb):
                out[y, x, c] = np.floor(alpha * pixels[y, x, c] + (1 - alpha) * v + 0.5)
    return out.astype(np.uint8)


def test_blend_block_golden_corner():
    out = blend_block(black(), BoundingBox(0, 0, 2, 2), Rgb(240, 0, 30), 0.5)
    assert out.pixels[0, 0].tolist() == [120, 0, 15]
    assert out.pixels[1, 1].tolist() == [120, 0, 15]
    assert out.pixels[2, 2].tolist() == [0, 0, 0]
    assert out.pixels[0, 2].tolist() == [0, 0, 0]


def test_blend_alpha_one_is_identity():
    img = RasterImage(np.arange(4 * 4 * 3, dtype=np.uint8).reshape(4, 4, 3))
    out = blend_block(img, BoundingBox(0, 0, 4, 4), Rgb(200, 10, 60), 1.0)
    assert out == img
    assert out is not img


def test_blend_alpha_zero_overwrites():
    out = blend_block(black(), BoundingBox(1, 1, 2, 2), Rgb(200, 10, 60), 0.0)
    assert out.pixels[1, 1].tolist() == [200, 10, 60]
    assert out.pixels[0, 0].tolist() == [0, 0, 0]


def test_blend_does_not_mutate_input():
    img = black()
    before = img.pixels.copy()
    blend_block(img, BoundingBox(0, 0, 2, 2), Rgb(255, 255, 255), 0.3)
    assert np.array_equal(img.pixels, before)


def test_fractional_box_rasterization():
    # floor the corner, ceil the far edge, clip to image
    assert rasterize_box(BoundingBox(0.6, 0.2, 1.0, 1.2), 8, 8) == (0, 0, 2, 2)
    assert rasterize_box(BoundingBox(6.5, 6.5, 5, 5), 8, 8) == (6, 6, 8, 8)
    with pytest.raises(EmptyIntersection):
        rasterize_box(BoundingBox(9.0, 0.0, 2, 2), 8, 8)


def test_blend_mask_empty_and_full():
    img = black()
    empty = SegmentMask(np.zeros((4, 4), dtype=np.bool_))
    assert blend_mask(img, empty, Rgb(255, 0, 0), 0.5) == img
    full = SegmentMask(np.ones((4, 4), dtype=np.bool_))
    out = blend_mask(img, full, Rgb(200, 10, 60), 0.0)
    assert np.all(out.pixels == np.array([200, 10, 60], dtype=np.uint8))


def test_blend_mask_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        blend_mask(black(4, 4), SegmentMask(np.ones((3, 4), dtype=np.bool_)), Rgb(1, 2, 3), 0.5)


def test_mask_equals_block_on_box_region():
    rng = np.random.default_rng(0)
    img = RasterImage(rng.integers(0, 256, size=(10, 12, 3), dtype=np.uint8))
    box = BoundingBox(2, 3, 5, 4)
    bits = np.zeros((10, 12), dtype=np.bool_)
    bits[3:7, 2:7] = True
    via_mask = blend_mask(img, SegmentMask(bits), Rgb(240, 0, 30), 0.45)
    via_block = blend_block(img, box, Rgb(240, 0, 30), 0.45)
    assert via_mask == via_block
    # and both agree with the per-pixel reference loop
    assert np.array_equal(via_block.pixels, brute_blend(img.pixels, 2, 3, 7, 7, (240, 0, 30), 0.45))


def test_pure_color_block():
    blk = pure_color_block(Rgb(240, 0, 30), 8, 8)
    assert blk.width == 8 and blk.height == 8
    assert np.all(blk.pixels.reshape(-1, 3) == [240, 0, 30])
    tiny = pure_color_block(Rgb(0, 0, 0), 1, 1)
    assert tiny.pixels.shape == (1, 1, 3)
    wide = pure_color_block(Rgb(255, 255, 255), 2, 3)
    assert wide.width == 2 and wide.height == 3


def test_apply_subprompt_disjoint_commutes():
    img = black(8, 8)
    red = Color(Rgb(240, 0, 30), "red")
    blue = Color(Rgb(0, 10, 255), "blue")
    a = [(BoundingBox(0, 0, 3, 3), red), (BoundingBox(5, 5, 3, 3), blue)]
    b = [(BoundingBox(5, 5, 3, 3), blue), (BoundingBox(0, 0, 3, 3), red)]
    out_a = apply_visual_subprompt(img, a, 0.5)
    out_b = apply_visual_subprompt(img, b, 0.5)
    assert out_a == out_b
    assert out_a.pixels[0, 0].tolist() == [120, 0, 15]
    assert out_a.pixels[6, 6].tolist() == [0, 5, 128]


def test_apply_subprompt_overlap_order():
    img = black(6, 6)
    red = Color(Rgb(240, 0, 30), "red")
    blue = Color(Rgb(0, 10, 255), "blue")
    out = apply_visual_subprompt(
        img, [(BoundingBox(0, 0, 4, 4), red), (BoundingBox(2, 2, 4, 4), blue)], 0.5
    )
    # overlap pixels: red blend then blue blend over it
    once = brute_blend(img.pixels, 0, 0, 4, 4, (240, 0, 30), 0.5)
    twice = brute_blend(once, 2, 2, 6, 6, (0, 10, 255), 0.5)
    assert np.array_equal(out.pixels, twice)


def test_apply_subprompt_empty_is_identity():
    img = black()
    assert apply_visual_subprompt(img, [], 0.5) == img


def test_apply_subprompt_duplicate_color():
    img = black(8, 8)
    red = Color(Rgb(240, 0, 30), "red")
    with pytest.raises(DuplicateColor):
        apply_visual_subprompt(
            img,
            [(BoundingBox(0, 0, 2, 2), red), (BoundingBox(4, 4, 2, 2), red)],
            0.5,
        )


def test_apply_subprompt_shape_checks():
    img = black()
    red = Color(Rgb(240, 0, 30), "red")
    with pytest.raises(ShapeMismatch):
        apply_visual_subprompt(img, [(BoundingBox(0, 0, 2, 2), red)], 0.5, PromptShape.MASK)
    mask = SegmentMask(np.ones((4, 4), dtype=np.bool_))
    with pytest.raises(ShapeMismatch):
        apply_visual_subprompt(img, [(mask, red)], 0.5, PromptShape.BLOCK)
    out = apply_visual_subprompt(img, [(mask, red)], 0.5, PromptShape.MASK)
    assert out.pixels[0, 0].tolist() == [120, 0, 15]


def test_apply_subprompt_alpha_must_be_open_interval():
    img = black()
    red = Color(Rgb(240, 0, 30), "red")
    for bad in (0.0, 1.0, -0.1, 1.1):
        with pytest.raises(InputError):
            apply_visual_subprompt(img, [(BoundingBox(0, 0, 2, 2), red)], bad)


@settings(max_examples=60)
@given(
    alpha=st.floats(0.05, 0.95),
    rgb=st.tuples(*[st.integers(0, 255)] * 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_double_blend_matches_alpha_squared(alpha, rgb, seed):
    rng = np.random.default_rng(seed)
    img = RasterImage(rng.integers(0, 256, size=(6, 6, 3), dtype=np.uint8))
    box = BoundingBox(1, 1, 4, 4)
    color = Rgb(*rgb)
    twice = blend_block(blend_block(img, box, color, alpha), box, color, alpha)
    once = blend_block(img, box, color, alpha * alpha)
    diff = np.abs(twice.pixels.astype(int) - once.pixels.astype(int))
    assert diff.max() <= 1  # rounding slack


def test_dimensions_preserved():
    img = black(7, 5)
    out = blend_block(img, BoundingBox(0, 0, 20, 20), Rgb(1, 2, 3), 0.5)
    assert (out.width, out.height) == (7, 5)


def test_png_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    img = RasterImage(rng.integers(0, 256, size=(9, 13, 3), dtype=np.uint8))
    data = encode_png(img)
    assert decode_png(data) == img
    assert encode_png(decode_png(data)) == data
    path = tmp_path / "img.png"
    save_png(img, path)
    assert load_png(path) == img
