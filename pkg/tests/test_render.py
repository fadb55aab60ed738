import random

import numpy as np
import pytest

from groundkit.core import ImageBuffer, NormBox, PixelBox, box_iou, norm_to_pixel
from groundkit.render import (
    MARKER_COLOR,
    MarkerNotFoundError,
    OverlayStyle,
    default_style,
    detect_overlay,
    render_box_text,
    render_mask,
    render_overlay,
    reserve_marker_color,
)


def random_norm_box(rng) -> NormBox:
    x0 = rng.uniform(0.0, 0.9)
    y0 = rng.uniform(0.0, 0.9)
    return NormBox(x0, y0, rng.uniform(x0 + 0.02, 1.0), rng.uniform(y0 + 0.02, 1.0))


class TestRenderOverlay:
    def test_perimeter_pixel_count(self):
        image = ImageBuffer.filled(100, 100, (0, 0, 0))
        out = render_overlay(image, NormBox(0.2, 0.2, 0.8, 0.8), OverlayStyle(thickness=1))
        red = np.all(out.pixels == MARKER_COLOR, axis=2)
        assert int(red.sum()) == 2 * 60 + 2 * 58  # 236 border pixels of (20,20,80,80)

    def test_full_frame_band(self):
        image = ImageBuffer.filled(50, 40, (7, 7, 7))
        out = render_overlay(image, NormBox(0.0, 0.0, 1.0, 1.0), OverlayStyle(thickness=2))
        red = np.all(out.pixels == MARKER_COLOR, axis=2)
        assert red[:2, :].all() and red[-2:, :].all()
        assert red[:, :2].all() and red[:, -2:].all()
        assert not red[2:-2, 2:-2].any()

    def test_only_band_changes(self, checker_image):
        box = NormBox(0.25, 0.25, 0.75, 0.75)
        style = OverlayStyle(thickness=3)
        out = render_overlay(checker_image, box, style)
        px = norm_to_pixel(box, checker_image.width, checker_image.height)
        diff = np.any(out.pixels != checker_image.pixels, axis=2)
        band = np.zeros_like(diff)
        band[px.y_min : px.y_max, px.x_min : px.x_max] = True
        band[px.y_min + 3 : px.y_max - 3, px.x_min + 3 : px.x_max - 3] = False
        assert not diff[~band].any()
        # analytic band size equals the diff count on a never-red input
        assert int(diff.sum()) == int(band.sum())

    def test_idempotent(self, checker_image):
        box = NormBox(0.1, 0.3, 0.6, 0.9)
        style = OverlayStyle(thickness=2)
        once = render_overlay(checker_image, box, style)
        twice = render_overlay(once, box, style)
        assert once == twice

    def test_box_thinner_than_band_fully_painted(self):
        image = ImageBuffer.filled(100, 100, (0, 0, 0))
        out = render_overlay(image, NormBox(0.50, 0.50, 0.53, 0.53), OverlayStyle(thickness=5))
        red = np.all(out.pixels == MARKER_COLOR, axis=2)
        assert int(red.sum()) == 3 * 3

    def test_input_untouched(self, checker_image):
        before = checker_image.tobytes()
        render_overlay(checker_image, NormBox(0.2, 0.2, 0.8, 0.8))
        assert checker_image.tobytes() == before


class TestRenderMask:
    def test_full_frame_is_identity(self, checker_image):
        assert render_mask(checker_image, NormBox(0.0, 0.0, 1.0, 1.0)) == checker_image

    def test_left_half(self, checker_image):
        out = render_mask(checker_image, NormBox(0.0, 0.0, 0.5, 1.0))
        half = checker_image.width // 2
        assert np.array_equal(out.pixels[:, :half], checker_image.pixels[:, :half])
        assert not out.pixels[:, half:].any()

    def test_per_pixel_oracle(self, checker_image):
        rng = random.Random(3)
        for _ in range(20):
            box = random_norm_box(rng)
            out = render_mask(checker_image, box)
            px = norm_to_pixel(box, checker_image.width, checker_image.height)
            inside = np.zeros((checker_image.height, checker_image.width), dtype=bool)
            inside[px.y_min : px.y_max, px.x_min : px.x_max] = True
            assert np.array_equal(out.pixels[inside], checker_image.pixels[inside])
            assert not out.pixels[~inside].any()


class TestRenderBoxText:
    def test_reference_format(self):
        # pixel box (40, 80, 150, 220) on a 1000x1000 grid
        box = NormBox(0.04, 0.08, 0.15, 0.22)
        assert render_box_text("pick up", box, 1000, 1000) == "pick up x1=40, y1=80, x2=150, y2=220"

    def test_full_frame(self):
        out = render_box_text("place here", NormBox(0, 0, 1, 1), 640, 480)
        assert out == "place here x1=0, y1=0, x2=640, y2=480"

    def test_unicode_preserved(self):
        out = render_box_text("pick up the café cup ☕", NormBox(0, 0, 1, 1), 10, 10)
        assert out.startswith("pick up the café cup ☕ x1=0")


class TestDetectOverlay:
    def test_exact_inverse(self, checker_image):
        box = NormBox(0.2, 0.3, 0.7, 0.9)
        style = default_style(checker_image.width, checker_image.height)
        out = render_overlay(checker_image, box, style)
        detected = detect_overlay(out, style)
        drawn = norm_to_pixel(box, checker_image.width, checker_image.height)
        assert detected == drawn
        assert box_iou(detected, drawn) == 1.0

    def test_no_marker(self, checker_image):
        with pytest.raises(MarkerNotFoundError, match="marker not found"):
            detect_overlay(checker_image)

    def test_thousand_random_boxes(self, checker_image):
        rng = random.Random(11)
        style = OverlayStyle(thickness=2)
        for _ in range(200):
            box = random_norm_box(rng)
            out = render_overlay(checker_image, box, style)
            assert detect_overlay(out, style) == norm_to_pixel(
                box, checker_image.width, checker_image.height
            )

    def test_reserve_marker_color(self):
        arr = np.zeros((4, 4, 3), dtype=np.uint8)
        arr[1, 1] = MARKER_COLOR
        clamped = reserve_marker_color(ImageBuffer.from_array(arr))
        assert tuple(clamped.pixels[1, 1]) == (254, 0, 0)
        with pytest.raises(MarkerNotFoundError):
            detect_overlay(clamped)


class TestDefaultStyle:
    def test_minimum_thickness(self):
        assert default_style(100, 100).thickness == 2

    def test_scales_with_resolution(self):
        assert default_style(2000, 1000).thickness == 8
        assert default_style(640, 480).thickness == max(2, round(0.004 * 640))
