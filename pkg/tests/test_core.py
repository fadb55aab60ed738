import random

import numpy as np
import pytest

from groundkit.core import (
    BoxValidationError,
    ImageBuffer,
    Instruction,
    NormBox,
    PixelBox,
    ThousandBox,
    box_iou,
    norm_to_pixel,
    pixel_to_norm,
    thousand_to_norm,
)


def random_pixel_box(rng, width, height) -> PixelBox:
    x0 = rng.randint(0, width - 1)
    x1 = rng.randint(x0 + 1, width)
    y0 = rng.randint(0, height - 1)
    y1 = rng.randint(y0 + 1, height)
    return PixelBox(x0, y0, x1, y1)


class TestThousandToNorm:
    def test_reference_box(self):
        out = thousand_to_norm(ThousandBox(618, 411, 732, 457))
        assert out == NormBox(x_min=0.411, y_min=0.618, x_max=0.457, y_max=0.732)

    def test_full_frame(self):
        assert thousand_to_norm(ThousandBox(0, 0, 1000, 1000)) == NormBox(0.0, 0.0, 1.0, 1.0)

    def test_exact_division(self):
        out = thousand_to_norm(ThousandBox(250, 100, 750, 900))
        assert out == NormBox(x_min=0.1, y_min=0.25, x_max=0.9, y_max=0.75)

    def test_rejects_inverted_y(self):
        with pytest.raises(BoxValidationError, match="y_min"):
            ThousandBox(732, 411, 618, 457)

    def test_rejects_out_of_range(self):
        with pytest.raises(BoxValidationError, match="x_max"):
            ThousandBox(0, 0, 1000, 1001)

    def test_rejects_non_integer(self):
        with pytest.raises(BoxValidationError, match="integer"):
            ThousandBox(0, 0, 500, 500.5)

    def test_never_degenerate_and_monotone(self):
        rng = random.Random(7)
        for _ in range(2000):
            y0 = rng.randint(0, 999)
            y1 = rng.randint(y0 + 1, 1000)
            x0 = rng.randint(0, 999)
            x1 = rng.randint(x0 + 1, 1000)
            out = thousand_to_norm(ThousandBox(y0, x0, y1, x1))
            assert out.x_min < out.x_max and out.y_min < out.y_max
            # enlarging the box never shrinks any output extent
            if y0 > 0 and x0 > 0 and y1 < 1000 and x1 < 1000:
                bigger = thousand_to_norm(ThousandBox(y0 - 1, x0 - 1, y1 + 1, x1 + 1))
                assert bigger.x_min <= out.x_min and bigger.x_max >= out.x_max
                assert bigger.y_min <= out.y_min and bigger.y_max >= out.y_max


class TestNormToPixel:
    def test_identity_scaling(self):
        assert norm_to_pixel(NormBox(0.0, 0.0, 1.0, 1.0), 640, 480) == PixelBox(0, 0, 640, 480)

    def test_reference_box_on_grid(self):
        out = norm_to_pixel(NormBox(0.411, 0.618, 0.457, 0.732), 1000, 1000)
        assert out == PixelBox(411, 618, 457, 732)

    def test_degenerate_rounding_expands(self):
        out = norm_to_pixel(NormBox(0.5, 0.5, 0.5004, 0.5004), 100, 100)
        assert out == PixelBox(50, 50, 51, 51)

    def test_tiny_box_at_far_edge_stays_in_bounds(self):
        out = norm_to_pixel(NormBox(0.9999, 0.9999, 1.0, 1.0), 10, 10)
        assert out.x_max <= 10 and out.y_max <= 10
        assert out.x_min < out.x_max and out.y_min < out.y_max


class TestPixelRoundTrip:
    def test_full_frame(self):
        assert pixel_to_norm(PixelBox(0, 0, 640, 480), 640, 480) == NormBox(0, 0, 1, 1)

    def test_reference_inverse(self):
        out = pixel_to_norm(PixelBox(411, 618, 457, 732), 1000, 1000)
        assert out == NormBox(0.411, 0.618, 0.457, 0.732)

    def test_dimension_mismatch(self):
        with pytest.raises(BoxValidationError, match="exceeds"):
            pixel_to_norm(PixelBox(0, 0, 700, 400), 640, 480)

    def test_round_trip_exact_10000(self):
        rng = random.Random(99)
        for _ in range(10_000):
            w = rng.randint(1, 4096)
            h = rng.randint(1, 4096)
            box = random_pixel_box(rng, w, h)
            assert norm_to_pixel(pixel_to_norm(box, w, h), w, h) == box


class TestBoxIou:
    def test_identical(self):
        box = PixelBox(3, 4, 20, 30)
        assert box_iou(box, box) == 1.0

    def test_disjoint(self):
        assert box_iou(PixelBox(0, 0, 10, 10), PixelBox(20, 20, 30, 30)) == 0.0

    def test_half_overlap(self):
        assert box_iou(PixelBox(0, 0, 10, 10), PixelBox(5, 0, 15, 10)) == pytest.approx(1 / 3)

    def test_symmetric_and_bounded(self):
        rng = random.Random(5)
        for _ in range(500):
            a = random_pixel_box(rng, 100, 100)
            b = random_pixel_box(rng, 100, 100)
            iou = box_iou(a, b)
            assert iou == box_iou(b, a)
            assert 0.0 <= iou <= 1.0
            touches = a.x_min < b.x_max and b.x_min < a.x_max and a.y_min < b.y_max and b.y_min < a.y_max
            assert (iou > 0) == touches


class TestImageBuffer:
    def test_shape_validation(self):
        with pytest.raises(ValueError, match="shape"):
            ImageBuffer(width=4, height=4, pixels=np.zeros((4, 5, 3), dtype=np.uint8))

    def test_dtype_validation(self):
        with pytest.raises(ValueError, match="uint8"):
            ImageBuffer(width=2, height=2, pixels=np.zeros((2, 2, 3), dtype=np.float32))

    def test_immutability(self):
        img = ImageBuffer.filled(4, 4, (10, 20, 30))
        with pytest.raises(ValueError):
            img.pixels[0, 0] = (0, 0, 0)

    def test_equality_is_content_based(self):
        a = ImageBuffer.filled(3, 2, (1, 2, 3))
        b = ImageBuffer.filled(3, 2, (1, 2, 3))
        c = ImageBuffer.filled(3, 2, (1, 2, 4))
        assert a == b
        assert a != c


class TestInstruction:
    def test_requires_text(self):
        with pytest.raises(ValueError, match="non-empty"):
            Instruction(text="")

    def test_modality_vocabulary(self):
        with pytest.raises(ValueError, match="modality"):
            Instruction(text="pick up", modality="verbal")
