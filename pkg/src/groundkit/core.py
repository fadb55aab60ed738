"""Box geometry, image buffers, and instruction types shared by every module.

Coordinate conventions used throughout the package:

* wire order: ``[y_min, x_min, y_max, x_max]`` integers on a 0-1000 grid.
  This order exists only at the model boundary (:class:`ThousandBox`).
* canonical order: ``(x_min, y_min, x_max, y_max)`` everywhere else.
* pixel boxes are half-open ``[min, max)`` so areas and clipping need no
  plus/minus-one corrections.
* images are 8-bit RGB, row-major; anything else is converted at ingestion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

# Snap tolerance for the floor/ceil pixel mapping. Decimal-nominal boxes
# (0.411 * 1000) and pixel round trips ((1/49) * 49) land within one float ulp
# of an integer; snapping keeps both exactly on the intended pixel.
_SNAP = 1e-7


class BoxValidationError(ValueError):
    """A box violates an ordering, range, or dimension invariant."""


class GroundingFormat(str, Enum):
    """The three grounded-instruction renderings."""

    BOX_OVERLAY = "overlay"
    OBJECT_MASK = "mask"
    BOX_TEXT = "boxtext"


@dataclass(frozen=True)
class ThousandBox:
    """Integer box in model wire order ``[y_min, x_min, y_max, x_max]``, 0-1000."""

    y_min: int
    x_min: int
    y_max: int
    x_max: int

    def __post_init__(self) -> None:
        for name in ("y_min", "x_min", "y_max", "x_max"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise BoxValidationError(f"{name} must be an integer, got {value!r}")
            if not 0 <= value <= 1000:
                raise BoxValidationError(f"{name} out of range [0, 1000]: {value}")
        if self.y_min >= self.y_max:
            raise BoxValidationError(f"y_min must be < y_max, got {self.y_min} >= {self.y_max}")
        if self.x_min >= self.x_max:
            raise BoxValidationError(f"x_min must be < x_max, got {self.x_min} >= {self.x_max}")

    @classmethod
    def from_wire(cls, values) -> "ThousandBox":
        """Build from a 4-element wire-order sequence."""
        if len(values) != 4:
            raise BoxValidationError(f"wire box needs 4 values, got {len(values)}")
        return cls(values[0], values[1], values[2], values[3])

    def to_wire(self) -> list[int]:
        return [self.y_min, self.x_min, self.y_max, self.x_max]


@dataclass(frozen=True)
class NormBox:
    """Fractional box in canonical ``(x_min, y_min, x_max, y_max)`` order."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise BoxValidationError(f"{name} out of range [0, 1]: {value}")
        if self.x_min >= self.x_max:
            raise BoxValidationError(f"x_min must be < x_max, got {self.x_min} >= {self.x_max}")
        if self.y_min >= self.y_max:
            raise BoxValidationError(f"y_min must be < y_max, got {self.y_min} >= {self.y_max}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class PixelBox:
    """Integer box in canonical order, half-open ``[min, max)``."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise BoxValidationError(f"{name} must be an integer, got {value!r}")
            if value < 0:
                raise BoxValidationError(f"{name} must be >= 0, got {value}")
        if self.x_min >= self.x_max:
            raise BoxValidationError(f"x_min must be < x_max, got {self.x_min} >= {self.x_max}")
        if self.y_min >= self.y_max:
            raise BoxValidationError(f"y_min must be < y_max, got {self.y_min} >= {self.y_max}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class ImageBuffer:
    """Immutable 8-bit RGB image. ``pixels`` is a read-only (H, W, 3) array."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.pixels)
        if arr.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8, got {arr.dtype}")
        if arr.shape != (self.height, self.width, 3):
            raise ValueError(
                f"pixels shape {arr.shape} does not match (height={self.height}, width={self.width}, 3)"
            )
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "ImageBuffer":
        arr = np.asarray(arr, dtype=np.uint8)
        h, w = arr.shape[:2]
        return cls(width=w, height=h, pixels=arr)

    @classmethod
    def filled(cls, width: int, height: int, color=(0, 0, 0)) -> "ImageBuffer":
        arr = np.empty((height, width, 3), dtype=np.uint8)
        arr[:, :] = color
        return cls(width=width, height=height, pixels=arr)

    def mutable_copy(self) -> np.ndarray:
        return self.pixels.copy()

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def __eq__(self, other) -> bool:
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.pixels, other.pixels)
        )


@dataclass(frozen=True)
class Instruction:
    """Minimal textual intent, tagged with its instruction modality."""

    text: str
    modality: str = "text-only"

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("instruction text must be non-empty")
        if self.modality not in ("text-only", "grounded"):
            raise ValueError(f"unknown instruction modality: {self.modality!r}")


@dataclass(frozen=True, eq=False)
class GroundedInstruction:
    """A minimal text intent paired with a marked-up first-frame overhead view."""

    text: str
    grounded_image: ImageBuffer
    box: NormBox
    format: GroundingFormat = GroundingFormat.BOX_OVERLAY

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("instruction text must be non-empty")
        if not isinstance(self.format, GroundingFormat):
            object.__setattr__(self, "format", GroundingFormat(self.format))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundedInstruction):
            return NotImplemented
        return (
            self.text == other.text
            and self.box == other.box
            and self.format == other.format
            and self.grounded_image == other.grounded_image
        )


def thousand_to_norm(b: ThousandBox) -> NormBox:
    """Reorder a wire box to canonical axes and scale 0-1000 to fractions."""
    return NormBox(
        x_min=b.x_min / 1000,
        y_min=b.y_min / 1000,
        x_max=b.x_max / 1000,
        y_max=b.y_max / 1000,
    )


def _fit_axis(lo: int, hi: int, size: int) -> tuple[int, int]:
    # Clamp to [0, size]; if rounding collapsed the span, grow the max edge.
    lo = max(0, min(lo, size))
    hi = max(0, min(hi, size))
    if lo >= hi:
        hi = lo + 1
        if hi > size:
            lo, hi = size - 1, size
    return lo, hi


def norm_to_pixel(b: NormBox, width: int, height: int) -> PixelBox:
    """Map a fractional box onto a pixel grid: floor the min edge, ceil the max."""
    if width < 1 or height < 1:
        raise BoxValidationError(f"image dimensions must be >= 1, got {width}x{height}")
    x_min = math.floor(b.x_min * width + _SNAP)
    x_max = math.ceil(b.x_max * width - _SNAP)
    y_min = math.floor(b.y_min * height + _SNAP)
    y_max = math.ceil(b.y_max * height - _SNAP)
    x_min, x_max = _fit_axis(x_min, x_max, width)
    y_min, y_max = _fit_axis(y_min, y_max, height)
    return PixelBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def pixel_to_norm(b: PixelBox, width: int, height: int) -> NormBox:
    """Inverse of :func:`norm_to_pixel`; exact round trip for any valid pixel box."""
    if b.x_max > width or b.y_max > height:
        raise BoxValidationError(
            f"pixel box {b} exceeds image dimensions {width}x{height}"
        )
    return NormBox(
        x_min=b.x_min / width,
        y_min=b.y_min / height,
        x_max=b.x_max / width,
        y_max=b.y_max / height,
    )


def box_iou(a: PixelBox, b: PixelBox) -> float:
    """Intersection over union of two pixel boxes, in [0, 1]."""
    ix = max(0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union


def load_image(path) -> ImageBuffer:
    """Read an image file, converting to 8-bit RGB."""
    from PIL import Image

    with Image.open(Path(path)) as im:
        rgb = im.convert("RGB")
        return ImageBuffer.from_array(np.asarray(rgb, dtype=np.uint8))


def save_image(image: ImageBuffer, path) -> None:
    from PIL import Image

    Image.fromarray(image.pixels).save(Path(path))


def encode_png(image: ImageBuffer) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image.pixels).save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> ImageBuffer:
    import io

    from PIL import Image

    with Image.open(io.BytesIO(data)) as im:
        return ImageBuffer.from_array(np.asarray(im.convert("RGB"), dtype=np.uint8))
