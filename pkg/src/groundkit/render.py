"""The three grounded-instruction renderings and the overlay inverse.

``render_overlay`` draws a rectangular border band just inside the box,
``render_mask`` blacks out everything outside it, and ``render_box_text``
appends pixel coordinates to the instruction text. ``detect_overlay`` is the
exact inverse of the overlay on scenes that contain no marker-colored pixel;
the simulator's grounded policy and the round-trip checks both rely on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GroundingFormat, ImageBuffer, NormBox, PixelBox, norm_to_pixel

__all__ = [
    "GroundingFormat",
    "OverlayStyle",
    "MarkerNotFoundError",
    "MARKER_COLOR",
    "default_style",
    "render_overlay",
    "render_mask",
    "render_box_text",
    "detect_overlay",
    "reserve_marker_color",
]

# Reserved marker color. Scene content must never use it: the simulator
# guarantees this, and real images can be pre-clamped with reserve_marker_color.
MARKER_COLOR = (255, 0, 0)


class MarkerNotFoundError(ValueError):
    """No pixel matches the marker color."""


@dataclass(frozen=True)
class OverlayStyle:
    color: tuple[int, int, int] = MARKER_COLOR
    thickness: int = 2

    def __post_init__(self) -> None:
        if self.thickness < 1:
            raise ValueError(f"thickness must be >= 1, got {self.thickness}")


def default_style(width: int, height: int) -> OverlayStyle:
    """Marker thickness scales with resolution so boxes stay visible."""
    return OverlayStyle(color=MARKER_COLOR, thickness=max(2, round(0.004 * max(width, height))))


def render_overlay(image: ImageBuffer, box: NormBox, style: OverlayStyle | None = None) -> ImageBuffer:
    """Draw the border band of ``box`` in the marker color; nothing else changes."""
    style = style or default_style(image.width, image.height)
    px = norm_to_pixel(box, image.width, image.height)
    t = style.thickness
    arr = image.mutable_copy()
    ix0, ix1 = px.x_min + t, px.x_max - t
    iy0, iy1 = px.y_min + t, px.y_max - t
    if ix0 < ix1 and iy0 < iy1:
        interior = arr[iy0:iy1, ix0:ix1].copy()
        arr[px.y_min : px.y_max, px.x_min : px.x_max] = style.color
        arr[iy0:iy1, ix0:ix1] = interior
    else:
        # box thinner than twice the band: the whole box is marker
        arr[px.y_min : px.y_max, px.x_min : px.x_max] = style.color
    return ImageBuffer.from_array(arr)


def render_mask(image: ImageBuffer, box: NormBox) -> ImageBuffer:
    """Keep the box interior, zero everything outside it."""
    px = norm_to_pixel(box, image.width, image.height)
    arr = np.zeros_like(image.pixels)
    arr[px.y_min : px.y_max, px.x_min : px.x_max] = image.pixels[
        px.y_min : px.y_max, px.x_min : px.x_max
    ]
    return ImageBuffer.from_array(arr)


def render_box_text(instruction_text: str, box: NormBox, width: int, height: int) -> str:
    """Append the pixel coordinates of the box to the instruction text."""
    px = norm_to_pixel(box, width, height)
    return f"{instruction_text} x1={px.x_min}, y1={px.y_min}, x2={px.x_max}, y2={px.y_max}"


def detect_overlay(image: ImageBuffer, style: OverlayStyle | None = None) -> PixelBox:
    """Tight bounding box of all pixels exactly matching the marker color."""
    color = (style or OverlayStyle()).color
    mask = np.all(image.pixels == np.asarray(color, dtype=np.uint8), axis=2)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise MarkerNotFoundError("marker not found")
    return PixelBox(
        x_min=int(xs.min()),
        y_min=int(ys.min()),
        x_max=int(xs.max()) + 1,
        y_max=int(ys.max()) + 1,
    )


def reserve_marker_color(image: ImageBuffer, color=MARKER_COLOR) -> ImageBuffer:
    """Nudge any scene pixel that collides with the marker color by one step.

    Run before overlaying real photographs so detect_overlay stays exact.
    """
    mask = np.all(image.pixels == np.asarray(color, dtype=np.uint8), axis=2)
    if not mask.any():
        return image
    arr = image.mutable_copy()
    r, g, b = color
    arr[mask] = (max(r - 1, 0) if r else 1, g, b)
    return ImageBuffer.from_array(arr)
