"""Grounding-aware augmentations.

Two transforms, composable and fully seeded:

* random translation moves scene and box together, so grounding stays tied to
  the target's position relative to the scene rather than absolute pixels;
* localized CutMix swaps part of the box interior for an external patch while
  every pixel outside the box stays byte-identical.
"""

from __future__ import annotations

import hashlib
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    GroundedInstruction,
    ImageBuffer,
    NormBox,
    PixelBox,
    load_image,
    norm_to_pixel,
    pixel_to_norm,
)
from .render import OverlayStyle, default_style, render_overlay

FRAME_SUFFIXES = (".png", ".jpg", ".jpeg")


class AugmentConfigError(ValueError):
    """Augmentation parameters are unusable (e.g. empty patch pool)."""


@dataclass(frozen=True)
class TranslateParams:
    max_shift_frac_x: float = 0.10
    max_shift_frac_y: float = 0.10
    fill: str = "black"  # "black" | "edge-replicate"
    min_visible_frac: float = 0.5
    max_resample: int = 16

    def __post_init__(self) -> None:
        for name in ("max_shift_frac_x", "max_shift_frac_y"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise AugmentConfigError(f"{name} must be in [0, 1), got {value}")
        if self.fill not in ("black", "edge-replicate"):
            raise AugmentConfigError(f"unknown fill mode {self.fill!r}")


class PatchPool:
    """Replacement patches for CutMix, loaded from a directory of images."""

    def __init__(self, images: Sequence[ImageBuffer]):
        self.images = list(images)

    @classmethod
    def load_dir(cls, path) -> "PatchPool":
        root = Path(path)
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in FRAME_SUFFIXES)
        return cls([load_image(p) for p in files])

    def __len__(self) -> int:
        return len(self.images)

    def choose(self, rng: random.Random) -> ImageBuffer:
        return self.images[rng.randrange(len(self.images))]


@dataclass(frozen=True)
class CutMixParams:
    apply_prob: float = 0.5
    area_frac_range: tuple[float, float] = (0.1, 0.5)
    patch_pool: PatchPool | None = None
    aspect_range: tuple[float, float] = (0.5, 2.0)

    def __post_init__(self) -> None:
        if not 0.0 <= self.apply_prob <= 1.0:
            raise AugmentConfigError(f"apply_prob must be in [0, 1], got {self.apply_prob}")
        lo, hi = self.area_frac_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise AugmentConfigError(f"area_frac_range must satisfy 0 <= lo <= hi <= 1, got {lo}, {hi}")
        if self.apply_prob > 0 and (self.patch_pool is None or len(self.patch_pool) == 0):
            raise AugmentConfigError("patch pool required when apply_prob > 0")


@dataclass(frozen=True)
class TranslateResult:
    image: ImageBuffer
    box: NormBox
    dx: int = 0
    dy: int = 0
    applied: bool = True


def _shift_pixels(image: ImageBuffer, dx: int, dy: int, fill: str) -> np.ndarray:
    """Output pixel (x, y) takes input pixel (x - dx, y - dy)."""
    h, w = image.height, image.width
    src_x = np.arange(w) - dx
    src_y = np.arange(h) - dy
    out = image.pixels[np.clip(src_y, 0, h - 1)][:, np.clip(src_x, 0, w - 1)].copy()
    if fill == "black":
        out[(src_y < 0) | (src_y >= h), :] = 0
        out[:, (src_x < 0) | (src_x >= w)] = 0
    return out


def random_translate(
    image: ImageBuffer,
    box: NormBox,
    params: TranslateParams,
    rng: random.Random,
) -> TranslateResult:
    """Shift scene and box by one integer offset drawn together.

    The shifted box must keep at least half its area inside the frame;
    otherwise the shift is resampled, and after ``max_resample`` rejections the
    input is returned untouched with ``applied=False``.
    """
    w, h = image.width, image.height
    px = norm_to_pixel(box, w, h)
    max_dx = int(params.max_shift_frac_x * w)
    max_dy = int(params.max_shift_frac_y * h)
    chosen = None
    for _ in range(params.max_resample + 1):
        dx = rng.randint(-max_dx, max_dx)
        dy = rng.randint(-max_dy, max_dy)
        shifted = (px.x_min + dx, px.y_min + dy, px.x_max + dx, px.y_max + dy)
        cx0 = max(shifted[0], 0)
        cy0 = max(shifted[1], 0)
        cx1 = min(shifted[2], w)
        cy1 = min(shifted[3], h)
        visible = max(0, cx1 - cx0) * max(0, cy1 - cy0)
        if visible >= params.min_visible_frac * px.area:
            chosen = (dx, dy, cx0, cy0, cx1, cy1)
            break
    if chosen is None:
        return TranslateResult(image=image, box=box, applied=False)
    dx, dy, cx0, cy0, cx1, cy1 = chosen
    out = _shift_pixels(image, dx, dy, params.fill)
    new_box = pixel_to_norm(PixelBox(cx0, cy0, cx1, cy1), w, h)
    return TranslateResult(image=ImageBuffer.from_array(out), box=new_box, dx=dx, dy=dy)


def _patch_rect(bw: int, bh: int, area: float, aspect: float) -> tuple[int, int]:
    """Integer (w, h) fitting inside (bw, bh) with w*h within a row/col of area."""
    sw = int(round(math.sqrt(area * aspect)))
    sw = min(max(sw, 1), bw)
    sh = int(round(area / sw))
    if sh > bh:
        sh = bh
        sw = min(max(int(round(area / sh)), 1), bw)
    elif sh < 1:
        sh = 1
        sw = min(max(int(round(area / sh)), 1), bw)
    return sw, sh


def cutmix_in_box(
    image: ImageBuffer,
    box: NormBox,
    params: CutMixParams,
    rng: random.Random,
) -> ImageBuffer:
    """Replace a sub-rectangle of the box interior with a resized pool patch."""
    if params.apply_prob <= 0.0:
        return image
    if params.patch_pool is None or len(params.patch_pool) == 0:
        raise AugmentConfigError("patch pool required when apply_prob > 0")
    if rng.random() >= params.apply_prob:
        return image
    px = norm_to_pixel(box, image.width, image.height)
    lo, hi = params.area_frac_range
    area = rng.uniform(lo, hi) * px.area
    aspect = rng.uniform(*params.aspect_range)
    sw, sh = _patch_rect(px.width, px.height, area, aspect)
    x0 = px.x_min + rng.randint(0, px.width - sw)
    y0 = px.y_min + rng.randint(0, px.height - sh)
    patch = params.patch_pool.choose(rng)

    from PIL import Image

    resized = np.asarray(
        Image.fromarray(patch.pixels).resize((sw, sh), Image.NEAREST), dtype=np.uint8
    )
    arr = image.mutable_copy()
    arr[y0 : y0 + sh, x0 : x0 + sw] = resized
    return ImageBuffer.from_array(arr)


def derive_seed(root_seed: int, episode_id: str, index: int) -> int:
    """Per-sample 64-bit seed, independent of processing order."""
    digest = hashlib.sha256(f"{episode_id}:{index}".encode("utf-8")).digest()
    return (root_seed ^ int.from_bytes(digest[:8], "big")) & (2**64 - 1)


def augment_sample(
    grounded: GroundedInstruction,
    translate_params: TranslateParams,
    cutmix_params: CutMixParams,
    seed: int,
    style: OverlayStyle | None = None,
) -> GroundedInstruction:
    """CutMix inside the original box, then translate scene and box together.

    The marker is re-rendered at the final box so its pixels stay exact no
    matter what the shift clipped or the patch covered.
    """
    rng = random.Random(seed)
    style = style or default_style(grounded.grounded_image.width, grounded.grounded_image.height)
    image = cutmix_in_box(grounded.grounded_image, grounded.box, cutmix_params, rng)
    moved = random_translate(image, grounded.box, translate_params, rng)
    final = render_overlay(moved.image, moved.box, style)
    return GroundedInstruction(
        text=grounded.text,
        grounded_image=final,
        box=moved.box,
        format=grounded.format,
    )


def augment_batch(
    items: Sequence[GroundedInstruction],
    translate_params: TranslateParams,
    cutmix_params: CutMixParams,
    root_seed: int,
    keys: Sequence[tuple[str, int]] | None = None,
    style: OverlayStyle | None = None,
    max_workers: int = 1,
) -> list[GroundedInstruction]:
    """Map augment_sample over a batch with per-sample derived seeds.

    Seeds depend only on (root seed, key), so any worker count produces the
    same outputs in the same order.
    """
    if keys is None:
        keys = [("", i) for i in range(len(items))]
    if len(keys) != len(items):
        raise ValueError("keys and items must have equal length")
    seeds = [derive_seed(root_seed, eid, idx) for eid, idx in keys]

    def one(pair):
        item, seed = pair
        return augment_sample(item, translate_params, cutmix_params, seed, style)

    if max_workers <= 1:
        return [one(p) for p in zip(items, seeds)]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(one, zip(items, seeds)))
