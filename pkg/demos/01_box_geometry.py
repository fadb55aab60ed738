"""Box conversions: wire order, canonical fractions, and pixel grids.

The multimodal model speaks [y_min, x_min, y_max, x_max] integers on a 0-1000
grid. Everything internal is canonical (x_min, y_min, x_max, y_max). This walk
shows the one reordering site and the exact pixel round trip.
"""

import random

from groundkit.core import (
    NormBox,
    PixelBox,
    ThousandBox,
    box_iou,
    norm_to_pixel,
    pixel_to_norm,
    thousand_to_norm,
)

# A box as the model emits it: y first, 0-1000.
wire = ThousandBox(618, 411, 732, 457)
norm = thousand_to_norm(wire)
print("wire [ymin,xmin,ymax,xmax]:", wire.to_wire())
print("canonical fractions:      ", norm.as_tuple())

# Onto a pixel grid. The min edge floors, the max edge ceils, so the marker
# never loses a row of the referent.
px = norm_to_pixel(norm, 1000, 1000)
print("on a 1000x1000 image:     ", px)

# Round trips are exact for any valid pixel box, at any resolution.
rng = random.Random(0)
for _ in range(5):
    w, h = rng.randint(10, 1920), rng.randint(10, 1080)
    x0, y0 = rng.randint(0, w - 2), rng.randint(0, h - 2)
    box = PixelBox(x0, y0, rng.randint(x0 + 1, w), rng.randint(y0 + 1, h))
    back = norm_to_pixel(pixel_to_norm(box, w, h), w, h)
    print(f"{w}x{h}: {box} -> norm -> {back}  exact={back == box}")

# IoU drives target decoding in the simulator.
print("IoU of half-overlapping boxes:", box_iou(PixelBox(0, 0, 10, 10), PixelBox(5, 0, 15, 10)))
