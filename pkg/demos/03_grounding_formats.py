"""The three grounded-instruction formats over one scene.

Overlay draws the marker band, mask keeps only the box interior, box-text
appends pixel coordinates to the instruction. detect_overlay inverts the
overlay exactly, which is what lets a simulator policy read the marker back.
"""

from pathlib import Path

from groundkit.core import NormBox, norm_to_pixel, save_image
from groundkit.render import (
    default_style,
    detect_overlay,
    render_box_text,
    render_mask,
    render_overlay,
)
from groundkit.sim import gen_scene, render_overhead

OUT = Path(__file__).resolve().parent / "output"
OUT.mkdir(exist_ok=True)

scene = gen_scene("clutter", {"count": 6}, seed=3)
overhead = render_overhead(scene)
box = NormBox(0.30, 0.25, 0.45, 0.50)
style = default_style(overhead.width, overhead.height)

overlay = render_overlay(overhead, box, style)
masked = render_mask(overhead, box)
boxtext = render_box_text("pick up", box, overhead.width, overhead.height)

save_image(overhead, OUT / "scene.png")
save_image(overlay, OUT / "scene_overlay.png")
save_image(masked, OUT / "scene_mask.png")
print("box-text instruction:", repr(boxtext))

detected = detect_overlay(overlay, style)
drawn = norm_to_pixel(box, overhead.width, overhead.height)
print("drawn pixel box:   ", drawn)
print("detected pixel box:", detected)
print("exact inverse:", detected == drawn)
print("images written to", OUT)
