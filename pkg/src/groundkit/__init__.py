"""groundkit: build, augment, serve, and evaluate visually grounded manipulation instructions."""

__version__ = "0.1.0"

from .core import (
    BoxValidationError,
    GroundedInstruction,
    GroundingFormat,
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

__all__ = [
    "__version__",
    "BoxValidationError",
    "GroundedInstruction",
    "GroundingFormat",
    "ImageBuffer",
    "Instruction",
    "NormBox",
    "PixelBox",
    "ThousandBox",
    "box_iou",
    "norm_to_pixel",
    "pixel_to_norm",
    "thousand_to_norm",
]
