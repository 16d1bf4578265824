"""Degradation-aware single-image super-resolution toolkit."""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    DecodeError,
    SrkitError,
    TrainingDiverged,
    UnsupportedFormatError,
)
from .image import Image, load_png, save_png, rgb_to_y, extract_patch, mod_crop

__all__ = [
    "ContractError",
    "DecodeError",
    "SrkitError",
    "TrainingDiverged",
    "UnsupportedFormatError",
    "Image",
    "load_png",
    "save_png",
    "rgb_to_y",
    "extract_patch",
    "mod_crop",
]
