"""Image container and PNG I/O.

Images are (H, W, C) float32 arrays with intensities in [0, 1].
Operations that can overshoot that range (noise addition, cubic
resampling, network output) mark their results ``unclipped``; saving
clips and quantizes.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import ContractError, DecodeError, UnsupportedFormatError

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class Image:
    """An intensity image. ``data`` is (H, W, C), C in {1, 3}."""

    data: np.ndarray
    unclipped: bool = False

    def __post_init__(self):
        d = self.data
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ContractError(f"image data must be (H, W, 1|3), got shape {d.shape}")
        if d.dtype != np.float32:
            d = d.astype(np.float32)
        if not np.isfinite(d).all():
            raise ContractError("image contains non-finite values")
        if not self.unclipped and (d.min() < -1e-6 or d.max() > 1 + 1e-6):
            raise ContractError(
                f"image values outside [0,1] (range [{d.min():.4g}, {d.max():.4g}]); "
                "construct with unclipped=True for intermediate tensors"
            )
        d = np.ascontiguousarray(d)
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def clipped(self) -> "Image":
        """Return a copy clamped to [0, 1]."""
        if not self.unclipped:
            return self
        return Image(np.clip(self.data, 0.0, 1.0))


def _probe_png_header(raw: bytes) -> tuple[int, int]:
    """Return (bit_depth, color_type) from IHDR, validating the container.

    Walks the chunk structure so decode failures can point at the byte
    offset of the first malformed chunk.
    """
    if len(raw) < 8 or raw[:8] != _PNG_SIGNATURE:
        raise DecodeError("not a PNG file (bad signature)", offset=0)
    pos = 8
    bit_depth = color_type = None
    seen_iend = False
    while pos < len(raw):
        if pos + 8 > len(raw):
            raise DecodeError("truncated chunk header", offset=pos)
        (length,) = struct.unpack(">I", raw[pos : pos + 4])
        ctype = raw[pos + 4 : pos + 8]
        body_end = pos + 8 + length
        if body_end + 4 > len(raw):
            raise DecodeError(f"truncated {ctype.decode('latin1')!r} chunk", offset=pos)
        body = raw[pos + 8 : body_end]
        (crc,) = struct.unpack(">I", raw[body_end : body_end + 4])
        if zlib.crc32(ctype + body) & 0xFFFFFFFF != crc:
            raise DecodeError(f"CRC mismatch in {ctype.decode('latin1')!r} chunk", offset=pos)
        if ctype == b"IHDR":
            if length != 13:
                raise DecodeError("IHDR has wrong length", offset=pos)
            bit_depth, color_type = body[8], body[9]
        elif ctype == b"IEND":
            seen_iend = True
            break
        pos = body_end + 4
    if bit_depth is None:
        raise DecodeError("missing IHDR chunk", offset=8)
    if not seen_iend:
        raise DecodeError("missing IEND chunk", offset=len(raw))
    return bit_depth, color_type


def load_png(path: str) -> Image:
    """Load an 8- or 16-bit grayscale/RGB PNG, scaled to [0, 1]."""
    with open(path, "rb") as fh:
        raw = fh.read()
    bit_depth, color_type = _probe_png_header(raw)
    if color_type not in (0, 2):  # 0 = grayscale, 2 = truecolor
        names = {3: "palette", 4: "gray+alpha", 6: "RGBA"}
        raise UnsupportedFormatError(
            f"unsupported PNG color type {names.get(color_type, color_type)}; "
            "only 8/16-bit grayscale and RGB are accepted"
        )
    if bit_depth not in (8, 16):
        raise UnsupportedFormatError(f"unsupported PNG bit depth {bit_depth}")
    arr = cv2.imdecode(np.frombuffer(raw, np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DecodeError("PNG data could not be decoded", offset=8)
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]  # BGR -> RGB
    peak = 65535.0 if bit_depth == 16 else 255.0
    return Image(arr.astype(np.float32) / peak)


def save_png(image: Image, path: str) -> None:
    """Write an 8-bit PNG; values are clipped to [0, 1] and quantized.

    Quantization rounds half away from zero so output bytes are
    platform-independent; saving already-quantized data round-trips.
    """
    data = np.clip(image.data.astype(np.float64), 0.0, 1.0)
    bytes_ = np.floor(data * 255.0 + 0.5).astype(np.uint8)
    if bytes_.shape[2] == 3:
        bytes_ = bytes_[:, :, ::-1]  # RGB -> BGR
    else:
        bytes_ = bytes_[:, :, 0]
    ok = cv2.imwrite(path, bytes_)
    if not ok:
        raise OSError(f"could not write PNG to {path!r}")


def encode_png(image: Image) -> bytes:
    """Encode to 8-bit PNG bytes (same quantization as save_png)."""
    data = np.clip(image.data.astype(np.float64), 0.0, 1.0)
    bytes_ = np.floor(data * 255.0 + 0.5).astype(np.uint8)
    if bytes_.shape[2] == 3:
        bytes_ = bytes_[:, :, ::-1]
    else:
        bytes_ = bytes_[:, :, 0]
    ok, buf = cv2.imencode(".png", bytes_)
    if not ok:
        raise OSError("PNG encoding failed")
    return buf.tobytes()


def decode_png(raw: bytes) -> Image:
    """Decode PNG bytes with the same contract as load_png."""
    bit_depth, color_type = _probe_png_header(raw)
    if color_type not in (0, 2):
        raise UnsupportedFormatError(f"unsupported PNG color type {color_type}")
    if bit_depth not in (8, 16):
        raise UnsupportedFormatError(f"unsupported PNG bit depth {bit_depth}")
    arr = cv2.imdecode(np.frombuffer(raw, np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise DecodeError("PNG data could not be decoded", offset=8)
    if arr.ndim == 3:
        arr = arr[:, :, ::-1]
    peak = 65535.0 if bit_depth == 16 else 255.0
    return Image(arr.astype(np.float32) / peak)


# ITU-R BT.601 luma, the convention behind standard SR benchmark tables.
_Y_WEIGHTS = np.array([65.481, 128.553, 24.966], dtype=np.float64)


def rgb_to_y(image: Image) -> Image:
    """Convert RGB to the single luma channel: (65.481R + 128.553G + 24.966B + 16)/255."""
    if image.channels != 3:
        raise ContractError("rgb_to_y requires a 3-channel image")
    rgb = image.data.astype(np.float64)
    y = (rgb @ _Y_WEIGHTS + 16.0) / 255.0
    return Image(y[:, :, None].astype(np.float32), unclipped=image.unclipped)


def extract_patch(image: Image, top: int, left: int, size: int) -> Image:
    """Contiguous copy of a size x size patch; must lie fully inside."""
    if top < 0 or left < 0 or top + size > image.height or left + size > image.width:
        raise ContractError(
            f"patch ({top},{left})+{size} out of bounds for {image.height}x{image.width}"
        )
    return Image(image.data[top : top + size, left : left + size].copy(),
                 unclipped=image.unclipped)


def mod_crop(image: Image, s: int) -> Image:
    """Crop to the largest dimensions divisible by s (top-left anchored)."""
    h = image.height - image.height % s
    w = image.width - image.width % s
    if h == image.height and w == image.width:
        return image
    return Image(image.data[:h, :w].copy(), unclipped=image.unclipped)
