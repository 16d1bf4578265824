"""Binary containers for kernels, PCA bases, and model weights.

All integers are little-endian. Kernel files carry raw taps; basis
files carry the projection rows plus retained energy; weight files
carry a fixed header, the SHA-256 of the paired basis file, dimension-
tagged float32 blocks per layer, and a trailing CRC32 of everything
before it.
"""
from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DecodeError, UnsupportedFormatError
from .kernels import BlurKernel
from .net import BatchNorm, ConvBlock, Model
from .pca import PcaBasis

KERNEL_MAGIC = b"SRKN"
BASIS_MAGIC = b"SRPB"
MODEL_MAGIC = b"SRMD"
FORMAT_VERSION = 1


class _Reader:
    """Byte cursor that reports the offset of whatever fails."""

    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise DecodeError(
                f"truncated file: {what} needs {n} bytes at offset {self.pos}, "
                f"only {len(self.blob) - self.pos} remain",
                offset=self.pos,
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32s(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float32)

    def expect_end(self):
        if self.pos != len(self.blob):
            raise DecodeError(
                f"{len(self.blob) - self.pos} trailing bytes after the payload",
                offset=self.pos,
            )


def _check_magic(r: _Reader, magic: bytes):
    got = r.take(len(magic), "magic")
    if got != magic:
        raise DecodeError(
            f"bad magic {got!r}, expected {magic!r}", offset=0
        )
    version = r.u8("version")
    if version != FORMAT_VERSION:
        raise UnsupportedFormatError(
            f"unsupported version {version}, this build reads {FORMAT_VERSION}"
        )


# ---------------------------------------------------------------------------
# kernels


def encode_kernel(kernel: BlurKernel) -> bytes:
    head = KERNEL_MAGIC + struct.pack("<BH", FORMAT_VERSION, kernel.size)
    return head + kernel.weights.astype("<f4").tobytes()


def decode_kernel(blob: bytes) -> BlurKernel:
    r = _Reader(blob)
    _check_magic(r, KERNEL_MAGIC)
    p = r.u16("kernel size")
    if p == 0 or p % 2 == 0:
        raise DecodeError(f"kernel size must be odd and positive, got {p}", offset=5)
    taps = r.f32s(p * p, "kernel taps")
    r.expect_end()
    return BlurKernel(taps.reshape(p, p).astype(np.float64))


def save_kernel(kernel: BlurKernel, path: str):
    with open(path, "wb") as fh:
        fh.write(encode_kernel(kernel))


def load_kernel(path: str) -> BlurKernel:
    with open(path, "rb") as fh:
        return decode_kernel(fh.read())


# ---------------------------------------------------------------------------
# PCA bases


def encode_basis(basis: PcaBasis) -> bytes:
    head = BASIS_MAGIC + struct.pack(
        "<BIIf", FORMAT_VERSION, basis.dim_in, basis.dim_out, basis.energy_retained
    )
    return head + basis.projection.astype("<f4").tobytes()


def decode_basis(blob: bytes) -> PcaBasis:
    r = _Reader(blob)
    _check_magic(r, BASIS_MAGIC)
    dim_in = r.u32("dim_in")
    dim_out = r.u32("dim_out")
    energy = struct.unpack("<f", r.take(4, "energy"))[0]
    if dim_out == 0 or dim_in == 0 or dim_out > dim_in:
        raise DecodeError(
            f"invalid dims {dim_out}x{dim_in}", offset=5
        )
    rows = r.f32s(dim_in * dim_out, "projection rows")
    r.expect_end()
    try:
        return PcaBasis(rows.reshape(dim_out, dim_in).astype(np.float64), float(energy))
    except ContractError as exc:
        raise DecodeError(f"stored projection is invalid: {exc}", offset=17) from exc


def save_basis(basis: PcaBasis, path: str):
    with open(path, "wb") as fh:
        fh.write(encode_basis(basis))


def load_basis(path: str) -> PcaBasis:
    with open(path, "rb") as fh:
        return decode_basis(fh.read())


def basis_digest(basis: PcaBasis) -> bytes:
    """Content hash of a basis, as embedded in weight files."""
    return hashlib.sha256(encode_basis(basis)).digest()


# ---------------------------------------------------------------------------
# model weights


def _color_and_noise(in_channels: int, t: int):
    rest = in_channels - t
    if rest in (1, 3):
        return rest, False
    if rest in (2, 4):
        return rest - 1, True
    raise DecodeError(
        f"in_channels {in_channels} inconsistent with t={t}", offset=8
    )


def _block_bytes(arr: np.ndarray) -> bytes:
    dims = struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return dims + arr.astype("<f4").tobytes()


def encode_model(model: Model, basis: PcaBasis) -> bytes:
    t = model.coeff_dim
    head = MODEL_MAGIC + struct.pack(
        "<BBBHHBB",
        FORMAT_VERSION,
        model.scale,
        model.depth,
        model.width,
        model.in_channels,
        t,
        1 if model.folded else 0,
    )
    parts = [head, basis_digest(basis)]
    for block in model.layers:
        parts.append(_block_bytes(block.weights))
        parts.append(_block_bytes(block.bias))
        if block.bn is not None:
            for arr in (block.bn.gamma, block.bn.beta,
                        block.bn.running_mean, block.bn.running_var):
                parts.append(_block_bytes(arr))
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def _read_block(r: _Reader, what: str) -> np.ndarray:
    ndim = r.u8(f"{what} rank")
    if ndim == 0 or ndim > 4:
        raise DecodeError(f"{what} has invalid rank {ndim}", offset=r.pos - 1)
    shape = tuple(r.u32(f"{what} dim") for _ in range(ndim))
    count = 1
    for d in shape:
        if d == 0:
            raise DecodeError(f"{what} has a zero dimension", offset=r.pos)
        count *= d
    if count > 1 << 28:
        raise DecodeError(f"{what} block is implausibly large", offset=r.pos)
    return r.f32s(count, what).reshape(shape)


def decode_model(blob: bytes, verify_crc: bool = True) -> tuple[Model, bytes]:
    """Returns (model, basis_digest). CRC failure raises DecodeError
    unless verify_crc is False."""
    if len(blob) < 4:
        raise DecodeError("file shorter than the checksum", offset=0)
    payload, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if verify_crc and zlib.crc32(payload) != crc:
        raise DecodeError(
            "checksum mismatch: file is corrupt", offset=len(blob) - 4
        )
    r = _Reader(payload)
    _check_magic(r, MODEL_MAGIC)
    scale = r.u8("scale")
    depth = r.u8("depth")
    width = r.u16("width")
    in_channels = r.u16("in_channels")
    t = r.u8("t")
    folded_b = r.u8("folded flag")
    if scale not in (2, 3, 4):
        raise DecodeError(f"invalid scale {scale}", offset=5)
    if depth < 2 or folded_b > 1:
        raise DecodeError("invalid depth or folded flag", offset=6)
    folded = bool(folded_b)
    color, noise = _color_and_noise(in_channels, t)
    digest = r.take(32, "basis digest")
    layers = []
    for i in range(depth):
        w = _read_block(r, f"layer {i} weights")
        b = _read_block(r, f"layer {i} bias")
        if w.ndim != 4 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise DecodeError(f"layer {i} weight/bias shapes disagree", offset=r.pos)
        last = i == depth - 1
        bn = None
        if not folded and not last:
            g = _read_block(r, f"layer {i} gamma")
            beta = _read_block(r, f"layer {i} beta")
            mean = _read_block(r, f"layer {i} running mean")
            var = _read_block(r, f"layer {i} running var")
            bn = BatchNorm(g, beta, mean, var)
        layers.append(ConvBlock(w, b, bn=bn, relu=not last))
    r.expect_end()
    model = Model(
        scale=scale,
        depth=depth,
        width=width,
        in_channels=in_channels,
        color_channels=color,
        noise_conditioned=noise,
        layers=layers,
        folded=folded,
    )
    return model, digest


def save_model(model: Model, basis: PcaBasis, path: str):
    with open(path, "wb") as fh:
        fh.write(encode_model(model, basis))


def load_model(path: str) -> tuple[Model, bytes]:
    with open(path, "rb") as fh:
        return decode_model(fh.read())


@dataclass(frozen=True)
class ModelInfo:
    """Header summary used by listings; decoding problems become
    warnings instead of errors."""

    scale: int
    depth: int
    width: int
    in_channels: int
    coeff_dim: int
    folded: bool
    noise_conditioned: bool
    basis_digest: str
    crc_ok: bool


def probe_model(blob: bytes) -> ModelInfo:
    """Header-only summary: never touches the layer blocks, so it still
    works on files whose payload bytes are damaged."""
    if len(blob) < 4:
        raise DecodeError("file shorter than the checksum", offset=0)
    payload, (crc,) = blob[:-4], struct.unpack("<I", blob[-4:])
    crc_ok = zlib.crc32(payload) == crc
    r = _Reader(payload)
    _check_magic(r, MODEL_MAGIC)
    scale = r.u8("scale")
    depth = r.u8("depth")
    width = r.u16("width")
    in_channels = r.u16("in_channels")
    t = r.u8("t")
    folded = bool(r.u8("folded flag"))
    color, noise = _color_and_noise(in_channels, t)
    digest = r.take(32, "basis digest")
    return ModelInfo(
        scale=scale,
        depth=depth,
        width=width,
        in_channels=in_channels,
        coeff_dim=t,
        folded=folded,
        noise_conditioned=noise,
        basis_digest=digest.hex(),
        crc_ok=crc_ok,
    )
