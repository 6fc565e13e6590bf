"""Image containers, sRGB color management and lossless PNG/PNM file I/O.

All pipeline stages work on double-precision linear-light values. Files on
disk are 8- or 16-bit integer codes; 16-bit PNG is the default output depth
so that log-domain processing survives a save/load round trip.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass

import cv2
import numpy as np

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageReadError(OSError):
    """File missing or not decodable at all."""


class UnsupportedImageError(ValueError):
    """File decoded but has an unsupported bit depth, channel count or format."""


@dataclass(frozen=True)
class LinearRgbImage:
    """H x W x 3 nonnegative linear-light intensities (nominal range [0, 1])."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected HxWx3 data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must contain at least one pixel")
        if not np.all(np.isfinite(arr)):
            raise ValueError("channel values must be finite")
        if np.any(arr < 0):
            raise ValueError("channel values must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True)
class GrayImage:
    """H x W scalar image. NaN marks pixels excluded from statistics."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"expected HxW data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must contain at least one pixel")
        if np.any(np.isinf(arr)):
            raise ValueError("values must not be infinite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class BinaryMask:
    """H x W boolean mask annotating an image of the same dimensions."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"expected HxW mask, got shape {arr.shape}")
        if arr.dtype != np.bool_:
            if not np.all(np.isin(arr, (0, 1))):
                raise ValueError("mask values must be boolean or 0/1")
            arr = arr.astype(bool)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())

    @staticmethod
    def empty(height: int, width: int) -> "BinaryMask":
        return BinaryMask(np.zeros((height, width), dtype=bool))


def srgb_to_linear(v: np.ndarray) -> np.ndarray:
    """Standard sRGB electro-optical decode, elementwise on [0, 1]."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.04045, v / 12.92, ((v + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(v: np.ndarray) -> np.ndarray:
    """Inverse of srgb_to_linear on [0, 1]."""
    v = np.asarray(v, dtype=np.float64)
    return np.where(v <= 0.0031308, 12.92 * v, 1.055 * np.power(v, 1 / 2.4) - 0.055)


def _read_bytes(path) -> bytes:
    if not os.path.isfile(path):
        raise ImageReadError(f"no such file: {path}")
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise ImageReadError(f"cannot read {path}: {exc}") from exc


def _decode_png(raw: bytes, path) -> np.ndarray:
    arr = cv2.imdecode(np.frombuffer(raw, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise ImageReadError(f"cannot decode PNG data in {path}")
    if arr.dtype not in (np.uint8, np.uint16):
        raise UnsupportedImageError(f"{path}: unsupported bit depth {arr.dtype}, expected 8 or 16 bit")
    if arr.ndim == 3:
        if arr.shape[2] == 4:
            raise UnsupportedImageError(f"{path}: alpha channel not supported (got 4 channels)")
        if arr.shape[2] != 3:
            raise UnsupportedImageError(f"{path}: unsupported channel count {arr.shape[2]}")
        arr = arr[:, :, ::-1]  # BGR -> RGB
    return arr


_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _decode_pnm(raw: bytes, path) -> np.ndarray:
    magic = raw[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedImageError(f"{path}: only binary PGM (P5) / PPM (P6) supported, got {magic!r}")
    pos = 2
    fields = []
    for _ in range(3):
        m = _PNM_TOKEN.match(raw, pos)
        if m is None:
            raise ImageReadError(f"{path}: truncated PNM header")
        fields.append(m.group(1))
        pos = m.end()
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise ImageReadError(f"{path}: malformed PNM header") from exc
    if maxval not in (255, 65535):
        raise UnsupportedImageError(f"{path}: unsupported PNM maxval {maxval}, expected 255 or 65535")
    pos += 1  # single whitespace after maxval
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval == 65535 else np.dtype(np.uint8)
    count = width * height * channels
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    if data.size != count:
        raise ImageReadError(f"{path}: truncated PNM pixel data")
    arr = data.astype(np.uint16 if maxval == 65535 else np.uint8)
    if channels == 3:
        return arr.reshape(height, width, 3)
    return arr.reshape(height, width)


def _decode_file(path) -> np.ndarray:
    raw = _read_bytes(path)
    if raw[:8] == PNG_SIGNATURE:
        return _decode_png(raw, path)
    if raw[:2] in (b"P5", b"P6"):
        return _decode_pnm(raw, path)
    raise UnsupportedImageError(f"{path}: not a PNG or binary PNM file")


def _codes_to_unit(arr: np.ndarray, decode_gamma: bool) -> np.ndarray:
    maxval = 255.0 if arr.dtype == np.uint8 else 65535.0
    v = arr.astype(np.float64) / maxval
    return srgb_to_linear(v) if decode_gamma else v


def load_image(path, decode_gamma: bool = True) -> LinearRgbImage:
    """Load an 8/16-bit 3-channel PNG or PPM as a linear RGB image.

    With decode_gamma the codes are passed through the sRGB decode curve,
    otherwise they are only divided by the maximum code value.
    """
    arr = _decode_file(path)
    if arr.ndim != 3:
        raise UnsupportedImageError(f"{path}: expected 3 channels, got grayscale data")
    return LinearRgbImage(_codes_to_unit(arr, decode_gamma))


def load_gray_image(path, decode_gamma: bool = True) -> GrayImage:
    """Load a grayscale PNG/PGM; RGB input is reduced to the channel mean."""
    arr = _decode_file(path)
    unit = _codes_to_unit(arr, decode_gamma)
    if unit.ndim == 3:
        unit = unit.mean(axis=2)
    return GrayImage(unit)


def _atomic_write(path, payload: bytes) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_pnm(codes: np.ndarray) -> bytes:
    gray = codes.ndim == 2
    magic = b"P5" if gray else b"P6"
    maxval = 255 if codes.dtype == np.uint8 else 65535
    header = b"%s\n%d %d\n%d\n" % (magic, codes.shape[1], codes.shape[0], maxval)
    body = codes.astype(">u2").tobytes() if maxval == 65535 else codes.tobytes()
    return header + body


def save_image(img: LinearRgbImage | GrayImage, path, encode_gamma: bool = True,
               bit_depth: int = 16) -> int:
    """Write a PNG (or .ppm/.pgm) file; returns the count of clamped pixels.

    Values outside [0, 1] are clamped to range before quantization; the
    number of affected pixels is returned so callers can report it.
    """
    if bit_depth not in (8, 16):
        raise ValueError(f"bit_depth must be 8 or 16, got {bit_depth}")
    data = img.data
    finite = np.nan_to_num(data, nan=0.0)
    clamped = np.clip(finite, 0.0, 1.0)
    if data.ndim == 3:
        warn = int(np.any((finite < 0) | (finite > 1), axis=2).sum())
    else:
        warn = int(((finite < 0) | (finite > 1)).sum())
    encoded = linear_to_srgb(clamped) if encode_gamma else clamped
    maxval = 255 if bit_depth == 8 else 65535
    codes = np.rint(encoded * maxval).astype(np.uint8 if bit_depth == 8 else np.uint16)

    ext = os.path.splitext(str(path))[1].lower()
    if ext in (".ppm", ".pgm"):
        payload = _encode_pnm(codes)
    else:
        to_encode = codes[:, :, ::-1] if codes.ndim == 3 else codes
        ok, buf = cv2.imencode(".png", to_encode)
        if not ok:
            raise OSError(f"PNG encoding failed for {path}")
        payload = buf.tobytes()
    _atomic_write(path, payload)
    return warn


def save_mask(mask: BinaryMask, path) -> None:
    """Export a binary mask as an 8-bit 0/255 PNG or PGM."""
    img = GrayImage(mask.data.astype(np.float64))
    save_image(img, path, encode_gamma=False, bit_depth=8)


def load_mask(path) -> BinaryMask:
    """Read a mask written by save_mask; any nonzero pixel is true."""
    gray = load_gray_image(path, decode_gamma=False)
    return BinaryMask(gray.data > 0.5)
