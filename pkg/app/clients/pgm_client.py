import logging
from pathlib import Path
from typing import Union

import numpy as np

from app.errors import PGMParseError, StructuralError
from app.services.inpaint_service import Mask

logger = logging.getLogger(__name__)

PGM_MAXVAL = 255
MASK_OBSERVED_THRESHOLD = 128
WHITESPACE = b" \t\n\r\v\f"

PathLike = Union[str, Path]


class _HeaderReader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0
        self.token_offset = 0

    def _skip_whitespace_and_comments(self) -> None:
        data = self.data
        while self.offset < len(data):
            byte = data[self.offset : self.offset + 1]
            if byte in WHITESPACE and byte:
                self.offset += 1
            elif byte == b"#":
                while self.offset < len(data) and data[self.offset : self.offset + 1] not in (b"\n", b"\r"):
                    self.offset += 1
            else:
                return

    def token(self, what: str) -> bytes:
        self._skip_whitespace_and_comments()
        start = self.token_offset = self.offset
        while self.offset < len(self.data) and self.data[self.offset : self.offset + 1] not in WHITESPACE + b"#":
            self.offset += 1
        if start == self.offset:
            raise PGMParseError(f"missing {what}", start)
        return self.data[start : self.offset]

    def integer(self, what: str) -> int:
        raw = self.token(what)
        if not raw.isdigit():
            raise PGMParseError(f"{what} is not a decimal integer: {raw[:16]!r}", self.token_offset)
        return int(raw)


def parse_pgm(data: bytes) -> np.ndarray:
    """Decode a P2 or P5 greymap with maxval 255 into a float array of shape (height, width)."""
    reader = _HeaderReader(data)
    magic = reader.token("magic number")
    if magic not in (b"P2", b"P5"):
        raise PGMParseError(f"unsupported magic number {magic[:8]!r}", 0)
    width = reader.integer("width")
    height = reader.integer("height")
    if width < 1 or height < 1:
        raise PGMParseError(f"image size {width}x{height} is empty", reader.offset)
    maxval = reader.integer("maxval")
    if maxval != PGM_MAXVAL:
        raise PGMParseError(f"maxval must be {PGM_MAXVAL}, got {maxval}", reader.token_offset)
    count = width * height

    if magic == b"P5":
        if reader.offset >= len(data) or data[reader.offset : reader.offset + 1] not in WHITESPACE:
            raise PGMParseError("missing whitespace after maxval", reader.offset)
        start = reader.offset + 1
        end = start + count
        if end > len(data):
            raise PGMParseError(f"truncated raster: need {count} bytes, found {len(data) - start}", len(data))
        pixels = np.frombuffer(data, dtype=np.uint8, count=count, offset=start)
        return pixels.reshape(height, width).astype(float)

    values = []
    for _ in range(count):
        try:
            value = reader.integer("pixel value")
        except PGMParseError:
            if reader.offset >= len(data):
                raise PGMParseError(f"truncated raster: found {len(values)} of {count} values", len(data)) from None
            raise
        if value > PGM_MAXVAL:
            raise PGMParseError(f"pixel value {value} exceeds maxval", reader.token_offset)
        values.append(value)
    return np.asarray(values, dtype=float).reshape(height, width)


def load_pgm(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    image = parse_pgm(data)
    logger.debug("[load_pgm] %s: %dx%d", path, image.shape[1], image.shape[0])
    return image


def quantize(image) -> np.ndarray:
    """Clamp to [0, 255] and round half away from zero."""
    image = np.asarray(image, dtype=float)
    if not np.all(np.isfinite(image)):
        raise StructuralError("image contains non-finite values")
    return np.floor(np.clip(image, 0.0, PGM_MAXVAL) + 0.5).astype(np.uint8)


def encode_pgm(image, binary: bool = True) -> bytes:
    pixels = quantize(image)
    if pixels.ndim != 2:
        raise StructuralError(f"PGM images are 2D, got shape {pixels.shape}")
    height, width = pixels.shape
    if binary:
        return f"P5\n{width} {height}\n{PGM_MAXVAL}\n".encode("ascii") + pixels.tobytes()
    rows = "\n".join(" ".join(str(int(v)) for v in row) for row in pixels)
    return f"P2\n{width} {height}\n{PGM_MAXVAL}\n{rows}\n".encode("ascii")


def save_pgm(image, path: PathLike) -> None:
    Path(path).write_bytes(encode_pgm(image))


def mask_from_pixels(pixels: np.ndarray) -> Mask:
    return Mask(np.asarray(pixels) >= MASK_OBSERVED_THRESHOLD)


def load_mask(path: PathLike) -> Mask:
    """Any value >= 128 marks an observed pixel."""
    return mask_from_pixels(load_pgm(path))


def encode_mask(mask: Mask) -> bytes:
    return encode_pgm(np.where(mask.observed, float(PGM_MAXVAL), 0.0))


def save_mask(mask: Mask, path: PathLike) -> None:
    Path(path).write_bytes(encode_mask(mask))
