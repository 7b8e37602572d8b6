"""Raster image type and file readers (PPM P6, PNG)."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class ImageError(ValueError):
    """Raised for malformed or unsupported image files."""


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB raster, pixels stored row-major as a (height, width, 3) array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ImageError(f"expected (h, w, 3) RGB array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ImageError("degenerate image: zero width or height")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


def _read_ppm_token(buf: io.BufferedReader) -> bytes:
    """Read one whitespace-delimited header token, skipping '#' comments."""
    token = b""
    while True:
        ch = buf.read(1)
        if ch == b"":
            raise ImageError("truncated PPM header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = buf.read(1)
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_ppm(path) -> RasterImage:
    """Read a binary PPM (P6) file with maxval 255."""
    path = Path(path)
    with path.open("rb") as fh:
        magic = fh.read(2)
        if magic != b"P6":
            raise ImageError(f"{path.name}: not a P6 PPM (magic {magic!r})")
        try:
            width = int(_read_ppm_token(fh))
            height = int(_read_ppm_token(fh))
            maxval = int(_read_ppm_token(fh))
        except ValueError as exc:
            raise ImageError(f"{path.name}: bad PPM header: {exc}") from None
        if width < 1 or height < 1:
            raise ImageError(f"{path.name}: degenerate size {width}x{height}")
        if maxval != 255:
            raise ImageError(f"{path.name}: only maxval 255 supported, got {maxval}")
        # _read_ppm_token consumed the single whitespace byte after maxval
        raw = fh.read(width * height * 3)
        if len(raw) != width * height * 3:
            raise ImageError(f"{path.name}: truncated pixel data")
    pixels = np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3)
    return RasterImage(pixels)


def write_ppm(path, image: RasterImage) -> None:
    """Write a binary PPM (P6) file with maxval 255."""
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    with Path(path).open("wb") as fh:
        fh.write(header)
        fh.write(image.pixels.tobytes())


def read_png(path) -> RasterImage:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as img:
            rgb = img.convert("RGB")
            pixels = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise ImageError(f"{Path(path).name}: unreadable PNG: {exc}") from None
    return RasterImage(pixels)


def load_image(path) -> RasterImage:
    """Load a PNG or PPM file by extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".ppm":
        return read_ppm(path)
    if suffix == ".png":
        return read_png(path)
    raise ImageError(f"{path.name}: unsupported image format {suffix!r}")
