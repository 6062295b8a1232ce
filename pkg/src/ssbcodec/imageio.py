"""Image file ingestion: binary PPM natively, PNG through Pillow if present.

Images are [3, H, W] uint8 arrays everywhere in this package.
"""

from __future__ import annotations

import numpy as np

from .errors import AvailabilityError, FormatError


def _ppm_tokens(data: bytes):
    """Header tokens of a PPM file; # comments run to end of line."""
    pos = 0
    while True:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PPM header")
        yield data[start:pos], pos


def read_ppm(data: bytes) -> np.ndarray:
    tokens = _ppm_tokens(data)
    magic, _ = next(tokens)
    if magic != b"P6":
        raise FormatError(f"not a binary PPM file (magic {magic!r})")
    try:
        width, _ = next(tokens)
        height, _ = next(tokens)
        maxval, pos = next(tokens)
        width, height, maxval = int(width), int(height), int(maxval)
    except (StopIteration, ValueError) as exc:
        raise FormatError("malformed PPM header") from exc
    if width < 1 or height < 1:
        raise FormatError(f"bad PPM dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    pixels = data[pos + 1:]
    need = width * height * 3
    if len(pixels) != need:
        raise FormatError(f"PPM payload is {len(pixels)} bytes, need {need}")
    flat = np.frombuffer(pixels, dtype=np.uint8)
    return np.ascontiguousarray(flat.reshape(height, width, 3).transpose(2, 0, 1))


def write_ppm(image: np.ndarray) -> bytes:
    if image.ndim != 3 or image.shape[0] != 3 or image.dtype != np.uint8:
        raise FormatError(f"expected uint8 [3, H, W], got {image.dtype} {image.shape}")
    _, h, w = image.shape
    header = f"P6\n{w} {h}\n255\n".encode()
    return header + np.ascontiguousarray(image.transpose(1, 2, 0)).tobytes()


def read_png(data: bytes) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:
        raise AvailabilityError(
            "PNG support needs Pillow (pip install ssbcodec[png])") from exc
    import io
    with Image.open(io.BytesIO(data)) as img:
        rgb = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return np.ascontiguousarray(rgb.transpose(2, 0, 1))


def write_png(image: np.ndarray) -> bytes:
    try:
        from PIL import Image
    except ImportError as exc:
        raise AvailabilityError(
            "PNG support needs Pillow (pip install ssbcodec[png])") from exc
    import io
    if image.ndim != 3 or image.shape[0] != 3 or image.dtype != np.uint8:
        raise FormatError(f"expected uint8 [3, H, W], got {image.dtype} {image.shape}")
    buf = io.BytesIO()
    Image.fromarray(image.transpose(1, 2, 0)).save(buf, format="PNG")
    return buf.getvalue()


def read_image(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P6":
        return read_ppm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return read_png(data)
    raise FormatError(f"{path}: neither binary PPM nor PNG")


def encode_image_file(image: np.ndarray, path: str) -> bytes:
    if path.endswith(".png"):
        return write_png(image)
    return write_ppm(image)
