"""Image decoding: PNG/JPEG via Pillow plus the raw NNIM fixture format.

Decoded images are float32 arrays of shape (3, H, W) scaled into [0, 1];
grayscale sources are replicated across the three channels so backbones stay
shape-compatible with 3-channel checkpoints.

NNIM is a deliberately trivial raw format for synthetic fixtures:

    magic "NNIM" | u16 LE height | u16 LE width | u8 channels
    | planar row-major u8 samples (channel, then row, then column)
"""

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, FormatError

NNIM_MAGIC = b"NNIM"
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".nnim")


def write_nnim(path, pixels):
    """Write a (C, H, W) uint8 array as an NNIM file."""
    pixels = np.asarray(pixels)
    if pixels.ndim != 3 or pixels.dtype != np.uint8:
        raise FormatError(f"NNIM writer needs (C, H, W) uint8, got "
                          f"{pixels.dtype} {pixels.shape}")
    c, h, w = pixels.shape
    with open(path, "wb") as f:
        f.write(NNIM_MAGIC)
        f.write(h.to_bytes(2, "little"))
        f.write(w.to_bytes(2, "little"))
        f.write(c.to_bytes(1, "little"))
        f.write(np.ascontiguousarray(pixels).tobytes())


def read_nnim(path):
    """Read an NNIM file back into a (C, H, W) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 9 or data[:4] != NNIM_MAGIC:
        raise FormatError(f"not an NNIM file: {path}")
    h = int.from_bytes(data[4:6], "little")
    w = int.from_bytes(data[6:8], "little")
    c = data[8]
    expected = 9 + c * h * w
    if len(data) != expected:
        raise FormatError(
            f"NNIM payload size mismatch in {path}: have {len(data)}, "
            f"expected {expected}")
    return np.frombuffer(data, dtype=np.uint8, offset=9).reshape(c, h, w).copy()


def _to_three_channels(arr):
    if arr.shape[0] == 1:
        return np.repeat(arr, 3, axis=0)
    if arr.shape[0] == 3:
        return arr
    raise DecodeError(f"expected 1 or 3 channels, got {arr.shape[0]}")


def decode_image(path):
    """Decode any supported file to float32 (3, H, W) in [0, 1]."""
    spath = str(path)
    lower = spath.lower()
    if lower.endswith(".nnim"):
        try:
            raw = read_nnim(spath)
        except FormatError as exc:
            raise DecodeError(str(exc)) from exc
        return _to_three_channels(raw).astype(np.float32) / 255.0
    if lower.endswith((".png", ".jpg", ".jpeg")):
        try:
            with Image.open(spath) as img:
                if img.mode == "L":
                    arr = np.asarray(img, dtype=np.uint8)[None, :, :]
                else:
                    arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
                    arr = arr.transpose(2, 0, 1)
        except (UnidentifiedImageError, OSError) as exc:
            raise DecodeError(f"cannot decode {spath}: {exc}") from exc
        return _to_three_channels(arr).astype(np.float32) / 255.0
    raise DecodeError(f"unsupported image extension: {spath}")
