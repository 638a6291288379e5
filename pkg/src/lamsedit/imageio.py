"""Grayscale image I/O between float arrays in [0, 1] and 16-bit PNGs."""

from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
from PIL import Image

_U16 = 65535


def array_to_png_bytes(arr: np.ndarray) -> bytes:
    """Encode a float array in [0, 1] as a 16-bit grayscale PNG."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d grayscale array, got shape {arr.shape}")
    quantized = np.clip(np.round(arr * _U16), 0, _U16).astype(np.uint16)
    image = Image.fromarray(quantized)
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def png_bytes_to_array(data: bytes) -> np.ndarray:
    image = Image.open(io.BytesIO(data))
    arr = np.asarray(image)
    if arr.ndim == 3:  # RGB(A): average to grayscale
        arr = arr[..., :3].mean(axis=-1)
        return arr / 255.0
    if arr.dtype == np.uint16 or arr.dtype == np.int32:
        return arr.astype(np.float64) / _U16
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64)


def save_image(path: Path | str, arr: np.ndarray) -> None:
    Path(path).write_bytes(array_to_png_bytes(arr))


def load_image(path: Path | str) -> np.ndarray:
    return png_bytes_to_array(Path(path).read_bytes())


def array_to_b64(arr: np.ndarray) -> str:
    return base64.b64encode(array_to_png_bytes(arr)).decode("ascii")


def b64_to_array(data: str) -> np.ndarray:
    return png_bytes_to_array(base64.b64decode(data))


def mask_to_png_bytes(mask: np.ndarray) -> bytes:
    """Encode a binary mask as a 1-bit PNG."""
    mask = np.asarray(mask)
    image = Image.fromarray((mask > 0).astype(np.uint8) * 255, mode="L").convert("1")
    buffer = io.BytesIO()
    image.save(buffer, format="PNG")
    return buffer.getvalue()


def png_bytes_to_mask(data: bytes) -> np.ndarray:
    image = Image.open(io.BytesIO(data)).convert("L")
    return (np.asarray(image) > 127).astype(np.uint8)
