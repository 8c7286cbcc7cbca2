"""PNG reading and writing for float images in [0, 1]."""
from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .representation import Image


def png_write(image: Image, path: str | Path) -> None:
    Path(path).write_bytes(png_bytes(image))


def png_bytes(image: Image) -> bytes:
    arr = np.rint(image.pixels * 255.0).clip(0, 255).astype(np.uint8)
    buf = io.BytesIO()
    PILImage.fromarray(arr, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_read(path: str | Path) -> Image:
    with PILImage.open(path) as pil:
        arr = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
    return Image(arr, source=str(path))


def png_from_bytes(data: bytes, source: str | None = None) -> Image:
    with PILImage.open(io.BytesIO(data)) as pil:
        arr = np.asarray(pil.convert("RGB"), dtype=np.float32) / 255.0
    return Image(arr, source=source)
