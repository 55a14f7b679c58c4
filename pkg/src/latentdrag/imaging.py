"""Image tensor <-> PNG conversions."""
from __future__ import annotations

import base64
import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image


def to_uint8(image: torch.Tensor) -> np.ndarray:
    arr = image.detach().cpu().numpy()
    return (np.clip(arr, 0.0, 1.0) * 255.0).round().astype(np.uint8)


def to_png_bytes(image: torch.Tensor) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(image)).save(buf, format="PNG")
    return buf.getvalue()


def to_png_base64(image: torch.Tensor) -> str:
    return base64.b64encode(to_png_bytes(image)).decode("ascii")


def save_png(image: torch.Tensor, path: str | Path) -> None:
    Path(path).write_bytes(to_png_bytes(image))
