"""IDX ingestion and phantom-compatible preprocessing.

Every image is bilinearly resized to the target side (half-pixel sample
centers, the engine's convention) and mapped through
x -> (x/255 + 0.2) / 1.2, landing in (1/6, 1]. The generator is trained on
these mapped images so that its output range matches both magnitude and
phase channels of the engine's phantoms.
"""

from __future__ import annotations

import struct

import numpy as np
import torch
import torch.nn.functional as F

PIXEL_OFFSET = 0.2
PIXEL_SCALE = 1.2


def read_idx_images(path) -> np.ndarray:
    """Big-endian IDX image file -> (n, rows, cols) uint8 array."""
    with open(path, "rb") as f:
        header = f.read(16)
        if len(header) != 16:
            raise ValueError("corrupt file: truncated IDX header")
        magic, n, rows, cols = struct.unpack(">IIII", header)
        if magic != 0x00000803:
            raise ValueError(f"unsupported format: IDX magic 0x{magic:08x}")
        raw = f.read(n * rows * cols)
        if len(raw) != n * rows * cols:
            raise ValueError("corrupt file: truncated IDX payload")
    return np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols).copy()


def preprocess_image(img: np.ndarray, side: int = 64) -> np.ndarray:
    """Resize one uint8 image to (side, side) and map into (1/6, 1]."""
    x = torch.as_tensor(np.asarray(img, dtype=np.float64))[None, None]
    resized = F.interpolate(x, size=(side, side), mode="bilinear",
                            align_corners=False)[0, 0]
    mapped = (resized / 255.0 + PIXEL_OFFSET) / PIXEL_SCALE
    return mapped.numpy()


def load_training_images(path, side: int = 64) -> torch.Tensor:
    """Full preprocessed corpus as a float32 (n, 1, side, side) tensor."""
    raw = read_idx_images(path)
    batch = torch.as_tensor(raw.astype(np.float64))[:, None]
    resized = F.interpolate(batch, size=(side, side), mode="bilinear",
                            align_corners=False)
    mapped = (resized / 255.0 + PIXEL_OFFSET) / PIXEL_SCALE
    return mapped.float()
