"""Export a trained generator into the engine's PGEN weight format.

The file is rebuilt from scratch here (little-endian: magic ``PGEN``,
u32 version=1, u32 latent_dim, u32 n_layers; per layer u8 kind tag, u32
rank, rank x u32 shape, f32 weights row-major, weight tensor then bias).
Inference-time batch norm is folded into per-channel affine layers so the
engine stays framework-free. Architectures outside the engine's layer
vocabulary are rejected.
"""

from __future__ import annotations

import struct

import numpy as np
import torch
from torch import nn

from .models import Generator

TAG_DENSE = 0
TAG_CONV_T = 1
TAG_RELU = 2
TAG_TANH = 4
TAG_SIGMOID = 5
TAG_RESHAPE = 6
TAG_AFFINE = 7


def _layer(tag: int, shape=(), arrays=()) -> bytes:
    out = [struct.pack("<BI", tag, len(shape))]
    for dim in shape:
        out.append(struct.pack("<I", int(dim)))
    for arr in arrays:
        out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(out)


def fold_batch_norm(bn: nn.BatchNorm2d) -> tuple[np.ndarray, np.ndarray]:
    """Running-stats batch norm as a per-channel (scale, shift) pair."""
    var = bn.running_var.detach().numpy().astype(np.float64)
    mean = bn.running_mean.detach().numpy().astype(np.float64)
    gamma = bn.weight.detach().numpy().astype(np.float64)
    beta = bn.bias.detach().numpy().astype(np.float64)
    scale = gamma / np.sqrt(var + bn.eps)
    shift = beta - mean * scale
    return scale, shift


def export_pgen(generator: Generator, path) -> None:
    generator.eval()
    chunks = []

    lin = generator.project
    w = lin.weight.detach().numpy()
    b = lin.bias.detach().numpy()
    chunks.append(_layer(TAG_DENSE, w.shape, (w, b)))
    chunks.append(_layer(TAG_RESHAPE, (generator.base_channels, 4, 4)))

    for module in generator.blocks:
        if isinstance(module, nn.ConvTranspose2d):
            if (module.kernel_size != (4, 4) or module.stride != (2, 2)
                    or module.padding != (1, 1)):
                raise ValueError("inexpressible architecture: transposed conv "
                                 "must be kernel 4 / stride 2 / pad 1")
            w = module.weight.detach().numpy()  # (ci, co, 4, 4)
            if module.bias is None:
                b = np.zeros(w.shape[1], dtype=np.float64)
            else:
                b = module.bias.detach().numpy()
            chunks.append(_layer(TAG_CONV_T, w.shape, (w, b)))
        elif isinstance(module, nn.BatchNorm2d):
            scale, shift = fold_batch_norm(module)
            chunks.append(_layer(TAG_AFFINE, (scale.shape[0],), (scale, shift)))
        elif isinstance(module, nn.ReLU):
            chunks.append(_layer(TAG_RELU))
        elif isinstance(module, nn.Tanh):
            chunks.append(_layer(TAG_TANH))
        else:
            raise ValueError(
                f"inexpressible architecture: {type(module).__name__}")
    chunks.append(_layer(TAG_SIGMOID))

    with open(path, "wb") as f:
        f.write(b"PGEN")
        f.write(struct.pack("<III", 1, generator.latent_dim, len(chunks)))
        for chunk in chunks:
            f.write(chunk)
