"""Compact feed-forward generator runtime with exact reverse-mode VJPs.

A :class:`GeneratorModel` maps a latent vector of length Z to a real image
in (0, 1) through a fixed layer vocabulary (dense, 4x4/stride-2/pad-1
transposed convolution, relu, leaky_relu(0.2), tanh, sigmoid, reshape,
channel_affine). Running the same model on the two halves of a length-2Z
latent gives the complex generator

    u = magnitude(z[:Z]) * exp(1j * phase(z[Z:]))

with the phase head read directly in radians.

The latent-space gradients needed by the samplers are vector-Jacobian
products computed by walking the layer list in reverse; no autodiff
framework is involved. :func:`vjp_complex` returns

    2 * Re{ J^H(z) . cotangent }

i.e. the conventional factor 2 and the real-part extraction both live here,
so callers compose likelihood terms without convention mismatches.

Weights travel in the PGEN format (little-endian): magic ``PGEN``,
u32 version=1, u32 latent_dim, u32 n_layers; per layer a u8 kind tag
{0 dense, 1 convT, 2 relu, 3 leaky_relu, 4 tanh, 5 sigmoid, 6 reshape,
7 channel_affine}, u32 rank, rank x u32 shape, then f32 weights row-major
(weight tensor then bias where applicable; empty for parameterless kinds).
Weights are promoted to f64 at load.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import FormatError, ValidationError
from .formats import expect_magic, read_exact, read_u32

CONV_KERNEL = 4
CONV_STRIDE = 2
CONV_PAD = 1
LEAKY_SLOPE = 0.2

KIND_TAGS = {
    "dense": 0,
    "conv_transpose_2d": 1,
    "relu": 2,
    "leaky_relu": 3,
    "tanh": 4,
    "sigmoid": 5,
    "reshape": 6,
    "channel_affine": 7,
}
TAG_KINDS = {tag: kind for kind, tag in KIND_TAGS.items()}


@dataclass(eq=False)
class LayerSpec:
    """One layer: ``shape`` is the defining shape per kind, ``w``/``b`` the weights.

    dense: shape (out, in), w (out, in), b (out,).
    conv_transpose_2d: shape (in_ch, out_ch, 4, 4), w matching, b (out_ch,).
    reshape: shape = target (C, H, W), no weights.
    channel_affine: shape (C,), w = per-channel scale, b = per-channel shift.
    Activations carry no shape and no weights.
    """

    kind: str
    shape: tuple = ()
    w: np.ndarray | None = None
    b: np.ndarray | None = None


@dataclass(eq=False)
class GeneratorModel:
    latent_dim: int
    layers: list[LayerSpec]
    output_side: int = field(init=False, default=0)

    def __post_init__(self):
        self.output_side = _validate_chain(self.latent_dim, self.layers)


def _validate_chain(latent_dim: int, layers: list[LayerSpec]) -> int:
    """Walk the declared shapes from (Z,) to (1, S, S); returns S."""
    if latent_dim < 1:
        raise FormatError("malformed model: latent_dim must be positive")
    shape = (int(latent_dim),)
    for i, layer in enumerate(layers):
        where = f"layer {i} ({layer.kind})"
        if layer.kind == "dense":
            if len(layer.shape) != 2:
                raise FormatError(f"malformed model: {where} needs an (out, in) shape")
            out_n, in_n = layer.shape
            if shape != (in_n,):
                raise FormatError(f"malformed model: {where} input {shape} != ({in_n},)")
            if layer.w is None or layer.w.shape != (out_n, in_n):
                raise FormatError(f"malformed model: {where} weight shape")
            if layer.b is None or layer.b.shape != (out_n,):
                raise FormatError(f"malformed model: {where} bias shape")
            shape = (out_n,)
        elif layer.kind == "conv_transpose_2d":
            if len(layer.shape) != 4 or layer.shape[2:] != (CONV_KERNEL, CONV_KERNEL):
                raise FormatError(f"malformed model: {where} needs (ci, co, 4, 4)")
            ci, co = layer.shape[0], layer.shape[1]
            if len(shape) != 3 or shape[0] != ci:
                raise FormatError(f"malformed model: {where} input {shape} has != {ci} channels")
            if layer.w is None or layer.w.shape != tuple(layer.shape):
                raise FormatError(f"malformed model: {where} weight shape")
            if layer.b is None or layer.b.shape != (co,):
                raise FormatError(f"malformed model: {where} bias shape")
            h = (shape[1] - 1) * CONV_STRIDE - 2 * CONV_PAD + CONV_KERNEL
            w = (shape[2] - 1) * CONV_STRIDE - 2 * CONV_PAD + CONV_KERNEL
            shape = (co, h, w)
        elif layer.kind == "reshape":
            if len(layer.shape) != 3:
                raise FormatError(f"malformed model: {where} target must be (C, H, W)")
            if int(np.prod(shape)) != int(np.prod(layer.shape)):
                raise FormatError(f"malformed model: {where} cannot reshape {shape} to {layer.shape}")
            shape = tuple(int(s) for s in layer.shape)
        elif layer.kind == "channel_affine":
            if len(layer.shape) != 1:
                raise FormatError(f"malformed model: {where} needs a (C,) shape")
            if len(shape) != 3 or shape[0] != layer.shape[0]:
                raise FormatError(f"malformed model: {where} channel count mismatch")
            if layer.w is None or layer.w.shape != (layer.shape[0],):
                raise FormatError(f"malformed model: {where} scale shape")
            if layer.b is None or layer.b.shape != (layer.shape[0],):
                raise FormatError(f"malformed model: {where} shift shape")
        elif layer.kind in ("relu", "leaky_relu", "tanh", "sigmoid"):
            if layer.shape not in ((), None):
                raise FormatError(f"malformed model: {where} takes no shape")
        else:
            raise FormatError(f"malformed model: unknown layer kind {layer.kind!r}")
    if len(shape) != 3 or shape[0] != 1 or shape[1] != shape[2]:
        raise FormatError(f"malformed model: chain ends at {shape}, expected (1, S, S)")
    if not layers or layers[-1].kind != "sigmoid":
        raise FormatError("malformed model: final activation must map into (0, 1)")
    return int(shape[1])


# ---------------------------------------------------------------------------
# Convolution primitives (channel-first layout)

def _corr2d(x: np.ndarray, kernel: np.ndarray, stride: int) -> np.ndarray:
    """Valid cross-correlation: x (Ci,H,W) with kernel (Ci,Co,k,k) -> (Co,H',W')."""
    k = kernel.shape[-1]
    windows = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum("cijab,cdab->dij", windows, kernel, optimize=True)


def _conv_transpose_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Transposed conv, kernel 4 / stride 2 / pad 1: (Ci,H,W) -> (Co,2H,2W)."""
    ci, h, wd = x.shape
    pad = CONV_KERNEL - 1 - CONV_PAD
    up = np.zeros((ci, (h - 1) * CONV_STRIDE + 1 + 2 * pad,
                   (wd - 1) * CONV_STRIDE + 1 + 2 * pad))
    up[:, pad:-pad:CONV_STRIDE, pad:-pad:CONV_STRIDE] = x
    out = _corr2d(up, w[:, :, ::-1, ::-1], stride=1)
    return out + b[:, None, None]


def _conv_transpose_vjp(grad_out: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Input gradient of the transposed conv: a stride-2 correlation with w."""
    padded = np.pad(grad_out, ((0, 0), (CONV_PAD, CONV_PAD), (CONV_PAD, CONV_PAD)))
    return _corr2d(padded, np.swapaxes(w, 0, 1), stride=CONV_STRIDE)


# ---------------------------------------------------------------------------
# Forward / reverse passes

def real_with_tape(model: GeneratorModel, z0):
    """Forward pass of the real generator; returns (image, pullback).

    ``pullback(cotangent)`` maps an output-shaped real cotangent to the
    latent gradient J^T . cotangent (no extra factors).
    """
    z0 = np.asarray(z0, dtype=np.float64)
    if z0.shape != (model.latent_dim,):
        raise ValidationError(f"latent must have length {model.latent_dim}")
    x = z0
    tape = []
    for layer in model.layers:
        if layer.kind == "dense":
            tape.append(None)
            x = layer.w @ x + layer.b
        elif layer.kind == "conv_transpose_2d":
            tape.append(None)
            x = _conv_transpose_forward(x, layer.w, layer.b)
        elif layer.kind == "relu":
            x = np.maximum(x, 0.0)
            tape.append(x > 0)
        elif layer.kind == "leaky_relu":
            mask = x > 0
            tape.append(mask)
            x = np.where(mask, x, LEAKY_SLOPE * x)
        elif layer.kind == "tanh":
            x = np.tanh(x)
            tape.append(x)
        elif layer.kind == "sigmoid":
            x = expit(x)
            tape.append(x)
        elif layer.kind == "reshape":
            tape.append(x.shape)
            x = x.reshape(layer.shape)
        else:  # channel_affine
            tape.append(None)
            x = layer.w[:, None, None] * x + layer.b[:, None, None]
    image = x[0]

    def pullback(cotangent):
        g = np.asarray(cotangent, dtype=np.float64)
        if g.shape != image.shape:
            raise ValidationError("cotangent must match the output image shape")
        g = g[None, :, :]
        for layer, saved in zip(reversed(model.layers), reversed(tape)):
            if layer.kind == "dense":
                g = layer.w.T @ g
            elif layer.kind == "conv_transpose_2d":
                g = _conv_transpose_vjp(g, layer.w)
            elif layer.kind == "relu":
                g = np.where(saved, g, 0.0)
            elif layer.kind == "leaky_relu":
                g = np.where(saved, g, LEAKY_SLOPE * g)
            elif layer.kind == "tanh":
                g = g * (1.0 - saved ** 2)
            elif layer.kind == "sigmoid":
                g = g * saved * (1.0 - saved)
            elif layer.kind == "reshape":
                g = g.reshape(saved)
            else:  # channel_affine
                g = layer.w[:, None, None] * g
        return g
    return image, pullback


def generate_real(model: GeneratorModel, z0) -> np.ndarray:
    """Deterministic forward pass; output in (0, 1), shape (S, S)."""
    image, _ = real_with_tape(model, z0)
    return image


def vjp_real(model: GeneratorModel, z0, cotangent) -> np.ndarray:
    """J^T(z0) . cotangent for the real generator."""
    _, pullback = real_with_tape(model, z0)
    return pullback(cotangent)


def _split_latent(model: GeneratorModel, z) -> tuple[np.ndarray, np.ndarray]:
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (2 * model.latent_dim,):
        raise ValidationError(f"latent must have length {2 * model.latent_dim}")
    return z[:model.latent_dim], z[model.latent_dim:]


def complex_with_tape(model: GeneratorModel, z):
    """Complex generator forward; returns (u, pullback).

    ``pullback(cotangent)`` takes the complex object-shaped cotangent and
    returns the length-2Z real gradient 2 * Re{J^H . cotangent}: the
    magnitude head pulls back Re{conj(exp(i*phi)) * c} and the phase head
    Re{conj(i*u) * c}, each through the real-generator reverse pass.
    """
    z_mag, z_phase = _split_latent(model, z)
    mag, pull_mag = real_with_tape(model, z_mag)
    phase, pull_phase = real_with_tape(model, z_phase)
    phasor = np.exp(1j * phase)
    u = mag * phasor

    def pullback(cotangent):
        c = np.asarray(cotangent, dtype=np.complex128)
        if c.shape != u.shape:
            raise ValidationError("cotangent must match the object shape")
        g_mag = pull_mag(2.0 * (np.conj(phasor) * c).real)
        g_phase = pull_phase(2.0 * (np.conj(1j * u) * c).real)
        return np.concatenate([g_mag, g_phase])
    return u, pullback


def generate_complex(model: GeneratorModel, z) -> np.ndarray:
    """u = magnitude(z[:Z]) * exp(1j * phase(z[Z:])); |u| stays in (0, 1)."""
    u, _ = complex_with_tape(model, z)
    return u


def vjp_complex(model: GeneratorModel, z, cotangent) -> np.ndarray:
    """2 * Re{J^H(z) . cotangent} over both heads, length 2Z."""
    _, pullback = complex_with_tape(model, z)
    return pullback(cotangent)


# ---------------------------------------------------------------------------
# PGEN serialization

def _weight_layout(kind: str, shape: tuple) -> tuple[int, int]:
    """(n_main, n_bias) f32 values stored for a layer."""
    if kind == "dense":
        out_n, in_n = shape
        return out_n * in_n, out_n
    if kind == "conv_transpose_2d":
        return int(np.prod(shape)), shape[1]
    if kind == "channel_affine":
        return shape[0], shape[0]
    return 0, 0


def save_model(model: GeneratorModel, path) -> None:
    """Write PGEN; weights are stored as f32 (round-trips are bit-exact for
    models whose f64 weights are f32-representable, which holds for every
    model this package constructs or loads)."""
    with open(path, "wb") as f:
        f.write(b"PGEN")
        f.write(struct.pack("<I", 1))
        f.write(struct.pack("<I", model.latent_dim))
        f.write(struct.pack("<I", len(model.layers)))
        for layer in model.layers:
            f.write(struct.pack("<B", KIND_TAGS[layer.kind]))
            f.write(struct.pack("<I", len(layer.shape)))
            for dim in layer.shape:
                f.write(struct.pack("<I", dim))
            n_main, n_bias = _weight_layout(layer.kind, layer.shape)
            if n_main:
                f.write(layer.w.astype("<f4").tobytes())
            if n_bias:
                f.write(layer.b.astype("<f4").tobytes())


def load_model(path) -> GeneratorModel:
    """Read PGEN, promote weights to f64, and validate the shape chain."""
    with open(path, "rb") as f:
        expect_magic(f, b"PGEN")
        version = read_u32(f)
        if version != 1:
            raise FormatError(f"unsupported format: PGEN version {version}")
        latent_dim = read_u32(f)
        n_layers = read_u32(f)
        layers = []
        for _ in range(n_layers):
            tag = read_exact(f, 1)[0]
            if tag not in TAG_KINDS:
                raise FormatError(f"unsupported format: unknown layer tag {tag}")
            kind = TAG_KINDS[tag]
            rank = read_u32(f)
            shape = tuple(read_u32(f) for _ in range(rank))
            n_main, n_bias = _weight_layout(kind, shape)
            w = b_arr = None
            if n_main:
                raw = read_exact(f, 4 * n_main)
                w = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
            if n_bias:
                raw = read_exact(f, 4 * n_bias)
                b_arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
            layers.append(LayerSpec(kind=kind, shape=shape, w=w, b=b_arr))
        if f.read(1):
            raise FormatError("corrupt file: trailing bytes")
    return GeneratorModel(latent_dim=latent_dim, layers=layers)


# ---------------------------------------------------------------------------
# Reference architecture

def reference_generator(latent_dim: int = 64, base_channels: int = 128,
                        output_side: int = 64, seed: int = 0) -> GeneratorModel:
    """Randomly initialized DCGAN-style generator.

    dense Z -> 4*4*base, reshape, then transposed-conv blocks halving the
    channel count and doubling the side until ``output_side``; inner blocks
    carry a channel_affine (folded normalization slot) and relu, the output
    block goes straight into the sigmoid so the full (0, 1) range stays
    reachable. Weights are f32 values promoted to f64, so saved files
    round-trip bit-exactly.
    """
    n_doublings = int(np.log2(output_side / 4))
    if 4 * 2 ** n_doublings != output_side:
        raise ValidationError("output_side must be 4 * 2**k")
    rng = np.random.default_rng(seed)

    def f32(a):
        return np.asarray(a, dtype=np.float32).astype(np.float64)

    layers = []
    n0 = 4 * 4 * base_channels
    scale = 1.0 / np.sqrt(latent_dim)
    layers.append(LayerSpec("dense", (n0, latent_dim),
                            f32(rng.normal(0.0, scale, (n0, latent_dim))),
                            f32(np.zeros(n0))))
    layers.append(LayerSpec("reshape", (base_channels, 4, 4)))
    ch = base_channels
    for i in range(n_doublings):
        last = i == n_doublings - 1
        out_ch = 1 if last else max(ch // 2, 8)
        scale = 1.0 / np.sqrt(ch * CONV_KERNEL * CONV_KERNEL)
        layers.append(LayerSpec("conv_transpose_2d", (ch, out_ch, CONV_KERNEL, CONV_KERNEL),
                                f32(rng.normal(0.0, scale, (ch, out_ch, CONV_KERNEL, CONV_KERNEL))),
                                f32(np.zeros(out_ch))))
        if not last:
            layers.append(LayerSpec("channel_affine", (out_ch,),
                                    f32(np.ones(out_ch)), f32(np.zeros(out_ch))))
            layers.append(LayerSpec("relu"))
        ch = out_ch
    layers.append(LayerSpec("sigmoid"))
    return GeneratorModel(latent_dim=latent_dim, layers=layers)
