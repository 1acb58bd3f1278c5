"""Binary file formats used at the engine boundaries.

All formats are little-endian:

PTYD (diffraction dataset)
    magic ``PTYD`` | u32 version=1 | u32 J | u32 patch_side | u32 object_side
    | J x (u32 row, u32 col) anchor records
    | J x patch_side^2 u32 counts, frame-major then row-major.

PRBE (probe)
    magic ``PRBE`` | u32 version=1 | u32 side | f64 amplitude
    | side^2 interleaved (re, im) f64 pairs.

PMAP (real-valued map)
    8 text lines: ``PMAP``, ``name=``, ``height=``, ``width=``, ``dtype=f64``,
    ``endian=little``, ``channel=``, ``checksum=sha256:<hex>``; then the flat
    f64 payload, row-major. The checksum covers the payload bytes.

POBJ (complex object)
    magic ``POBJ`` | u32 side | side^2 interleaved (re, im) f64 pairs.

PGM previews are write-only 8-bit binary (P5) renderings of real maps.

The PGEN weight format lives in :mod:`ptybayes.generator` because it needs
the layer vocabulary.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from .errors import FormatError, ValidationError

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")


def read_exact(f, n: int) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("corrupt file: truncated")
    return buf


def expect_magic(f, magic: bytes) -> None:
    got = f.read(len(magic))
    if got != magic:
        raise FormatError(f"unsupported format: expected magic {magic!r}")


def read_u32(f) -> int:
    return _U32.unpack(read_exact(f, 4))[0]


def read_f64(f) -> float:
    return _F64.unpack(read_exact(f, 8))[0]


def sha256_hex(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()


# ---------------------------------------------------------------------------
# PTYD

def save_ptyd(path, anchors: np.ndarray, patch_side: int, object_side: int,
              frames: np.ndarray) -> None:
    anchors = np.asarray(anchors, dtype=np.int64)
    frames = np.asarray(frames)
    if frames.ndim != 3 or frames.shape[1:] != (patch_side, patch_side):
        raise ValidationError("geometry mismatch: frames must be (J, side, side)")
    if anchors.shape != (frames.shape[0], 2):
        raise ValidationError("geometry mismatch: one anchor per frame required")
    if np.any(frames < 0) or np.any(frames > 0xFFFFFFFF):
        raise ValidationError("counts exceed the u32 range of the format")
    with open(path, "wb") as f:
        f.write(b"PTYD")
        f.write(_U32.pack(1))
        f.write(_U32.pack(frames.shape[0]))
        f.write(_U32.pack(patch_side))
        f.write(_U32.pack(object_side))
        f.write(anchors.astype("<u4").tobytes())
        f.write(frames.astype("<u4").tobytes())


def load_ptyd(path):
    """Returns (anchors (J,2) int64, patch_side, object_side, frames (J,s,s) int64)."""
    with open(path, "rb") as f:
        expect_magic(f, b"PTYD")
        version = read_u32(f)
        if version != 1:
            raise FormatError(f"unsupported format: PTYD version {version}")
        n_frames = read_u32(f)
        patch_side = read_u32(f)
        object_side = read_u32(f)
        anchors = np.frombuffer(read_exact(f, 8 * n_frames), dtype="<u4")
        anchors = anchors.reshape(n_frames, 2).astype(np.int64)
        raw = read_exact(f, 4 * n_frames * patch_side * patch_side)
        frames = np.frombuffer(raw, dtype="<u4").astype(np.int64)
        frames = frames.reshape(n_frames, patch_side, patch_side)
        if f.read(1):
            raise FormatError("corrupt file: trailing bytes")
    return anchors, patch_side, object_side, frames


# ---------------------------------------------------------------------------
# PRBE

def save_prbe(path, field: np.ndarray, amplitude: float) -> None:
    field = np.asarray(field, dtype=np.complex128)
    if field.ndim != 2 or field.shape[0] != field.shape[1]:
        raise ValidationError("geometry mismatch: probe field must be square")
    side = field.shape[0]
    inter = np.empty(2 * side * side, dtype="<f8")
    inter[0::2] = field.real.ravel()
    inter[1::2] = field.imag.ravel()
    with open(path, "wb") as f:
        f.write(b"PRBE")
        f.write(_U32.pack(1))
        f.write(_U32.pack(side))
        f.write(_F64.pack(float(amplitude)))
        f.write(inter.tobytes())


def load_prbe(path):
    """Returns (field (s,s) complex128, amplitude)."""
    with open(path, "rb") as f:
        expect_magic(f, b"PRBE")
        version = read_u32(f)
        if version != 1:
            raise FormatError(f"unsupported format: PRBE version {version}")
        side = read_u32(f)
        amplitude = read_f64(f)
        raw = read_exact(f, 16 * side * side)
        inter = np.frombuffer(raw, dtype="<f8")
        field = (inter[0::2] + 1j * inter[1::2]).reshape(side, side)
        if f.read(1):
            raise FormatError("corrupt file: trailing bytes")
    return field, amplitude


# ---------------------------------------------------------------------------
# PMAP

def save_pmap(path, data: np.ndarray, name: str, channel: str) -> None:
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValidationError("geometry mismatch: PMAP stores 2-D real maps")
    payload = data.astype("<f8").tobytes()
    header = (
        "PMAP\n"
        f"name={name}\n"
        f"height={data.shape[0]}\n"
        f"width={data.shape[1]}\n"
        "dtype=f64\n"
        "endian=little\n"
        f"channel={channel}\n"
        f"checksum=sha256:{sha256_hex(payload)}\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(payload)


def load_pmap(path):
    """Returns (data (h,w) float64, meta dict with name/channel)."""
    with open(path, "rb") as f:
        lines = []
        for _ in range(8):
            line = f.readline()
            if not line.endswith(b"\n"):
                raise FormatError("corrupt file: truncated header")
            lines.append(line[:-1].decode("ascii", errors="replace"))
        if lines[0] != "PMAP":
            raise FormatError("unsupported format: expected magic b'PMAP'")
        meta = {}
        for line in lines[1:]:
            key, _, value = line.partition("=")
            meta[key] = value
        if meta.get("dtype") != "f64" or meta.get("endian") != "little":
            raise FormatError("unsupported format: PMAP dtype/endianness")
        try:
            height = int(meta["height"])
            width = int(meta["width"])
        except (KeyError, ValueError) as exc:
            raise FormatError("corrupt file: bad PMAP header") from exc
        payload = read_exact(f, 8 * height * width)
        if f.read(1):
            raise FormatError("corrupt file: trailing bytes")
    expected = meta.get("checksum", "")
    if expected != f"sha256:{sha256_hex(payload)}":
        raise FormatError("corrupt file: checksum mismatch")
    data = np.frombuffer(payload, dtype="<f8").reshape(height, width).copy()
    return data, meta


# ---------------------------------------------------------------------------
# POBJ

def save_pobj(path, field: np.ndarray) -> None:
    field = np.asarray(field, dtype=np.complex128)
    if field.ndim != 2 or field.shape[0] != field.shape[1]:
        raise ValidationError("geometry mismatch: POBJ stores square fields")
    side = field.shape[0]
    inter = np.empty(2 * side * side, dtype="<f8")
    inter[0::2] = field.real.ravel()
    inter[1::2] = field.imag.ravel()
    with open(path, "wb") as f:
        f.write(b"POBJ")
        f.write(_U32.pack(side))
        f.write(inter.tobytes())


def load_pobj(path) -> np.ndarray:
    with open(path, "rb") as f:
        expect_magic(f, b"POBJ")
        side = read_u32(f)
        raw = read_exact(f, 16 * side * side)
        inter = np.frombuffer(raw, dtype="<f8")
        field = (inter[0::2] + 1j * inter[1::2]).reshape(side, side)
        if f.read(1):
            raise FormatError("corrupt file: trailing bytes")
    return field


# ---------------------------------------------------------------------------
# PGM previews

def save_pgm(path, data: np.ndarray) -> None:
    """8-bit preview; the map is min/max normalized (constant maps render black)."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValidationError("geometry mismatch: PGM previews are 2-D")
    lo, hi = float(data.min()), float(data.max())
    if hi > lo:
        scaled = (data - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(data)
    pixels = np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
