"""Forward model for far-field ptychography.

A complex object ``u`` (2-D complex128 array) is scanned by a fixed complex
probe. For scan position ``j`` the detector sees Poisson counts around

    intensity(dft2(probe * patch_j(u)))

where ``patch_j`` extracts the square sub-grid at the j-th anchor of a
:class:`ScanPlan`. ``dft2`` is the unitary 2-D DFT, so the exit-wave operator
``A_j = dft2 o diag(probe) o patch_j`` satisfies ``adjoint(A_j) = A_j^H``
exactly, which :func:`adjoint_exit` implements.

Complex fields are plain 2-D ``numpy`` arrays throughout; scan indices are
0-based.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ValidationError


def _as_field(arr, name="field") -> np.ndarray:
    arr = np.asarray(arr, dtype=np.complex128)
    if arr.ndim != 2:
        raise GeometryError(f"geometry mismatch: {name} must be 2-D")
    return arr


@dataclass(frozen=True, eq=False)
class ScanPlan:
    """Ordered integer patch anchors (row, col) over a square object grid."""

    anchors: np.ndarray
    patch_size: int
    object_size: int

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=np.int64)
        if anchors.ndim != 2 or anchors.shape[1] != 2 or anchors.shape[0] < 1:
            raise ValidationError("scan plan needs at least one (row, col) anchor")
        if self.patch_size < 1 or self.patch_size > self.object_size:
            raise GeometryError("geometry mismatch: patch does not fit the object")
        limit = self.object_size - self.patch_size
        if np.any(anchors < 0) or np.any(anchors > limit):
            raise GeometryError("geometry mismatch: anchor pushes patch out of bounds")
        object.__setattr__(self, "anchors", anchors)

    @property
    def n_positions(self) -> int:
        return self.anchors.shape[0]

    def digest(self) -> str:
        """Checksum binding a dataset to this plan."""
        h = hashlib.sha256(b"PLAN")
        h.update(struct.pack("<II", self.patch_size, self.object_size))
        h.update(self.anchors.astype("<u4").tobytes())
        return h.hexdigest()


@dataclass(frozen=True, eq=False)
class Probe:
    """Complex illumination; ``amplitude`` is already baked into ``field``."""

    field: np.ndarray
    amplitude: float

    def __post_init__(self):
        field = _as_field(self.field, "probe")
        if field.shape[0] != field.shape[1]:
            raise GeometryError("geometry mismatch: probe must be square")
        if not np.all(np.isfinite(field)):
            raise ValidationError("probe contains non-finite entries")
        object.__setattr__(self, "field", field)

    @property
    def side(self) -> int:
        return self.field.shape[0]


@dataclass(frozen=True, eq=False)
class DiffractionStack:
    """Per-position detector counts bound to the plan that produced them."""

    frames: np.ndarray
    plan_digest: str

    def __post_init__(self):
        frames = np.asarray(self.frames)
        if frames.ndim != 3 or frames.shape[1] != frames.shape[2]:
            raise GeometryError("geometry mismatch: frames must be (J, side, side)")
        if not np.issubdtype(frames.dtype, np.integer):
            raise ValidationError("counts must be integer-valued")
        if np.any(frames < 0):
            raise ValidationError("counts must be nonnegative")
        object.__setattr__(self, "frames", frames.astype(np.int64))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def verify(self, plan: ScanPlan) -> None:
        if self.n_frames != plan.n_positions or self.plan_digest != plan.digest():
            raise ValidationError("data/plan mismatch")


def _check_plan(obj: np.ndarray, plan: ScanPlan, j: int) -> tuple[int, int]:
    if obj.shape != (plan.object_size, plan.object_size):
        raise GeometryError("geometry mismatch: object does not match the plan")
    if not 0 <= j < plan.n_positions:
        raise ValidationError(f"invalid scan index {j}")
    r, c = plan.anchors[j]
    return int(r), int(c)


def extract_patch(obj, plan: ScanPlan, j: int) -> np.ndarray:
    """Read the square patch at anchor j; the object is left untouched."""
    obj = _as_field(obj, "object")
    r, c = _check_plan(obj, plan, j)
    s = plan.patch_size
    return obj[r:r + s, c:c + s].copy()


def embed_patch_adjoint(patch, plan: ScanPlan, j: int) -> np.ndarray:
    """Adjoint of :func:`extract_patch`: zero-pad the patch into object coords."""
    patch = _as_field(patch, "patch")
    s = plan.patch_size
    if patch.shape != (s, s):
        raise GeometryError("geometry mismatch: patch has the wrong side")
    if not 0 <= j < plan.n_positions:
        raise ValidationError(f"invalid scan index {j}")
    out = np.zeros((plan.object_size, plan.object_size), dtype=np.complex128)
    r, c = plan.anchors[j]
    out[r:r + s, c:c + s] = patch
    return out


def dft2(field) -> np.ndarray:
    """Unitary 2-D DFT; Parseval holds and idft2 is the exact inverse/adjoint."""
    field = _as_field(field)
    if field.shape[0] != field.shape[1]:
        raise GeometryError("geometry mismatch: dft2 expects a square field")
    return np.fft.fft2(field, norm="ortho")


def idft2(field) -> np.ndarray:
    field = _as_field(field)
    if field.shape[0] != field.shape[1]:
        raise GeometryError("geometry mismatch: idft2 expects a square field")
    return np.fft.ifft2(field, norm="ortho")


def forward_exit(obj, probe: Probe, plan: ScanPlan, j: int) -> np.ndarray:
    """Far-field exit wave at position j: dft2(probe * patch_j(object))."""
    if probe.side != plan.patch_size:
        raise GeometryError("geometry mismatch: probe side != plan patch size")
    patch = extract_patch(obj, plan, j)
    return dft2(probe.field * patch)


def adjoint_exit(v, probe: Probe, plan: ScanPlan, j: int) -> np.ndarray:
    """Adjoint of :func:`forward_exit`: conj(probe) * idft2(v), zero-padded."""
    v = _as_field(v, "detector field")
    if probe.side != plan.patch_size:
        raise GeometryError("geometry mismatch: probe side != plan patch size")
    if v.shape != (plan.patch_size, plan.patch_size):
        raise GeometryError("geometry mismatch: detector field has the wrong side")
    return embed_patch_adjoint(np.conj(probe.field) * idft2(v), plan, j)


def intensity(exit_wave) -> np.ndarray:
    """Element-wise squared modulus (always >= 0)."""
    exit_wave = np.asarray(exit_wave)
    return (exit_wave.real ** 2 + exit_wave.imag ** 2).astype(np.float64)


def sample_poisson(rates, rng: np.random.Generator) -> np.ndarray:
    """Independent Poisson draws per element; rate 0 gives count 0.

    Delegates to numpy's generator, which switches between sequential-search
    inversion (small rates) and transformed rejection (large rates), so the
    full photon-flux range of the simulations is covered without overflow.
    """
    rates = np.asarray(rates, dtype=np.float64)
    if np.any(rates < 0) or not np.all(np.isfinite(rates)):
        raise ValidationError("invalid rate: Poisson rates must be finite and >= 0")
    return rng.poisson(rates).astype(np.int64)


def expected_intensities(obj, probe: Probe, plan: ScanPlan) -> np.ndarray:
    """Noise-free detector intensities for every position, shape (J, s, s).

    This is the deterministic real-valued counterpart of
    :func:`simulate_dataset`, kept for oracle checks and consistent-data
    fixtures.
    """
    out = np.empty((plan.n_positions, plan.patch_size, plan.patch_size))
    for j in range(plan.n_positions):
        out[j] = intensity(forward_exit(obj, probe, plan, j))
    return out


def _position_streams(seed, n: int) -> list[np.random.Generator]:
    # One child stream per scan position keeps the result independent of
    # evaluation order/schedule.
    if isinstance(seed, np.random.Generator):
        return seed.spawn(n)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in seed.spawn(n)]


def simulate_dataset(obj, probe: Probe, plan: ScanPlan, seed,
                     noise: bool = True) -> DiffractionStack:
    """Simulate detector counts for every scan position.

    ``seed`` may be an int, a SeedSequence, or a Generator; each position
    draws from its own derived sub-stream. With ``noise=False`` the frames
    are the expected intensities rounded to integers.
    """
    lam = expected_intensities(obj, probe, plan)
    if noise:
        streams = _position_streams(seed, plan.n_positions)
        frames = np.stack([sample_poisson(lam[j], streams[j])
                           for j in range(plan.n_positions)])
    else:
        frames = np.round(lam).astype(np.int64)
    return DiffractionStack(frames=frames, plan_digest=plan.digest())
