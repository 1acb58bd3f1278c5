"""rPIE baseline: sequential per-position object updates with a known probe.

For each visited position the measured moduli replace the model moduli in
the detector plane and the correction is pulled back into the object patch
with the relaxed denominator

    object_patch += conj(P) * (psi' - psi) / ((1 - alpha) |P|^2 + alpha max|P|^2)

(the regularized variant of the ptychographic iterative engine; probe
retrieval is out of scope, the probe is fixed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .inference import _frames_of
from .physics import Probe, ScanPlan, dft2, idft2


@dataclass(eq=False)
class RpieConfig:
    alpha: float = 0.05
    n_epochs: int = 300
    seed: int = 0
    init_object: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValidationError("alpha must lie in (0, 1]")
        if self.n_epochs < 1:
            raise ValidationError("n_epochs must be positive")


def _modulus_projection(psi_hat: np.ndarray, frame: np.ndarray) -> np.ndarray:
    """Replace detector moduli with sqrt(counts), keeping the model phase.

    Zero-modulus detector pixels take the measured modulus with zero phase.
    """
    target = np.sqrt(frame)
    mod = np.abs(psi_hat)
    zero = mod == 0.0
    safe_mod = np.where(zero, 1.0, mod)
    projected = target * psi_hat / safe_mod
    return np.where(zero, target.astype(np.complex128), projected)


def rpie_position_update(obj, probe: Probe, plan: ScanPlan, j: int, frame,
                         alpha: float = 0.05) -> np.ndarray:
    """One object update at position j; returns a new object array."""
    obj = np.asarray(obj, dtype=np.complex128)
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (plan.patch_size, plan.patch_size):
        raise ValidationError("geometry mismatch: frame side != plan patch size")
    if probe.side != plan.patch_size:
        raise ValidationError("geometry mismatch: probe side != plan patch size")
    probe_sq = probe.field.real ** 2 + probe.field.imag ** 2
    peak = float(probe_sq.max())
    if peak == 0.0:
        raise ValidationError("degenerate probe: all-zero field")
    r, c = plan.anchors[j]
    s = plan.patch_size
    out = obj.copy()
    patch = out[r:r + s, c:c + s]
    psi = probe.field * patch
    psi_hat = dft2(psi)
    psi_new = idft2(_modulus_projection(psi_hat, frame))
    denom = (1.0 - alpha) * probe_sq + alpha * peak
    patch += np.conj(probe.field) * (psi_new - psi) / denom
    return out


def run_rpie(data, probe: Probe, plan: ScanPlan,
             cfg: RpieConfig) -> tuple[np.ndarray, np.ndarray]:
    """Full reconstruction; returns (object, per-epoch misfit trace).

    Positions are visited in a fresh seeded permutation every epoch. The
    misfit sum_j ||sqrt(f_j) - |psi_hat_j|||^2 is recomputed from the epoch's
    final object so the trace can be reproduced from the outputs alone.
    ``data`` may be a DiffractionStack or a raw (J, s, s) array (exact
    noise-free intensities for consistency checks).
    """
    frames = _frames_of(data)
    if frames.shape[0] != plan.n_positions:
        raise ValidationError("data/plan mismatch")
    if cfg.init_object is None:
        obj = np.ones((plan.object_size, plan.object_size), dtype=np.complex128)
    else:
        obj = np.asarray(cfg.init_object, dtype=np.complex128).copy()
        if obj.shape != (plan.object_size, plan.object_size):
            raise ValidationError("geometry mismatch: init object size")
    rng = np.random.default_rng(cfg.seed)
    roots = np.sqrt(frames)
    misfit = np.empty(cfg.n_epochs)
    for epoch in range(cfg.n_epochs):
        for j in rng.permutation(plan.n_positions):
            obj = rpie_position_update(obj, probe, plan, int(j), frames[j],
                                       cfg.alpha)
        misfit[epoch] = data_misfit(obj, probe, plan, roots)
    return obj, misfit


def data_misfit(obj, probe: Probe, plan: ScanPlan, roots: np.ndarray) -> float:
    """sum_j ||sqrt(f_j) - |dft2(P * patch_j)|||^2 for the given object."""
    s = plan.patch_size
    obj = np.asarray(obj, dtype=np.complex128)
    total = 0.0
    for j in range(plan.n_positions):
        r, c = plan.anchors[j]
        psi_hat = dft2(probe.field * obj[r:r + s, c:c + s])
        total += float(np.sum((roots[j] - np.abs(psi_hat)) ** 2))
    return total
