"""Synthetic experiment harness: phantoms, probes, scan plans, and metrics.

Phantoms are built from pairs of 8-bit grayscale images (MNIST-style IDX
files): each image is bilinearly resized to the object grid and mapped
through x -> (x/255 + 0.2) / 1.2, which lands in (1/6, 1]; one mapped image
becomes the magnitude, the other the phase in radians.

Scan plans follow a raster grid whose step is s = round((1 - overlap) *
patch_side) (linear overlap fraction of the probe side), with an optional
uniform integer jitter per coordinate, clamped to keep every patch inside
the object.

Reconstruction error is the global-phase-aligned relative l2 distance; the
aligning angle has the closed form arg<recon, truth>. Uncertainty scores are
Pearson/Spearman correlations between the ensemble's std maps and the
absolute error maps of the ensemble mean, channel by channel.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import rankdata

from .errors import FormatError, GeometryError, ValidationError
from .formats import read_exact
from .generator import GeneratorModel, generate_complex
from .inference import (ChainConfig, PosteriorEnsemble, chain_runtime,
                        init_latent, run_chain)
from .physics import Probe, ScanPlan, simulate_dataset
from .rpie import RpieConfig, run_rpie

PHANTOM_OFFSET = 0.2
PHANTOM_SCALE = 1.2


@dataclass
class ExperimentConfig:
    overlap_ratio: float = 0.05
    probe_amplitude: float = 100.0
    jitter: int = 1
    object_side: int = 64
    patch_side: int = 16
    seeds: tuple[int, int, int] = (1, 2, 3)  # (data, chain, rpie)

    def __post_init__(self):
        if not 0.0 <= self.overlap_ratio < 1.0:
            raise ValidationError("invalid overlap: need 0 <= overlap < 1")
        if self.probe_amplitude <= 0:
            raise ValidationError("invalid probe: amplitude must be positive")
        if self.jitter < 0:
            raise ValidationError("jitter must be >= 0")
        if self.step < 1:
            raise ValidationError("invalid overlap: step collapses below one pixel")

    @property
    def step(self) -> int:
        return int(round((1.0 - self.overlap_ratio) * self.patch_side))


@dataclass
class MetricsReport:
    l2_error: float
    pearson_mag: float = float("nan")
    spearman_mag: float = float("nan")
    pearson_phase: float = float("nan")
    spearman_phase: float = float("nan")
    runtime: float = 0.0


def make_disk_probe(side: int = 16, radius: float = 8.0,
                    amplitude: float = 100.0) -> Probe:
    """Binary disk probe: amplitude where the pixel center is strictly inside
    ``radius`` of the grid center, zero elsewhere; zero phase."""
    if amplitude <= 0:
        raise ValidationError("invalid probe: amplitude must be positive")
    if radius > side / 2:
        raise ValidationError("invalid probe: radius exceeds half the side")
    center = (side - 1) / 2.0
    rows, cols = np.indices((side, side))
    inside = (rows - center) ** 2 + (cols - center) ** 2 < radius ** 2
    fld = np.where(inside, amplitude, 0.0).astype(np.complex128)
    return Probe(field=fld, amplitude=float(amplitude))


def make_scan_plan(cfg: ExperimentConfig, rng) -> ScanPlan:
    """Perturbed raster grid: multiples of the overlap step plus clamped
    uniform integer jitter in [-jitter, +jitter] per coordinate."""
    rng = np.random.default_rng(rng)
    limit = cfg.object_side - cfg.patch_side
    base = np.arange(0, limit + 1, cfg.step, dtype=np.int64)
    rows, cols = np.meshgrid(base, base, indexing="ij")
    anchors = np.stack([rows.ravel(), cols.ravel()], axis=1)
    if cfg.jitter > 0:
        shift = rng.integers(-cfg.jitter, cfg.jitter + 1, size=anchors.shape)
        anchors = np.clip(anchors + shift, 0, limit)
    return ScanPlan(anchors=anchors, patch_size=cfg.patch_side,
                    object_size=cfg.object_side)


def pixel_map(x) -> np.ndarray:
    """8-bit pixel value -> (1/6, 1]: add the 0.2 offset and renormalize."""
    return (np.asarray(x, dtype=np.float64) / 255.0 + PHANTOM_OFFSET) / PHANTOM_SCALE


def bilinear_resize(img: np.ndarray, out_side: int) -> np.ndarray:
    """Separable bilinear resize with half-pixel-aligned sample centers."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValidationError("invalid input: need a non-empty 2-D image")
    h, w = img.shape
    ys = (np.arange(out_side) + 0.5) * (h / out_side) - 0.5
    xs = (np.arange(out_side) + 0.5) * (w / out_side) - 0.5
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    out = (img[np.ix_(y0, x0)] * (1 - wy) * (1 - wx)
           + img[np.ix_(y0, x1)] * (1 - wy) * wx
           + img[np.ix_(y1, x0)] * wy * (1 - wx)
           + img[np.ix_(y1, x1)] * wy * wx)
    return out


def make_phantom(magnitude_img, phase_img, side: int = 64) -> np.ndarray:
    """Complex phantom from two raw 8-bit grayscale images.

    Both images are resized to ``side`` and mapped into (1/6, 1]; the first
    becomes |u|, the second the phase in radians.
    """
    mag_img = np.asarray(magnitude_img)
    phs_img = np.asarray(phase_img)
    for img in (mag_img, phs_img):
        if img.ndim != 2 or img.size == 0:
            raise ValidationError("invalid input: need non-empty 2-D images")
        if img.shape[0] != img.shape[1]:
            raise ValidationError("invalid input: source images must be square")
    mag = pixel_map(bilinear_resize(mag_img, side))
    phase = pixel_map(bilinear_resize(phs_img, side))
    return mag * np.exp(1j * phase)


def ingest_idx(path) -> list[np.ndarray]:
    """Parse a big-endian IDX image file into a list of uint8 arrays."""
    with open(path, "rb") as f:
        header = read_exact(f, 4)
        magic = struct.unpack(">I", header)[0]
        if magic != 0x00000803:
            raise FormatError(f"unsupported format: IDX magic 0x{magic:08x}")
        n, rows, cols = struct.unpack(">III", read_exact(f, 12))
        raw = read_exact(f, n * rows * cols)
        if f.read(1):
            raise FormatError("corrupt file: trailing bytes")
    data = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows, cols)
    return [data[i].copy() for i in range(n)]


def align_phase(truth, recon) -> float:
    """Angle theta* = arg<recon, truth> such that exp(1j*theta*) * recon is
    the global-phase alignment minimizing ||truth - exp(1j*theta)*recon||."""
    inner = np.vdot(np.asarray(recon), np.asarray(truth))
    return float(np.angle(inner)) if inner != 0 else 0.0


def l2_error(truth, recon) -> float:
    """Global-phase-aligned relative l2 error."""
    truth = np.asarray(truth, dtype=np.complex128)
    recon = np.asarray(recon, dtype=np.complex128)
    if truth.shape != recon.shape:
        raise GeometryError("geometry mismatch: fields differ in shape")
    norm = np.linalg.norm(truth)
    if norm == 0.0:
        raise ValidationError("degenerate reference: zero truth")
    theta = align_phase(truth, recon)
    return float(np.linalg.norm(truth - np.exp(1j * theta) * recon) / norm)


def pearson(x, y) -> float:
    """Product-moment correlation; rejects constant inputs."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValidationError("correlation needs two equal-length vectors (n >= 2)")
    dx = x - x.mean()
    dy = y - y.mean()
    denom = np.linalg.norm(dx) * np.linalg.norm(dy)
    if denom == 0.0:
        raise ValidationError("undefined correlation: constant input")
    return float(np.dot(dx, dy) / denom)


def spearman(x, y) -> float:
    """Pearson correlation of average-tied ranks."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape or x.size < 2:
        raise ValidationError("correlation needs two equal-length vectors (n >= 2)")
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def _safe_corr(fn, x, y) -> float:
    try:
        return fn(x, y)
    except ValidationError:
        return float("nan")  # degenerate channel; NaN is the error sentinel


def uncertainty_error_report(truth, ensemble: PosteriorEnsemble,
                             runtime: float = 0.0) -> MetricsReport:
    """Correlate the ensemble's std maps with the mean's true error maps.

    Error maps are channel-wise absolute differences after aligning the
    mean's global phase to the truth: | |mean| - |truth| | and
    | arg(aligned mean) - arg(truth) |.
    """
    truth = np.asarray(truth, dtype=np.complex128)
    mean = np.asarray(ensemble.mean_object)
    if truth.shape != mean.shape:
        raise GeometryError("geometry mismatch: truth and mean differ in shape")
    err = l2_error(truth, mean)
    aligned = np.exp(1j * align_phase(truth, mean)) * mean
    err_mag = np.abs(np.abs(aligned) - np.abs(truth))
    err_phase = np.abs(np.angle(aligned) - np.angle(truth))
    return MetricsReport(
        l2_error=err,
        pearson_mag=_safe_corr(pearson, ensemble.std_magnitude, err_mag),
        spearman_mag=_safe_corr(spearman, ensemble.std_magnitude, err_mag),
        pearson_phase=_safe_corr(pearson, ensemble.std_phase, err_phase),
        spearman_phase=_safe_corr(spearman, ensemble.std_phase, err_phase),
        runtime=runtime,
    )


# ---------------------------------------------------------------------------
# Benchmark sweep

BENCHMARK_COLUMNS = (
    "overlap_ratio", "probe_amplitude", "object_index",
    "ula_l2", "rpie_l2",
    "pearson_mag", "spearman_mag", "pearson_phase", "spearman_phase",
)


@dataclass(eq=False)
class BenchmarkRow:
    overlap_ratio: float
    probe_amplitude: float
    object_index: int
    ula: MetricsReport
    rpie: MetricsReport
    error: str = ""

    def values(self) -> list:
        return [self.overlap_ratio, self.probe_amplitude, self.object_index,
                self.ula.l2_error, self.rpie.l2_error,
                self.ula.pearson_mag, self.ula.spearman_mag,
                self.ula.pearson_phase, self.ula.spearman_phase]


def run_single(cfg: ExperimentConfig, truth, model: GeneratorModel,
               rpie_cfg: RpieConfig, chain_cfg: ChainConfig,
               init_iters: int = 500, init_step_size: float = 1e-2,
               z0=None) -> tuple[MetricsReport, MetricsReport]:
    """Simulate one object under cfg, reconstruct with both methods, score.

    ``z0`` lets callers reuse the free-space latent (it depends only on the
    model, so sweeps compute it once).
    """
    seed_data, seed_chain, seed_rpie = cfg.seeds
    probe = make_disk_probe(cfg.patch_side, cfg.patch_side / 2,
                            cfg.probe_amplitude)
    plan = make_scan_plan(cfg, np.random.SeedSequence([seed_data, 0]))
    data = simulate_dataset(truth, probe, plan,
                            np.random.SeedSequence([seed_data, 1]))

    if z0 is None:
        z0, _ = init_latent(model, init_iters, init_step_size)
    chain_cfg = replace(chain_cfg, seed=seed_chain)
    ensemble, t_ula = chain_runtime(run_chain, z0, data, probe, plan, model,
                                    chain_cfg)
    ula_report = uncertainty_error_report(truth, ensemble, runtime=t_ula)

    rpie_cfg = replace(rpie_cfg, seed=seed_rpie)
    (recon, _), t_rpie = chain_runtime(run_rpie, data, probe, plan, rpie_cfg)
    rpie_report = MetricsReport(l2_error=l2_error(truth, recon),
                                runtime=t_rpie)
    return ula_report, rpie_report


def run_benchmark(configs, phantoms, model: GeneratorModel,
                  rpie_cfg: RpieConfig, chain_cfg: ChainConfig,
                  n_objects: int | None = None) -> list[BenchmarkRow]:
    """Sweep every config over the phantom list; per-run failures are
    recorded in the row and the sweep continues."""
    if n_objects is not None:
        phantoms = list(phantoms)[:n_objects]
    z0, _ = init_latent(model)
    rows = []
    for cfg in configs:
        for idx, truth in enumerate(phantoms):
            run_cfg = replace(cfg, seeds=(cfg.seeds[0] + idx,
                                          cfg.seeds[1] + idx,
                                          cfg.seeds[2] + idx))
            try:
                ula_report, rpie_report = run_single(run_cfg, truth, model,
                                                     rpie_cfg, chain_cfg,
                                                     z0=z0)
                rows.append(BenchmarkRow(cfg.overlap_ratio, cfg.probe_amplitude,
                                         idx, ula_report, rpie_report))
            except Exception as exc:  # keep sweeping, record the failure
                rows.append(BenchmarkRow(cfg.overlap_ratio, cfg.probe_amplitude,
                                         idx, MetricsReport(float("nan")),
                                         MetricsReport(float("nan")),
                                         error=f"{type(exc).__name__}: {exc}"))
    return rows


def aggregate_rows(rows) -> list[dict]:
    """Per-config mean and std of every numeric benchmark column."""
    groups: dict[tuple, list[BenchmarkRow]] = {}
    for row in rows:
        if row.error:
            continue
        groups.setdefault((row.overlap_ratio, row.probe_amplitude), []).append(row)
    out = []
    for (overlap, amplitude), members in sorted(groups.items()):
        table = np.array([m.values()[3:] for m in members], dtype=np.float64)
        entry = {"overlap_ratio": overlap, "probe_amplitude": amplitude,
                 "n_runs": len(members)}
        for i, name in enumerate(BENCHMARK_COLUMNS[3:]):
            col = table[:, i][np.isfinite(table[:, i])]
            entry[f"{name}_mean"] = float(col.mean()) if col.size else float("nan")
            entry[f"{name}_std"] = float(col.std()) if col.size else float("nan")
        out.append(entry)
    return out
