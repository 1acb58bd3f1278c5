#!/usr/bin/env python3
"""Recompute the rPIE regression calibration behind the acceptance fixture.

Runs the pinned pipeline (smooth blob phantom, 80% overlap, amplitude 100,
noise-free intensities, 300 epochs from free space) and reports the
full-field and illuminated-region phase-aligned l2 errors. The acceptance
threshold in tests/test_acceptance.py was frozen from this run.
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from conftest import blob_image  # noqa: E402

from ptybayes.experiment import (ExperimentConfig, l2_error, make_disk_probe,
                                 make_phantom, make_scan_plan)
from ptybayes.physics import expected_intensities
from ptybayes.rpie import RpieConfig, run_rpie


def main():
    truth = make_phantom(blob_image(3), blob_image(4))
    probe = make_disk_probe(16, 8, 100.0)
    cfg = ExperimentConfig(overlap_ratio=0.8, probe_amplitude=100.0, jitter=1)
    plan = make_scan_plan(cfg, np.random.SeedSequence(3))
    lam = expected_intensities(truth, probe, plan)

    t0 = time.perf_counter()
    recon, misfit = run_rpie(lam, probe, plan,
                             RpieConfig(alpha=0.05, n_epochs=300, seed=0))
    elapsed = time.perf_counter() - t0

    cover = np.zeros((64, 64))
    weight = np.abs(probe.field) ** 2
    for r, c in plan.anchors:
        cover[r:r + 16, c:c + 16] += weight
    covered_truth = np.where(cover > 0, truth, 0.0)
    covered_recon = np.where(cover > 0, recon, 0.0)

    print(f"positions: {plan.n_positions}")
    print(f"never-illuminated pixels: {int((cover == 0).sum())}")
    print(f"full-field l2: {l2_error(truth, recon):.6f}")
    print(f"covered-region l2: {l2_error(covered_truth, covered_recon):.3e}")
    print(f"misfit first/last: {misfit[0]:.4g} / {misfit[-1]:.4g}")
    print(f"runtime: {elapsed:.1f}s")


if __name__ == "__main__":
    main()
