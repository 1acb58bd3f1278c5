"""Acceptance gate: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; any failed criterion shows up as a normal pytest failure.
"""

import struct
import time

import numpy as np
import pytest

from conftest import blob_image, tiny_model
from ptybayes import formats
from ptybayes.cli import EXIT_OK, main
from ptybayes.errors import FormatError
from ptybayes.experiment import (ExperimentConfig, l2_error, make_disk_probe,
                                 make_phantom, make_scan_plan, pearson,
                                 spearman)
from ptybayes.generator import (generate_complex, load_model,
                                reference_generator, save_model)
from ptybayes.inference import (ChainConfig, grad_log_likelihood,
                                log_likelihood, ula_trajectory)
from ptybayes.physics import (Probe, ScanPlan, adjoint_exit, dft2,
                              expected_intensities, forward_exit, idft2,
                              sample_poisson, simulate_dataset)
from ptybayes.rpie import RpieConfig, run_rpie

# pinned by the initial calibration run of the reference pipeline
# (smooth blob phantom, plan seed 3, alpha 0.05, 300 epochs, measured 0.2657;
# the never-illuminated fringe keeps the full-field error at this scale)
RPIE_REGRESSION_L2 = 0.30
RPIE_COVERED_L2 = 1e-8


def _pass(name, detail=""):
    print(f"PASS  {name}" + (f"  [{detail}]" if detail else ""))


def test_adjoint_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cfg = ExperimentConfig(overlap_ratio=0.5, jitter=1)
    plan = make_scan_plan(cfg, np.random.SeedSequence(1))
    probe = make_disk_probe(16, 8, 100.0)
    worst = 0.0
    for _ in range(20):
        j = int(rng.integers(plan.n_positions))
        u = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
        v = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        lhs = np.vdot(forward_exit(u, probe, plan, j), v)
        rhs = np.vdot(u, adjoint_exit(v, probe, plan, j))
        rel = abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v))
        worst = max(worst, rel)
        assert rel <= 1e-10
    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0
    _pass("adjoint correctness", f"worst rel {worst:.2e}, {elapsed:.2f}s")


def test_dft_unitarity_and_inversion():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    fx = dft2(x)
    assert abs(np.linalg.norm(fx) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
    assert np.abs(idft2(fx) - x).max() <= 1e-12
    y = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    naive = np.zeros((4, 4), dtype=complex)
    for k1 in range(4):
        for k2 in range(4):
            for a in range(4):
                for b in range(4):
                    naive[k1, k2] += y[a, b] * np.exp(
                        -2j * np.pi * (k1 * a + k2 * b) / 4) / 4.0
    assert np.abs(dft2(y) - naive).max() <= 1e-12
    _pass("DFT unitarity, inversion, and naive-summation agreement")


def test_likelihood_gradient_matches_finite_differences():
    t0 = time.perf_counter()
    h = 1e-6
    worst = 0.0
    for trial in range(10):
        rng = np.random.default_rng(900 + trial)
        model = tiny_model(seed=900 + trial,
                           activation="tanh" if trial % 2 else "relu")
        plan = ScanPlan(anchors=[[0, 0], [3, 4]], patch_size=4, object_size=8)
        probe = make_disk_probe(4, 2, 5.0)
        truth = generate_complex(model, rng.normal(size=8))
        data = simulate_dataset(truth, probe, plan, seed=trial)
        z = rng.normal(size=8)
        g = grad_log_likelihood(z, data, probe, plan, model)
        fd = np.zeros(8)
        for i in range(8):
            zp, zm = z.copy(), z.copy()
            zp[i] += h
            zm[i] -= h
            fd[i] = (log_likelihood(zp, data, probe, plan, model)
                     - log_likelihood(zm, data, probe, plan, model)) / (2 * h)
        rel = np.abs(fd - g).max() / np.abs(g).max()
        worst = max(worst, rel)
        assert rel <= 1e-4
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    _pass("latent likelihood gradient vs central differences",
          f"worst rel {worst:.2e}, {elapsed:.2f}s")


def test_ula_stationary_variance_bias_law():
    t0 = time.perf_counter()
    gamma = 0.01
    target = 1.0 / (1.0 - gamma / 2.0)
    cfg = ChainConfig(step_size=gamma, n_iters=11000, burn_in=1000, seed=42)
    # 100 independent chains (16 coordinates each) stepped in lockstep
    traj = ula_trajectory(np.zeros((100, 16)), lambda z: -z, cfg)
    var = float(traj[cfg.burn_in:].var())
    elapsed = time.perf_counter() - t0
    assert abs(var - target) <= 0.01 * target
    assert elapsed < 60.0
    _pass("ULA stationary-variance bias law",
          f"var {var:.5f} vs {target:.5f}, {elapsed:.1f}s")


def test_ula_gaussian_mean_recovery():
    mu = np.array([1.0, -2.0])
    cfg = ChainConfig(step_size=0.01, n_iters=42000, burn_in=2000, seed=7)
    traj = ula_trajectory(np.tile(mu, (100, 1)), lambda z: mu - z, cfg)
    est = traj[cfg.burn_in:].mean(axis=(0, 1))
    err = np.abs(est - mu)
    assert (err <= 0.02).all()
    _pass("ULA Gaussian mean recovery",
          f"mean ({est[0]:+.4f}, {est[1]:+.4f}), max err {err.max():.4f}")


def test_poisson_sampler_moments():
    n = 100_000
    for lam, seed in ((0.5, 11), (5.0, 12), (100.0, 13)):
        draws = sample_poisson(np.full(n, lam), np.random.default_rng(seed))
        se_mean = np.sqrt(lam / n)
        se_var = np.sqrt((lam + 2 * lam ** 2) / n)
        assert abs(draws.mean() - lam) <= 3 * se_mean
        assert abs(draws.var() - lam) <= 3 * se_var
    zeros = sample_poisson(np.zeros(1000), np.random.default_rng(0))
    assert not zeros.any()
    _pass("Poisson sampler moments at lambda in {0.5, 5, 100} and zero rate")


@pytest.fixture(scope="module")
def rpie_fixture():
    truth = make_phantom(blob_image(3), blob_image(4))
    probe = make_disk_probe(16, 8, 100.0)
    cfg = ExperimentConfig(overlap_ratio=0.8, probe_amplitude=100.0, jitter=1)
    plan = make_scan_plan(cfg, np.random.SeedSequence(3))
    lam = expected_intensities(truth, probe, plan)
    return truth, probe, plan, lam


def test_rpie_fixed_point_and_regression(rpie_fixture):
    truth, probe, plan, lam = rpie_fixture
    # exact fixed point: consistent data + truth init leaves the object put
    obj, _ = run_rpie(lam, probe, plan,
                      RpieConfig(alpha=0.05, n_epochs=1, seed=0,
                                 init_object=truth))
    dev = np.abs(obj - truth).max()
    assert dev <= 1e-10

    recon, misfit = run_rpie(lam, probe, plan,
                             RpieConfig(alpha=0.05, n_epochs=300, seed=0))
    full = l2_error(truth, recon)
    assert full <= RPIE_REGRESSION_L2
    # pixels the disk probe actually illuminates converge far below that
    cover = np.zeros((64, 64))
    pf = np.abs(probe.field) ** 2
    for r, c in plan.anchors:
        cover[r:r + 16, c:c + 16] += pf
    masked_truth = np.where(cover > 0, truth, 0.0)
    masked_recon = np.where(cover > 0, recon, 0.0)
    covered = l2_error(masked_truth, masked_recon)
    assert covered <= RPIE_COVERED_L2
    _pass("rPIE fixed point and 300-epoch regression",
          f"fixed-point dev {dev:.1e}, l2 {full:.4f} <= {RPIE_REGRESSION_L2}, "
          f"covered-region l2 {covered:.1e}")


def test_scan_plan_arithmetic():
    low = ExperimentConfig(overlap_ratio=0.05, jitter=0)
    assert low.step == 15
    assert make_scan_plan(low, np.random.default_rng(0)).n_positions == 16
    half = ExperimentConfig(overlap_ratio=0.5, jitter=0)
    assert half.step == 8
    assert make_scan_plan(half, np.random.default_rng(0)).n_positions == 49
    _pass("scan-plan arithmetic (5% -> s=15, J=16; 50% -> s=8, J=49)")


def test_metric_correctness():
    rng = np.random.default_rng(55)
    truth = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    recon = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
    assert l2_error(truth, np.exp(1.1j) * truth) <= 1e-10
    value = l2_error(truth, recon)
    thetas = np.linspace(0, 2 * np.pi, 3600, endpoint=False)
    grid = min(np.linalg.norm(truth - np.exp(1j * t) * recon)
               for t in thetas) / np.linalg.norm(truth)
    assert abs(value - grid) <= 1e-6
    x = np.array([1.0, 2.0, 2.0, 4.0])
    y = np.array([3.0, 1.0, 1.0, 2.0])
    assert pearson(x, y) == pytest.approx(-3.0 / np.sqrt(209.0), abs=1e-15)
    assert spearman(x, y) == pytest.approx(-1.0 / 3.0, abs=1e-15)
    _pass("metric correctness (l2 alignment + tied-rank fixtures)")


def test_format_round_trips(tmp_path):
    rng = np.random.default_rng(77)

    anchors = np.array([[0, 0], [5, 9]])
    frames = rng.integers(0, 500, size=(2, 4, 4))
    p = tmp_path / "d.ptyd"
    formats.save_ptyd(p, anchors, 4, 16, frames)
    a2, ps, os_, f2 = formats.load_ptyd(p)
    assert np.array_equal(a2, anchors) and np.array_equal(f2, frames)

    fld = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    p = tmp_path / "p.prbe"
    formats.save_prbe(p, fld, 42.0)
    f3, amp = formats.load_prbe(p)
    assert amp == 42.0 and np.array_equal(f3, fld)

    model = reference_generator(latent_dim=6, base_channels=8,
                                output_side=16, seed=5)
    p = tmp_path / "g.pgen"
    save_model(model, p)
    loaded = load_model(p)
    for a, b in zip(model.layers, loaded.layers):
        if a.w is not None:
            assert np.array_equal(a.w, b.w) and np.array_equal(a.b, b.b)

    data = rng.normal(size=(6, 6))
    p = tmp_path / "m.pmap"
    formats.save_pmap(p, data, "std_magnitude", "magnitude")
    d2, meta = formats.load_pmap(p)
    assert np.array_equal(d2, data) and meta["name"] == "std_magnitude"

    obj = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    p = tmp_path / "o.pobj"
    formats.save_pobj(p, obj)
    assert np.array_equal(formats.load_pobj(p), obj)

    # corrupted magic and truncation are rejected with the documented errors
    for name, save in (("x.ptyd", lambda q: formats.save_ptyd(q, anchors, 4, 16, frames)),
                       ("x.prbe", lambda q: formats.save_prbe(q, fld, 1.0)),
                       ("x.pgen", lambda q: save_model(model, q)),
                       ("x.pmap", lambda q: formats.save_pmap(q, data, "n", "c")),
                       ("x.pobj", lambda q: formats.save_pobj(q, obj))):
        q = tmp_path / name
        save(q)
        raw = bytearray(q.read_bytes())
        raw[0] ^= 0xFF
        q.write_bytes(bytes(raw))
        loader = {"x.ptyd": formats.load_ptyd, "x.prbe": formats.load_prbe,
                  "x.pgen": load_model, "x.pmap": formats.load_pmap,
                  "x.pobj": formats.load_pobj}[name]
        with pytest.raises(FormatError, match="unsupported format"):
            loader(q)
        save(q)
        q.write_bytes(q.read_bytes()[:-3])
        with pytest.raises(FormatError, match="corrupt file"):
            loader(q)
    _pass("format round-trips and corruption rejection "
          "(PTYD, PRBE, PGEN, PMAP, POBJ)")


def test_end_to_end_determinism(tmp_path):
    truth = make_phantom(blob_image(20), blob_image(21))
    truth_path = tmp_path / "truth.pobj"
    formats.save_pobj(truth_path, truth)
    model = reference_generator(latent_dim=6, base_channels=8,
                                output_side=64, seed=9)
    model_path = tmp_path / "gen.pgen"
    save_model(model, model_path)
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        f"[object]\npath = {truth_path}\n"
        "[scan]\noverlap = 0.5\n"
        "[chain]\nn_iters = 30\nburn_in = 10\ninit_iters = 10\n"
        "sample_stride = 5\n"
        "[seeds]\ndata = 4\nchain = 5\nrpie = 6\n")

    def pipeline(root):
        root.mkdir()
        data = root / "data.ptyd"
        assert main(["simulate", "--config", str(cfg), "--out", str(data)]) == EXIT_OK
        post = root / "posterior"
        assert main(["sample", "--config", str(cfg), "--data", str(data),
                     "--model", str(model_path), "--out", str(post)]) == EXIT_OK
        assert main(["metrics", "--truth", str(truth_path), "--ensemble",
                     str(post), "--out", str(root / "metrics.csv")]) == EXIT_OK
        files = {}
        for path in sorted(root.rglob("*")):
            if path.is_file() and not path.name.endswith(".manifest"):
                files[str(path.relative_to(root))] = path.read_bytes()
        return files

    run_a = pipeline(tmp_path / "run_a")
    run_b = pipeline(tmp_path / "run_b")
    assert run_a.keys() == run_b.keys()
    for name in run_a:
        assert run_a[name] == run_b[name], f"output differs: {name}"
    _pass("end-to-end determinism (simulate -> sample -> metrics)",
          f"{len(run_a)} artifacts byte-identical")
