import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptybayes.errors import GeometryError, ValidationError
from ptybayes.physics import (DiffractionStack, Probe, ScanPlan, adjoint_exit,
                              dft2, embed_patch_adjoint, expected_intensities,
                              extract_patch, forward_exit, idft2, intensity,
                              sample_poisson, simulate_dataset)


def random_field(rng, side):
    return rng.normal(size=(side, side)) + 1j * rng.normal(size=(side, side))


def small_setup(rng, obj_side=8, patch=4):
    plan = ScanPlan(anchors=[[0, 0], [2, 3], [obj_side - patch, obj_side - patch]],
                    patch_size=patch, object_size=obj_side)
    probe = Probe(field=random_field(rng, patch), amplitude=1.0)
    return plan, probe


def dense_exit_matrix(probe, plan, j):
    """Explicit matrix of the exit operator on the vectorized object."""
    s = plan.patch_size
    n = plan.object_size
    m = s * s
    # patch extraction
    S = np.zeros((m, n * n))
    r0, c0 = plan.anchors[j]
    for a in range(s):
        for b in range(s):
            S[a * s + b, (r0 + a) * n + (c0 + b)] = 1.0
    D = np.diag(probe.field.ravel())
    # unitary 2-D DFT as a matrix
    F = np.zeros((m, m), dtype=np.complex128)
    for k1 in range(s):
        for k2 in range(s):
            for a in range(s):
                for b in range(s):
                    F[k1 * s + k2, a * s + b] = np.exp(
                        -2j * np.pi * (k1 * a + k2 * b) / s) / s
    return F @ D @ S


class TestScanPlan:
    def test_out_of_bounds_anchor_rejected(self):
        with pytest.raises(GeometryError):
            ScanPlan(anchors=[[0, 49]], patch_size=16, object_size=64)
        with pytest.raises(GeometryError):
            ScanPlan(anchors=[[-1, 0]], patch_size=16, object_size=64)

    def test_empty_plan_rejected(self):
        with pytest.raises(ValidationError):
            ScanPlan(anchors=np.empty((0, 2)), patch_size=4, object_size=8)

    def test_digest_binds_geometry(self):
        a = ScanPlan(anchors=[[0, 0]], patch_size=4, object_size=8)
        b = ScanPlan(anchors=[[0, 1]], patch_size=4, object_size=8)
        assert a.digest() != b.digest()
        assert a.digest() == ScanPlan(anchors=[[0, 0]], patch_size=4,
                                      object_size=8).digest()


class TestPatchOps:
    def test_corner_block_identity(self, rng):
        obj = random_field(rng, 64)
        plan = ScanPlan(anchors=[[0, 0]], patch_size=16, object_size=64)
        assert np.array_equal(extract_patch(obj, plan, 0), obj[:16, :16])

    def test_constant_field(self):
        obj = np.ones((64, 64), dtype=complex)
        plan = ScanPlan(anchors=[[13, 40]], patch_size=16, object_size=64)
        assert np.array_equal(extract_patch(obj, plan, 0), np.ones((16, 16)))

    def test_matches_index_oracle(self, rng):
        obj = random_field(rng, 8)
        plan = ScanPlan(anchors=[[2, 3]], patch_size=4, object_size=8)
        patch = extract_patch(obj, plan, 0)
        for a in range(4):
            for b in range(4):
                assert patch[a, b] == obj[2 + a, 3 + b]

    def test_extract_errors(self, rng):
        plan, _ = small_setup(rng)
        with pytest.raises(ValidationError, match="invalid scan index"):
            extract_patch(np.zeros((8, 8)), plan, 3)
        with pytest.raises(GeometryError, match="geometry mismatch"):
            extract_patch(np.zeros((9, 9)), plan, 0)

    def test_embed_zero_and_impulse(self):
        plan = ScanPlan(anchors=[[5, 7]], patch_size=4, object_size=16)
        assert not embed_patch_adjoint(np.zeros((4, 4)), plan, 0).any()
        imp = np.zeros((4, 4), dtype=complex)
        imp[0, 0] = 1.0
        out = embed_patch_adjoint(imp, plan, 0)
        expected = np.zeros((16, 16), dtype=complex)
        expected[5, 7] = 1.0
        assert np.array_equal(out, expected)

    def test_extract_embed_adjoint_identity(self, rng):
        plan, _ = small_setup(rng)
        for j in range(plan.n_positions):
            u = random_field(rng, 8)
            v = random_field(rng, 4)
            lhs = np.vdot(extract_patch(u, plan, j), v)
            rhs = np.vdot(u, embed_patch_adjoint(v, plan, j))
            assert abs(lhs - rhs) <= 1e-12 * np.linalg.norm(u) * np.linalg.norm(v)


class TestDft:
    def test_impulse_transform(self):
        imp = np.zeros((16, 16), dtype=complex)
        imp[0, 0] = 1.0
        np.testing.assert_allclose(dft2(imp), np.full((16, 16), 1 / 16),
                                   atol=1e-15)

    def test_constant_to_dc(self):
        out = dft2(np.ones((16, 16), dtype=complex))
        assert abs(out[0, 0] - 16.0) < 1e-12
        out[0, 0] = 0.0
        assert np.abs(out).max() < 1e-12

    def test_matches_naive_summation(self, rng):
        x = random_field(rng, 4)
        naive = np.zeros((4, 4), dtype=complex)
        for k1 in range(4):
            for k2 in range(4):
                acc = 0.0
                for a in range(4):
                    for b in range(4):
                        acc += x[a, b] * np.exp(-2j * np.pi * (k1 * a + k2 * b) / 4)
                naive[k1, k2] = acc / 4.0
        np.testing.assert_allclose(dft2(x), naive, atol=1e-12)

    def test_rejects_non_square(self):
        with pytest.raises(GeometryError):
            dft2(np.zeros((4, 6)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=2, max_value=24), st.integers(0, 2 ** 31))
    def test_unitarity_and_inversion(self, side, seed):
        x = random_field(np.random.default_rng(seed), side)
        fx = dft2(x)
        assert abs(np.linalg.norm(fx) - np.linalg.norm(x)) <= 1e-12 * np.linalg.norm(x)
        np.testing.assert_allclose(idft2(fx), x, atol=1e-12 * np.abs(x).max())


class TestExitOperator:
    def test_zero_object(self, rng):
        plan, probe = small_setup(rng)
        assert not forward_exit(np.zeros((8, 8)), probe, plan, 0).any()

    def test_ones_object_impulse_probe(self):
        plan = ScanPlan(anchors=[[0, 0]], patch_size=16, object_size=64)
        fld = np.zeros((16, 16), dtype=complex)
        fld[0, 0] = 1.0
        probe = Probe(field=fld, amplitude=1.0)
        out = forward_exit(np.ones((64, 64), dtype=complex), probe, plan, 0)
        np.testing.assert_allclose(out, np.full((16, 16), 1 / 16), atol=1e-15)

    def test_matches_dense_matrix(self, rng):
        plan, probe = small_setup(rng)
        u = random_field(rng, 8)
        for j in range(plan.n_positions):
            A = dense_exit_matrix(probe, plan, j)
            np.testing.assert_allclose(
                forward_exit(u, probe, plan, j).ravel(), A @ u.ravel(),
                atol=1e-12)

    def test_adjoint_matches_dense_conjugate_transpose(self, rng):
        plan, probe = small_setup(rng)
        v = random_field(rng, 4)
        for j in range(plan.n_positions):
            A = dense_exit_matrix(probe, plan, j)
            np.testing.assert_allclose(
                adjoint_exit(v, probe, plan, j).ravel(),
                A.conj().T @ v.ravel(), atol=1e-12)

    def test_adjoint_identity_zero_v(self, rng):
        plan, probe = small_setup(rng)
        assert not adjoint_exit(np.zeros((4, 4)), probe, plan, 1).any()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2 ** 31))
    def test_adjoint_identity_random(self, seed):
        rng = np.random.default_rng(seed)
        plan, probe = small_setup(rng)
        j = int(rng.integers(plan.n_positions))
        u = random_field(rng, 8)
        v = random_field(rng, 4)
        lhs = np.vdot(forward_exit(u, probe, plan, j), v)
        rhs = np.vdot(u, adjoint_exit(v, probe, plan, j))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(v)

    def test_linearity(self, rng):
        plan, probe = small_setup(rng)
        u1, u2 = random_field(rng, 8), random_field(rng, 8)
        a, b = 1.7 - 0.3j, -0.8 + 2.1j
        lhs = forward_exit(a * u1 + b * u2, probe, plan, 1)
        rhs = a * forward_exit(u1, probe, plan, 1) + b * forward_exit(u2, probe, plan, 1)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(lhs).max())


class TestIntensity:
    def test_constant_modulus(self):
        fld = np.full((5, 5), 3 + 4j)
        np.testing.assert_array_equal(intensity(fld), np.full((5, 5), 25.0))

    def test_zero(self):
        assert not intensity(np.zeros((3, 3), dtype=complex)).any()

    def test_elementwise_oracle(self, rng):
        fld = random_field(rng, 6)
        expected = fld.real ** 2 + fld.imag ** 2
        np.testing.assert_allclose(intensity(fld), expected, rtol=1e-15)
        assert (intensity(fld) >= 0).all()


class TestPoisson:
    def test_zero_rates(self, rng):
        out = sample_poisson(np.zeros((7, 7)), rng)
        assert not out.any()

    def test_negative_rate_rejected(self, rng):
        with pytest.raises(ValidationError, match="invalid rate"):
            sample_poisson(np.array([-1.0]), rng)

    def test_reproducible(self):
        a = sample_poisson(np.full(100, 4.2), np.random.default_rng(9))
        b = sample_poisson(np.full(100, 4.2), np.random.default_rng(9))
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("lam", [0.5, 5.0, 100.0])
    def test_moments(self, lam):
        n = 100_000
        draws = sample_poisson(np.full(n, lam), np.random.default_rng(31))
        se_mean = np.sqrt(lam / n)
        se_var = np.sqrt((lam + 2 * lam ** 2) / n)
        assert abs(draws.mean() - lam) <= 3 * se_mean
        assert abs(draws.var() - lam) <= 3 * se_var

    def test_pmf_at_zero(self):
        n = 100_000
        draws = sample_poisson(np.full(n, 0.5), np.random.default_rng(77))
        p0 = np.exp(-0.5)
        se = np.sqrt(p0 * (1 - p0) / n)
        assert abs((draws == 0).mean() - p0) <= 3 * se


class TestSimulate:
    def test_zero_object(self, rng):
        plan, probe = small_setup(rng)
        stack = simulate_dataset(np.zeros((8, 8)), probe, plan, seed=0)
        assert not stack.frames.any()

    def test_noise_off_rounds_intensities(self, rng):
        plan, probe = small_setup(rng)
        obj = random_field(rng, 8)
        stack = simulate_dataset(obj, probe, plan, seed=0, noise=False)
        lam = expected_intensities(obj, probe, plan)
        np.testing.assert_array_equal(stack.frames, np.round(lam).astype(np.int64))

    def test_seed_determinism(self, rng):
        plan, probe = small_setup(rng)
        obj = 10 * random_field(rng, 8)
        a = simulate_dataset(obj, probe, plan, seed=123)
        b = simulate_dataset(obj, probe, plan, seed=123)
        assert np.array_equal(a.frames, b.frames)
        assert a.plan_digest == b.plan_digest

    def test_digest_verification(self, rng):
        plan, probe = small_setup(rng)
        stack = simulate_dataset(np.ones((8, 8)), probe, plan, seed=1)
        stack.verify(plan)
        other = ScanPlan(anchors=[[0, 0], [2, 3], [4, 3]], patch_size=4,
                         object_size=8)
        with pytest.raises(ValidationError, match="data/plan mismatch"):
            stack.verify(other)

    def test_counts_nonnegative_integers(self, rng):
        plan, probe = small_setup(rng)
        stack = simulate_dataset(5 * random_field(rng, 8), probe, plan, seed=4)
        assert np.issubdtype(stack.frames.dtype, np.integer)
        assert (stack.frames >= 0).all()

    def test_stack_rejects_negative_or_float(self):
        with pytest.raises(ValidationError):
            DiffractionStack(frames=-np.ones((1, 4, 4), dtype=np.int64),
                             plan_digest="x")
        with pytest.raises(ValidationError):
            DiffractionStack(frames=np.ones((1, 4, 4)), plan_digest="x")
