import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epqa.channel_model import (
    ArrayGeometry,
    PathAngles,
    PowerDelayProfile,
    azimuth_correlation,
    build_receive_correlation,
    cir_to_cfr,
    dft_matrix,
    draw_angles,
    elevation_correlation,
    exponential_pdp,
    generate_channel,
    project_psd,
    read_realization,
    sample_cir,
    write_realization,
)

angles = st.builds(
    PathAngles,
    st.floats(np.pi / 6, 5 * np.pi / 6),
    st.floats(np.pi / 12, np.pi / 3),
    st.floats((np.pi / 12) ** 2, (np.pi / 6) ** 2),
    st.floats((np.pi / 12) ** 2, (np.pi / 6) ** 2),
)


class TestCorrelation:
    def test_zero_separation(self):
        g = ArrayGeometry(3, 3)
        ang = PathAngles(1.0, 0.5, 0.1, 0.1)
        assert azimuth_correlation(g, ang, 2, 2) == pytest.approx(1 + 0j)
        assert elevation_correlation(g, ang, 3, 3) == pytest.approx(1 + 0j)

    @given(angles)
    def test_swap_gives_conjugate(self, ang):
        g = ArrayGeometry(3, 3, 0.7, 1.3)
        np.testing.assert_allclose(azimuth_correlation(g, ang, 1, 3),
                                   np.conj(azimuth_correlation(g, ang, 3, 1)), atol=1e-14)
        np.testing.assert_allclose(elevation_correlation(g, ang, 1, 2),
                                   np.conj(elevation_correlation(g, ang, 2, 1)), atol=1e-14)

    def test_azimuth_reference_value(self):
        # frozen from an independent 30-digit evaluation
        g = ArrayGeometry(1, 2, 1.0, 1.0)
        ang = PathAngles(np.pi / 2, np.pi / 4, (np.pi / 12) ** 2, (np.pi / 12) ** 2)
        np.testing.assert_allclose(azimuth_correlation(g, ang, 1, 2), 0.5151033730834685, rtol=1e-12)

    def test_elevation_reference_value(self):
        g = ArrayGeometry(3, 1, 1.0, 1.0)
        ang = PathAngles(np.pi / 2, np.pi / 3, 0.0, (np.pi / 12) ** 2)
        np.testing.assert_allclose(elevation_correlation(g, ang, 1, 3), 0.01727124798231443,
                                   rtol=1e-12, atol=1e-15)

    def test_elevation_without_spread_is_pure_phase(self):
        g = ArrayGeometry(4, 1, 0.5)
        ang = PathAngles(1.0, 0.7, 0.1, 0.0)
        assert abs(elevation_correlation(g, ang, 1, 4)) == pytest.approx(1.0)

    def test_single_antenna(self):
        R = build_receive_correlation(ArrayGeometry(1, 1), PathAngles(1.0, 0.5, 0.1, 0.1))
        np.testing.assert_allclose(R, [[1.0]])

    def test_kronecker_entry(self):
        g = ArrayGeometry(2, 2, 0.5, 0.5)
        ang = PathAngles(1.2, 0.6, 0.05, 0.05)
        R = build_receive_correlation(g, ang)
        np.testing.assert_allclose(
            R[0, 3], azimuth_correlation(g, ang, 1, 2) * elevation_correlation(g, ang, 1, 2), atol=1e-12
        )

    @settings(max_examples=30, deadline=None)
    @given(angles, st.sampled_from([0.3, 0.5, 1.0]))
    def test_projection_is_psd_hermitian_unit_diagonal(self, ang, spacing):
        R = build_receive_correlation(ArrayGeometry(4, 4, spacing, spacing), ang)
        np.testing.assert_allclose(R, R.conj().T, atol=1e-12)
        np.testing.assert_allclose(np.diag(R).real, 1.0, atol=1e-10)
        assert np.linalg.eigvalsh(R).min() >= -1e-10

    def test_project_psd_leaves_psd_input(self):
        A = np.array([[1.0, 0.3j], [-0.3j, 1.0]])
        np.testing.assert_allclose(project_psd(A), A)

    def test_project_psd_repairs_indefinite(self):
        A = np.array([[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]])
        P = project_psd(A)
        assert np.linalg.eigvalsh(P).min() >= -1e-12
        np.testing.assert_allclose(np.diag(P), 1.0)


class TestSampling:
    def test_zero_power(self):
        rng = np.random.default_rng(0)
        np.testing.assert_array_equal(sample_cir(rng, np.eye(3), 0.0), np.zeros(3))

    def test_identity_variance(self):
        rng = np.random.default_rng(1)
        draws = np.stack([sample_cir(rng, np.eye(4), 1.0) for _ in range(100_000)])
        np.testing.assert_allclose(np.mean(np.abs(draws) ** 2, axis=0), 1.0, rtol=0.05)

    def test_sample_covariance(self):
        rng = np.random.default_rng(2)
        U = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))[0]
        R = (U * np.array([2.0, 0.8, 0.2])) @ U.conj().T
        alpha = 0.5
        draws = np.stack([sample_cir(rng, R, alpha) for _ in range(100_000)])
        C = draws.T @ draws.conj() / draws.shape[0]
        assert np.linalg.norm(C - alpha * R) < 0.05


class TestCfr:
    def test_unit_tap_has_unit_modulus(self):
        h = np.zeros(4, complex)
        h[0] = 1
        np.testing.assert_allclose(np.abs(cir_to_cfr(h, 16)), 1.0)

    def test_zero(self):
        np.testing.assert_array_equal(cir_to_cfr(np.zeros(3, complex), 8), 0)

    @pytest.mark.parametrize("zero_based", [False, True])
    def test_double_loop_oracle(self, zero_based):
        rng = np.random.default_rng(3)
        K, L = 8, 4
        h = rng.standard_normal(L) + 1j * rng.standard_normal(L)
        off = 0 if zero_based else 1
        ref = np.zeros(K, complex)
        for k in range(K):
            for l in range(L):
                ref[k] += h[l] * np.exp(-2j * np.pi * (l + off) * (k + off) / K)
        np.testing.assert_allclose(cir_to_cfr(h, K, zero_based), ref, atol=1e-12)
        np.testing.assert_allclose(dft_matrix(K, L, zero_based) @ h, ref, atol=1e-12)

    @given(st.integers(1, 16), st.integers(0, 2**31))
    def test_parseval(self, L, seed):
        rng = np.random.default_rng(seed)
        h = rng.standard_normal((2, L)) + 1j * rng.standard_normal((2, L))
        w = cir_to_cfr(h, 16)
        np.testing.assert_allclose(np.mean(np.abs(w) ** 2, axis=-1), np.sum(np.abs(h) ** 2, axis=-1),
                                   rtol=1e-10)

    def test_rejects_long_channel(self):
        with pytest.raises(ValueError):
            cir_to_cfr(np.ones(9), 8)


class TestPdp:
    def test_single_tap(self):
        np.testing.assert_allclose(exponential_pdp(1), [1.0])

    def test_two_taps(self):
        assert exponential_pdp(2, 6)[0] == pytest.approx(0.54157048321679988, abs=1e-12)

    @given(st.integers(1, 256), st.floats(0.1, 50))
    def test_normalized_and_nonincreasing(self, L, decay):
        p = exponential_pdp(L, decay)
        assert abs(p.sum() - 1) < 1e-12
        assert np.all(np.diff(p) <= 0)

    def test_profile_validation(self):
        with pytest.raises(ValueError):
            PowerDelayProfile(np.array([0.5, 0.6]))
        assert np.isinf(PowerDelayProfile(np.array([1.0, 0.0])).precisions[0, 1])


class TestGenerate:
    def test_shapes_and_cfr_consistency(self):
        rng = np.random.default_rng(4)
        ch = generate_channel(rng, ArrayGeometry(2, 2), exponential_pdp(4), 16, 3)
        assert ch.H.shape == (4, 3, 4) and ch.Wf.shape == (4, 3, 16)
        np.testing.assert_allclose(ch.Wf, cir_to_cfr(ch.H, 16), atol=1e-12)

    def test_average_tap_power(self):
        rng = np.random.default_rng(5)
        pdp = exponential_pdp(4)
        acc = np.zeros(4)
        for _ in range(2000):
            acc += np.mean(np.abs(generate_channel(rng, ArrayGeometry(2, 2), pdp, 8, 1).H[:, 0]) ** 2, axis=0)
        np.testing.assert_allclose(acc / 2000, pdp, rtol=0.08)

    def test_angles_in_range(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            a = draw_angles(rng)
            assert np.pi / 6 <= a.theta_az <= 5 * np.pi / 6
            assert np.pi / 12 <= a.theta_el <= np.pi / 3

    def test_binary_round_trip(self, tmp_path):
        ch = generate_channel(np.random.default_rng(7), ArrayGeometry(2, 1), exponential_pdp(3), 8, 2)
        write_realization(tmp_path / "ch.bin", ch)
        back = read_realization(tmp_path / "ch.bin")
        np.testing.assert_allclose(back.H, ch.H, rtol=1e-6)
        np.testing.assert_allclose(back.Wf, ch.Wf, rtol=1e-6)
