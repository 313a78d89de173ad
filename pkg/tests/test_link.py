import numpy as np
import pytest

from epqa.link import (
    RxObservation,
    ebn0_offset_db,
    ebn0_to_symbol_noise,
    noiseless_rx,
    spectral_efficiency,
    synthesize_rx,
)
from epqa.txchain import FrameConfig


def crand(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestReceive:
    def test_triple_loop_oracle(self):
        rng = np.random.default_rng(0)
        T, M, N, K = 2, 3, 2, 5
        Wf, x = crand(rng, M, N, K), crand(rng, T, N, K)
        ref = np.zeros((T, M, K), complex)
        for t in range(T):
            for m in range(M):
                for k in range(K):
                    for n in range(N):
                        ref[t, m, k] += Wf[m, n, k] * x[t, n, k]
        np.testing.assert_allclose(noiseless_rx(Wf, x), ref, atol=1e-12)

    def test_single_user_unit_pilot(self):
        rng = np.random.default_rng(1)
        Wf = crand(rng, 4, 1, 8)
        y = noiseless_rx(Wf, np.ones((1, 1, 8)))
        np.testing.assert_allclose(y[0], Wf[:, 0])

    def test_superposition(self):
        rng = np.random.default_rng(2)
        Wf, x1, x2 = crand(rng, 2, 2, 4), crand(rng, 1, 2, 4), crand(rng, 1, 2, 4)
        np.testing.assert_allclose(noiseless_rx(Wf, x1 + 2 * x2),
                                   noiseless_rx(Wf, x1) + 2 * noiseless_rx(Wf, x2), atol=1e-12)

    def test_noise_variance(self):
        rng = np.random.default_rng(3)
        obs = synthesize_rx(np.zeros((10, 1, 1000)), np.zeros((100, 1, 1000)), 0.3, rng)
        assert abs(np.var(obs.y) - 0.3) / 0.3 < 0.02

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            noiseless_rx(np.zeros((2, 2, 4)), np.zeros((1, 3, 4)))

    def test_nonpositive_noise(self):
        with pytest.raises(ValueError):
            RxObservation(np.zeros((1, 1, 1)), 0.0)


class TestSnr:
    def test_efficiency_full_scale_config(self):
        cfg = FrameConfig(T=8, N=8, K=128, Kp=16, L_cp=16)
        assert spectral_efficiency(cfg) == pytest.approx(0.778, abs=5e-4)

    def test_efficiency_no_overhead(self):
        assert spectral_efficiency(FrameConfig(T=2, N=2, K=16, Kp=0, L_cp=0)) == 1.0

    def test_efficiency_single_user(self):
        cfg = FrameConfig(T=1, N=1, K=64, Kp=8, L_cp=8, Q=2)
        assert spectral_efficiency(cfg) == pytest.approx(56 / 72)

    def test_offset(self):
        assert ebn0_offset_db(64, 0.778, 0.5, 8, 4) == pytest.approx(10 * np.log10(64 / 12.448), abs=1e-9)
        assert ebn0_offset_db(64, 0.778, 0.5, 8, 4) == pytest.approx(7.11, abs=5e-3)
        assert ebn0_offset_db(4, 1.0, 0.5, 4, 2) == 0.0
        diff = ebn0_offset_db(128, 0.778, 0.5, 8, 4) - ebn0_offset_db(64, 0.778, 0.5, 8, 4)
        assert diff == pytest.approx(3.0103, abs=1e-4)

    def test_noise_from_ebn0(self):
        cfg = FrameConfig(T=4, N=4, K=64, Kp=8, L_cp=8, Q=2)
        eta = spectral_efficiency(cfg)
        esn0 = 10 - 10 * np.log10(8 / (eta * 0.5 * 4 * 2))
        assert ebn0_to_symbol_noise(10.0, cfg, 8) == pytest.approx(4 / 10 ** (esn0 / 10))
