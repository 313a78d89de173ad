import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epqa.decoder import bcjr_app, bcjr_decode, build_trellis
from epqa.txchain import CodeConfig, rsc_encode


def codebook(n_info, cfg=CodeConfig()):
    return np.array([rsc_encode(np.array(b), cfg) for b in itertools.product([0, 1], repeat=n_info)])


def exhaustive_app(llr, cws):
    """Exact APP LLRs by summing over the whole codebook."""
    metric = (cws.astype(float) * llr).sum(axis=1)  # log-likelihood up to a constant
    out = np.empty(llr.size)
    for i in range(llr.size):
        one = cws[:, i] == 1
        out[i] = np.logaddexp.reduce(metric[one]) - np.logaddexp.reduce(metric[~one])
    return out


class TestTrellis:
    def test_matches_encoder(self):
        tr = build_trellis()
        rng = np.random.default_rng(0)
        bits = rng.integers(0, 2, 50)
        out = rsc_encode(bits, CodeConfig(terminate=False))
        s = 0
        for k, u in enumerate(bits):
            assert tr.parity[s, u] == out[2 * k + 1]
            s = tr.next_state[s, u]

    def test_tail_returns_to_zero(self):
        tr = build_trellis()
        out = rsc_encode(np.random.default_rng(1).integers(0, 2, 20))
        s = 0
        for u in out[0::2]:
            s = tr.next_state[s, u]
        assert s == 0


class TestBcjr:
    cws = codebook(8)

    def test_exhaustive_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            llr = rng.normal(0, 3, self.cws.shape[1])
            np.testing.assert_allclose(bcjr_app(llr), exhaustive_app(llr, self.cws), atol=1e-9)

    def test_unterminated(self):
        cfg = CodeConfig(terminate=False)
        cws = codebook(6, cfg)
        llr = np.random.default_rng(3).normal(0, 2, cws.shape[1])
        np.testing.assert_allclose(bcjr_app(llr, build_trellis(cfg)), exhaustive_app(llr, cws), atol=1e-9)

    def test_maxlog_sign_agreement_at_high_snr(self):
        rng = np.random.default_rng(4)
        c = self.cws[77].astype(int)
        llr = (2 * c - 1) * 6.0 + rng.normal(0, 1, c.size)
        np.testing.assert_array_equal(bcjr_app(llr, maxlog=True) > 0, bcjr_app(llr) > 0)

    @settings(deadline=None, max_examples=20)
    @given(st.integers(0, 2**31), st.integers(7, 300))
    def test_noiseless_decode(self, seed, n):
        bits = np.random.default_rng(seed).integers(0, 2, n)
        c = rsc_encode(bits).astype(int)
        lam, bh = bcjr_decode((2 * c - 1) * 10.0)
        np.testing.assert_array_equal(bh, bits)
        assert np.all(np.abs(lam) <= 50)

    def test_extrinsic_is_app_minus_input(self):
        llr = np.random.default_rng(5).normal(0, 1, self.cws.shape[1])
        lam, _ = bcjr_decode(llr)
        np.testing.assert_allclose(lam, bcjr_app(llr) - llr, atol=1e-12)

    def test_zero_input_terminated(self):
        app = bcjr_app(np.zeros(2 * 14))
        np.testing.assert_allclose(app[0:16:2], 0, atol=1e-12)

    @pytest.mark.parametrize("bad", [np.zeros(3), np.zeros(0), np.zeros(10)])
    def test_bad_lengths(self, bad):
        with pytest.raises(ValueError):
            bcjr_app(bad)
