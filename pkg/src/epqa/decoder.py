"""BCJR (log-MAP) decoding of the rate-1/2 RSC code.

LLRs everywhere are ``ln P(c=1) / P(c=0)``.  The coded stream is interleaved
``[u0, p0, u1, p1, ...]`` as produced by :func:`epqa.txchain.rsc_encode`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .txchain import CodeConfig

NEG_INF = -1e300


@dataclass(frozen=True)
class Trellis:
    next_state: np.ndarray  # (S, 2) int64
    parity: np.ndarray  # (S, 2) uint8
    terminated: bool

    @property
    def num_states(self) -> int:
        return self.next_state.shape[0]


def build_trellis(cfg: CodeConfig = CodeConfig()) -> Trellis:
    """State ``s`` packs the register with the most recent feedback sum as MSB."""
    fb, ff = cfg.taps()
    m = cfg.memory
    S = 1 << m
    nxt = np.zeros((S, 2), dtype=np.int64)
    par = np.zeros((S, 2), dtype=np.uint8)
    for s in range(S):
        reg = [(s >> (m - 1 - i)) & 1 for i in range(m)]  # reg[i] = delay i+1
        fsum = sum(int(fb[i + 1]) * reg[i] for i in range(m)) & 1
        psum = sum(int(ff[i + 1]) * reg[i] for i in range(m)) & 1
        for u in (0, 1):
            a = u ^ fsum
            nxt[s, u] = (a << (m - 1)) | (s >> 1)
            par[s, u] = (int(ff[0]) & a) ^ psum
    return Trellis(nxt, par, cfg.terminate)


@numba.njit(cache=True)
def _maxstar(a, b, maxlog):
    if a < b:
        a, b = b, a
    if maxlog or b <= NEG_INF:
        return a
    return a + np.log1p(np.exp(b - a))


@numba.njit(cache=True)
def _bcjr_kernel(llr, next_state, parity, terminated, maxlog):
    n = llr.size // 2
    S = next_state.shape[0]
    alpha = np.full((n + 1, S), NEG_INF)
    alpha[0, 0] = 0.0
    for k in range(n):
        ls = llr[2 * k]
        lp = llr[2 * k + 1]
        row = alpha[k + 1]
        for s in range(S):
            a = alpha[k, s]
            if a <= NEG_INF:
                continue
            for u in range(2):
                s2 = next_state[s, u]
                g = a + u * ls + parity[s, u] * lp
                row[s2] = _maxstar(row[s2], g, maxlog)
        mx = row.max()
        for s in range(S):
            row[s] -= mx
    beta = np.full(S, NEG_INF)
    if terminated:
        beta[0] = 0.0
    else:
        beta[:] = 0.0
    app = np.empty(2 * n)
    new_beta = np.empty(S)
    for k in range(n - 1, -1, -1):
        ls = llr[2 * k]
        lp = llr[2 * k + 1]
        num_u = NEG_INF
        den_u = NEG_INF
        num_p = NEG_INF
        den_p = NEG_INF
        new_beta[:] = NEG_INF
        for s in range(S):
            a = alpha[k, s]
            for u in range(2):
                s2 = next_state[s, u]
                p = parity[s, u]
                g = u * ls + p * lp + beta[s2]
                new_beta[s] = _maxstar(new_beta[s], g, maxlog)
                if a <= NEG_INF:
                    continue
                t = a + g
                if u:
                    num_u = _maxstar(num_u, t, maxlog)
                else:
                    den_u = _maxstar(den_u, t, maxlog)
                if p:
                    num_p = _maxstar(num_p, t, maxlog)
                else:
                    den_p = _maxstar(den_p, t, maxlog)
        app[2 * k] = num_u - den_u
        app[2 * k + 1] = num_p - den_p
        mx = new_beta.max()
        for s in range(S):
            beta[s] = new_beta[s] - mx
    return app


_DEFAULT_TRELLIS = None


def _default_trellis():
    global _DEFAULT_TRELLIS
    if _DEFAULT_TRELLIS is None:
        _DEFAULT_TRELLIS = build_trellis()
    return _DEFAULT_TRELLIS


def bcjr_app(llr, trellis: Trellis | None = None, maxlog: bool = False) -> np.ndarray:
    """A posteriori LLRs of every coded bit given channel LLRs ``llr``."""
    trellis = trellis or _default_trellis()
    llr = np.ascontiguousarray(llr, dtype=np.float64)
    if llr.ndim != 1 or llr.size % 2 or llr.size == 0:
        raise ValueError("expected a non-empty even-length LLR vector")
    m = int(np.log2(trellis.num_states))
    if trellis.terminated and llr.size // 2 <= m:
        raise ValueError("LLR block shorter than the termination tail")
    return _bcjr_kernel(llr, trellis.next_state, trellis.parity, trellis.terminated, maxlog)


def bcjr_decode(llr, trellis: Trellis | None = None, maxlog: bool = False, clamp: float = 50.0):
    """Return ``(lambda_a, info_hat)``.

    ``lambda_a`` is the APP minus the input LLR for every coded bit (the
    a priori information fed back to the detector).  ``info_hat`` is the hard
    decision on the information bits (tail excluded).
    """
    trellis = trellis or _default_trellis()
    llr = np.asarray(llr, dtype=np.float64)
    app = bcjr_app(llr, trellis, maxlog)
    n_steps = llr.size // 2
    n_info = n_steps - (int(np.log2(trellis.num_states)) if trellis.terminated else 0)
    info_hat = (app[0 : 2 * n_info : 2] > 0).astype(np.uint8)
    lam = np.clip(app - llr, -clamp, clamp)
    return lam, info_hat
