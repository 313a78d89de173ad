"""Frequency-domain received signal and SNR bookkeeping.

Noise normalization: every user sends unit-energy symbols and every CFR
entry has unit average power, so the average received energy per antenna
and subcarrier (summed over the N users) is ``Es = N``.  The noise variance
is therefore ``sigma2 = N / (Es/N0)`` with ``Es/N0`` obtained from ``Eb/N0``
through the rate/overhead/antenna offset ``10 log10(M / (eta R N Q))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import crandn
from .txchain import ConfigError, FrameConfig


@dataclass
class RxObservation:
    y: np.ndarray  # (T, M, K)
    noise_var: float

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")


def noiseless_rx(Wf: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``y[t, m, k] = sum_n Wf[m, n, k] x[t, n, k]``."""
    if Wf.shape[1:] != x.shape[1:]:
        raise ValueError(f"shape mismatch: Wf {Wf.shape} vs x {x.shape}")
    return np.einsum("mnk,tnk->tmk", Wf, x)


def synthesize_rx(Wf: np.ndarray, x: np.ndarray, noise_var: float,
                  rng: np.random.Generator) -> RxObservation:
    y = noiseless_rx(Wf, x)
    y = y + crandn(rng, y.shape, noise_var)
    return RxObservation(y=y, noise_var=float(noise_var))


def spectral_efficiency(cfg: FrameConfig, L_cp: int | None = None) -> float:
    """``(T N K - N^2 K_p) / (T N (L_cp + K))``."""
    L_cp = cfg.L_cp if L_cp is None else L_cp
    T, N, K, Kp = cfg.T, cfg.N, cfg.K, cfg.Kp
    return (T * N * K - N * N * Kp) / (T * N * (L_cp + K))


def ebn0_offset_db(M: int, eta: float, R: float, N: int, Q: int) -> float:
    """``Eb/N0 - Es/N0`` in dB."""
    if min(M, eta, R, N, Q) <= 0:
        raise ConfigError("offset parameters must be positive")
    return 10 * np.log10(M / (eta * R * N * Q))


def ebn0_to_symbol_noise(ebn0_db: float, cfg: FrameConfig, M: int, R: float = 0.5,
                         eta: float | None = None) -> float:
    eta = spectral_efficiency(cfg) if eta is None else eta
    esn0_db = ebn0_db - ebn0_offset_db(M, eta, R, cfg.N, cfg.Q)
    return cfg.N / 10 ** (esn0_db / 10)
