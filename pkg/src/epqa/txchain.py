"""Transmit chain: RSC encoding, interleaving, Gray QAM mapping and framing.

Gray labeling (per axis reflected Gray code, I bits first, MSB first)::

    bits per axis   level index i   amplitude (before scaling)
    label gray(i)   0 .. 2^q - 1    2^q - 1 - 2 i

so for QPSK the label ``0`` maps to +1 and ``1`` to -1 on each axis, and
``00 -> (1 + 1j) / sqrt(2)``.  For 16QAM the axis labels ``00, 01, 11, 10``
map to ``+3, +1, -1, -3``.  Points are scaled to unit average energy.

Pilots: every pilot lives in the OFDM symbol ``t = 0`` (``pilot_symbol``).
User ``n`` (0-based) uses subcarriers ``n, n + S, n + 2S, ...`` with
``S = K / K_p`` and all other users send zero there.  Pilot values are unit
modulus QPSK drawn from ``pilot_seed``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


class ConfigError(ValueError):
    """Inconsistent or infeasible configuration."""


@dataclass(frozen=True)
class CodeConfig:
    """Rate-1/2 recursive systematic convolutional code.

    ``feedback`` and ``feedforward`` are octal generator polynomials whose
    most significant bit is the coefficient of the current register input.
    """

    feedback: int = 0o117
    feedforward: int = 0o155
    terminate: bool = True

    def __post_init__(self):
        if self.feedback <= 0 or self.feedforward <= 0:
            raise ConfigError("generator polynomials must be nonzero")
        if not self.feedback >> (self.constraint_length - 1) & 1:
            raise ConfigError("feedback polynomial needs a nonzero leading tap")

    @property
    def constraint_length(self) -> int:
        return max(self.feedback.bit_length(), self.feedforward.bit_length())

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def rate(self) -> float:
        return 0.5

    def taps(self):
        """Tap vectors (index = delay) of feedback and feedforward polynomials."""
        K = self.constraint_length
        fb = np.array([(self.feedback >> (K - 1 - i)) & 1 for i in range(K)], dtype=np.uint8)
        ff = np.array([(self.feedforward >> (K - 1 - i)) & 1 for i in range(K)], dtype=np.uint8)
        return fb, ff

    def info_length(self, num_coded: int) -> int:
        """Information bits that fill ``num_coded`` coded bits."""
        if num_coded % 2:
            raise ConfigError("coded length must be even for a rate-1/2 code")
        n = num_coded // 2 - (self.memory if self.terminate else 0)
        if n < 1:
            raise ConfigError("frame too short to carry any information bit")
        return n


def rsc_encode(bits, cfg: CodeConfig = CodeConfig()) -> np.ndarray:
    """Encode to ``[u0, p0, u1, p1, ...]``; appends a zero-forcing tail when terminating."""
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        raise ValueError("nothing to encode")
    fb, ff = cfg.taps()
    m = cfg.memory
    reg = np.zeros(m, dtype=np.uint8)  # reg[i-1] holds the feedback sum delayed by i
    n_tail = m if cfg.terminate else 0
    out = np.empty(2 * (bits.size + n_tail), dtype=np.uint8)
    for k in range(bits.size + n_tail):
        fsum = int(np.dot(fb[1:], reg) & 1)
        u = int(bits[k]) if k < bits.size else fsum  # tail input drives the state to zero
        a = u ^ fsum
        p = (ff[0] & a) ^ (int(np.dot(ff[1:], reg)) & 1)
        out[2 * k] = u
        out[2 * k + 1] = p
        reg[1:] = reg[:-1]
        reg[0] = a
    return out


def interleaver_permutation(length: int, seed) -> np.ndarray:
    return np.random.default_rng(seed).permutation(length)


def interleave(bits, seed) -> np.ndarray:
    bits = np.asarray(bits)
    return bits[interleaver_permutation(bits.shape[-1], seed)]


def deinterleave(values, seed) -> np.ndarray:
    values = np.asarray(values)
    out = np.empty_like(values)
    out[..., interleaver_permutation(values.shape[-1], seed)] = values
    return out


@dataclass(frozen=True)
class Constellation:
    points: np.ndarray  # (2^Q,) complex, indexed by label value (MSB first)
    labels: np.ndarray  # (2^Q, Q) uint8

    @property
    def bits_per_symbol(self) -> int:
        return self.labels.shape[1]

    @property
    def size(self) -> int:
        return self.points.size


def _axis_levels(q: int) -> np.ndarray:
    """Amplitude for every q-bit axis label (label value -> amplitude)."""
    n = 1 << q
    amp = np.empty(n)
    for i in range(n):
        amp[i ^ (i >> 1)] = n - 1 - 2 * i
    return amp


def qam_constellation(Q: int) -> Constellation:
    if Q not in (2, 4, 6):
        raise ConfigError(f"unsupported bits per symbol Q={Q} (expected 2, 4 or 6)")
    q = Q // 2
    amp = _axis_levels(q)
    size = 1 << Q
    labels = ((np.arange(size)[:, None] >> np.arange(Q - 1, -1, -1)) & 1).astype(np.uint8)
    idx = np.arange(size)
    points = amp[idx >> q] + 1j * amp[idx & ((1 << q) - 1)]
    points = points / np.sqrt(np.mean(np.abs(points) ** 2))
    return Constellation(points=points, labels=labels)


def gray_map(bits, const: Constellation) -> np.ndarray:
    """Map a bit array (last axis a multiple of Q) to symbols."""
    bits = np.asarray(bits, dtype=np.int64)
    Q = const.bits_per_symbol
    if bits.shape[-1] % Q:
        raise ConfigError(f"bit count {bits.shape[-1]} is not a multiple of Q={Q}")
    grouped = bits.reshape(bits.shape[:-1] + (-1, Q))
    index = grouped @ (1 << np.arange(Q - 1, -1, -1))
    return const.points[index]


@dataclass(frozen=True)
class FrameConfig:
    T: int = 8
    N: int = 8
    K: int = 128
    Kp: int = 16
    L_cp: int = 16
    Q: int = 4
    pilot_symbol: int = 0
    pilot_seed: int = 0
    L: int | None = None  # channel length, only used for a sanity warning

    def __post_init__(self):
        if min(self.T, self.N, self.K) < 1 or self.Kp < 0 or self.L_cp < 0:
            raise ConfigError("T, N, K must be positive and Kp, L_cp non-negative")
        if self.N * self.Kp > self.K:
            raise ConfigError(f"N*Kp = {self.N * self.Kp} exceeds K = {self.K}")
        if self.Kp and self.K % self.Kp:
            raise ConfigError("uniform pilot spacing needs Kp to divide K")
        if not 0 <= self.pilot_symbol < self.T:
            raise ConfigError("pilot symbol index out of range")
        if self.Q not in (2, 4, 6):
            raise ConfigError(f"unsupported bits per symbol Q={self.Q}")
        if self.L is not None and self.Kp < self.L:
            warnings.warn(f"Kp={self.Kp} < L={self.L}: pilot-only estimation is underdetermined")

    @property
    def num_data(self) -> int:
        """Data symbols per user per frame."""
        return self.T * self.K - self.N * self.Kp

    @property
    def num_coded(self) -> int:
        return self.Q * self.num_data


@dataclass(frozen=True)
class PilotPattern:
    t: int
    subcarriers: np.ndarray  # (N, Kp) subcarrier indices
    values: np.ndarray  # (N, Kp) complex, unit modulus


def build_pilot_pattern(cfg: FrameConfig) -> PilotPattern:
    N, Kp = cfg.N, cfg.Kp
    if Kp == 0:
        return PilotPattern(cfg.pilot_symbol, np.zeros((N, 0), int), np.zeros((N, 0), complex))
    spacing = cfg.K // Kp
    if N > spacing:
        raise ConfigError(f"{N} users do not fit a pilot grid of spacing {spacing}")
    sc = np.arange(N)[:, None] + spacing * np.arange(Kp)[None, :]
    rng = np.random.default_rng(cfg.pilot_seed)
    qpsk = rng.integers(0, 2, size=(N, Kp, 2)) * 2 - 1
    values = (qpsk[..., 0] + 1j * qpsk[..., 1]) / np.sqrt(2)
    return PilotPattern(cfg.pilot_symbol, sc, values)


def data_positions(cfg: FrameConfig, pilots: PilotPattern | None = None):
    """``(t, k)`` index arrays of the data grid, in t-major order."""
    pilots = pilots or build_pilot_pattern(cfg)
    used = np.zeros((cfg.T, cfg.K), dtype=bool)
    used[pilots.t, pilots.subcarriers.ravel()] = True
    t, k = np.nonzero(~used)
    return t, k


@dataclass
class Frame:
    cfg: FrameConfig
    info_bits: np.ndarray  # (N, n_info)
    coded_bits: np.ndarray  # (N, n_coded), encoder output before interleaving
    x: np.ndarray  # (T, N, K)
    pilot_mask: np.ndarray  # (T, N, K)
    data_t: np.ndarray  # (J,)
    data_k: np.ndarray  # (J,)
    pilots: PilotPattern
    interleaver_seeds: tuple

    @property
    def data_symbols(self) -> np.ndarray:
        return self.x[self.data_t, :, self.data_k].T  # (N, J)


def assemble_frame(mapped_bits, cfg: FrameConfig, const: Constellation | None = None,
                   pilots: PilotPattern | None = None):
    """Place per-user interleaved coded bits and pilots into the (T, N, K) grid.

    Returns ``(x, pilot_mask, data_t, data_k)``.
    """
    const = const or qam_constellation(cfg.Q)
    pilots = pilots or build_pilot_pattern(cfg)
    mapped_bits = np.asarray(mapped_bits)
    if mapped_bits.ndim != 2 or mapped_bits.shape[0] != cfg.N:
        raise ConfigError("expected one bit row per user")
    dt, dk = data_positions(cfg, pilots)
    if mapped_bits.shape[1] != cfg.Q * dt.size:
        raise ConfigError(
            f"got {mapped_bits.shape[1]} coded bits per user, frame holds {cfg.Q * dt.size}"
        )
    x = np.zeros((cfg.T, cfg.N, cfg.K), dtype=complex)
    mask = np.zeros((cfg.T, cfg.N, cfg.K), dtype=bool)
    for n in range(cfg.N):
        x[pilots.t, n, pilots.subcarriers[n]] = pilots.values[n]
        mask[pilots.t, n, pilots.subcarriers[n]] = True
    if dt.size:
        x[dt, :, dk] = gray_map(mapped_bits, const).T
    return x, mask, dt, dk


def make_frame(rng: np.random.Generator, cfg: FrameConfig, code: CodeConfig = CodeConfig(),
               interleaver_seeds=None) -> Frame:
    """Random information bits through encoder, interleaver, mapper and framer."""
    pilots = build_pilot_pattern(cfg)
    n_info = code.info_length(cfg.num_coded)
    info = rng.integers(0, 2, size=(cfg.N, n_info), dtype=np.uint8)
    coded = np.stack([rsc_encode(b, code) for b in info])
    if interleaver_seeds is None:
        interleaver_seeds = tuple(int(s) for s in rng.integers(0, 2**31, size=cfg.N))
    mapped = np.stack([interleave(c, s) for c, s in zip(coded, interleaver_seeds)])
    x, mask, dt, dk = assemble_frame(mapped, cfg, pilots=pilots)
    return Frame(cfg, info, coded, x, mask, dt, dk, pilots, tuple(interleaver_seeds))
