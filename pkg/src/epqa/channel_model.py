"""3D spatially correlated frequency-selective channels for a UPA base station.

Receive correlation follows the Kronecker model: for every (user, tap) the
M-antenna gain vector is ``R^{1/2} g`` with ``R = R_az (x) R_el`` and
``g ~ CN(0, alpha * I)``.  Antenna index ``m = w * D + d`` (azimuth column
outer, elevation row inner), matching the Kronecker ordering.

Tap/subcarrier convention: by default taps occupy delays ``1..L`` and
subcarriers are numbered ``1..K``, i.e. ``w_k = sum_l h_l exp(-j 2 pi l k / K)``
with both indices 1-based.  Pass ``zero_based=True`` for the usual
``0..L-1`` / ``0..K-1`` DFT convention.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array with ``rows`` x ``cols`` elements.

    Spacings are expressed in wavelengths; ``wavelength`` only scales the
    physical spacing and cancels in the correlation formulas.
    """

    rows: int = 1
    cols: int = 1
    d_el: float = 1.0
    d_az: float = 1.0
    wavelength: float = 1.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array needs at least one row and one column")
        if self.d_el <= 0 or self.d_az <= 0 or self.wavelength <= 0:
            raise ValueError("spacings and wavelength must be positive")

    @property
    def num_antennas(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class PathAngles:
    """Mean AoDs (rad) and AoD variances (rad^2) of one (user, tap) cluster."""

    theta_az: float
    theta_el: float
    var_az: float
    var_el: float

    def __post_init__(self):
        if self.var_az < 0 or self.var_el < 0:
            raise ValueError("angle variances must be non-negative")


@dataclass(frozen=True)
class PowerDelayProfile:
    powers: np.ndarray  # (N, L), rows sum to one

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.powers, dtype=float))
        if np.any(p < 0):
            raise ValueError("tap powers must be non-negative")
        if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=1e-12):
            raise ValueError("tap powers must sum to one per user")
        object.__setattr__(self, "powers", p)

    @property
    def precisions(self) -> np.ndarray:
        """Inverse tap powers (``inf`` where a tap carries no power)."""
        with np.errstate(divide="ignore"):
            return 1.0 / self.powers


@dataclass
class ChannelRealization:
    H: np.ndarray  # (M, N, L) CIR taps
    Wf: np.ndarray  # (M, N, K) CFR
    angles: list = field(default_factory=list)


def azimuth_correlation(geom: ArrayGeometry, ang: PathAngles, w: int, w2: int) -> complex:
    """Entry ``[R_az]_{w, w2}`` for 1-based column indices."""
    sep = (w2 - w) * geom.d_az  # wavelengths
    a = 2 * np.pi * sep * np.sqrt(ang.var_el) * np.cos(ang.theta_el)
    b = ang.var_az * a**2 * np.sin(ang.theta_az) ** 2 + 1.0
    c = 2 * np.pi * sep * np.sin(ang.theta_el)
    num = (
        a**2 * np.cos(ang.theta_az) ** 2
        - 2j * c * np.cos(ang.theta_az)
        + ang.var_az * (c * np.sin(ang.theta_az)) ** 2
    )
    return complex(np.exp(-num / (2 * b)) / np.sqrt(b))


def elevation_correlation(geom: ArrayGeometry, ang: PathAngles, d: int, d2: int) -> complex:
    """Entry ``[R_el]_{d, d2}`` for 1-based row indices."""
    lam = geom.wavelength
    sep = (d2 - d) * geom.d_el * lam  # physical spacing
    arg = 1j * np.pi * lam * sep * np.cos(ang.theta_el) - ang.var_el * (
        np.pi * sep * np.sin(ang.theta_el)
    ) ** 2
    return complex(np.exp(2 * arg / lam**2))


def _azimuth_matrix(geom, ang):
    W = geom.cols
    return np.array(
        [[azimuth_correlation(geom, ang, i, j) for j in range(1, W + 1)] for i in range(1, W + 1)]
    )


def _elevation_matrix(geom, ang):
    D = geom.rows
    return np.array(
        [[elevation_correlation(geom, ang, i, j) for j in range(1, D + 1)] for i in range(1, D + 1)]
    )


def project_psd(R: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues and rescale back to a unit diagonal."""
    R = 0.5 * (R + R.conj().T)
    lam, U = np.linalg.eigh(R)
    if lam.min() >= 0:
        return R
    R = (U * np.clip(lam, 0, None)) @ U.conj().T
    d = np.sqrt(np.clip(np.real(np.diag(R)), 1e-300, None))
    R = R / np.outer(d, d)
    return 0.5 * (R + R.conj().T)


def build_receive_correlation(geom: ArrayGeometry, ang: PathAngles) -> np.ndarray:
    R = np.kron(_azimuth_matrix(geom, ang), _elevation_matrix(geom, ang))
    return project_psd(R)


def sqrtm_psd(R: np.ndarray) -> np.ndarray:
    lam, U = np.linalg.eigh(0.5 * (R + R.conj().T))
    return (U * np.sqrt(np.clip(lam, 0, None))) @ U.conj().T


def crandn(rng: np.random.Generator, shape, var=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    s = np.sqrt(np.asarray(var) / 2)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_cir(rng: np.random.Generator, R: np.ndarray, power: float, sqrt_R=None) -> np.ndarray:
    """One correlated tap vector ``R^{1/2} g`` with ``g ~ CN(0, power I)``."""
    M = R.shape[0]
    if power == 0:
        return np.zeros(M, dtype=complex)
    if sqrt_R is None:
        sqrt_R = sqrtm_psd(R)
    return sqrt_R @ crandn(rng, M, power)


def dft_matrix(K: int, L: int, zero_based: bool = False) -> np.ndarray:
    """``Phi[k, l] = exp(-j 2 pi l k / K)`` (K x L)."""
    off = 0 if zero_based else 1
    k = np.arange(K)[:, None] + off
    l = np.arange(L)[None, :] + off
    return np.exp(-2j * np.pi * ((k * l) % K) / K)


def cir_to_cfr(h: np.ndarray, K: int, zero_based: bool = False) -> np.ndarray:
    """CFR over ``K`` subcarriers for taps along the last axis of ``h``."""
    h = np.asarray(h)
    L = h.shape[-1]
    if L > K:
        raise ValueError(f"tap count {L} exceeds subcarrier count {K}")
    buf = np.zeros(h.shape[:-1] + (K,), dtype=complex)
    off = 0 if zero_based else 1
    buf[..., (np.arange(L) + off) % K] = h
    w = np.fft.fft(buf, axis=-1)
    return w if zero_based else np.roll(w, -1, axis=-1)


def exponential_pdp(L: int, decay: float = 6.0) -> np.ndarray:
    if L < 1 or decay <= 0:
        raise ValueError("need L >= 1 and decay > 0")
    p = np.exp(-np.arange(1, L + 1) / decay)
    return p / p.sum()


def draw_angles(rng: np.random.Generator) -> PathAngles:
    """One cluster with the experiment's uniform AoD ranges."""
    theta_az = rng.uniform(np.pi / 6, 5 * np.pi / 6)
    theta_el = rng.uniform(np.pi / 12, np.pi / 3)
    std_az = rng.uniform(np.pi / 12, np.pi / 6)
    std_el = rng.uniform(np.pi / 12, np.pi / 6)
    return PathAngles(theta_az, theta_el, std_az**2, std_el**2)


def generate_channel(
    rng: np.random.Generator,
    geom: ArrayGeometry,
    pdp: np.ndarray,
    K: int,
    num_users: int | None = None,
    *,
    per_tap_angles: bool = False,
    zero_based: bool = False,
) -> ChannelRealization:
    """Draw a full (M, N, L) CIR and its CFR.

    ``pdp`` holds tap powers, either (N, L) or a single (L,) profile shared by
    ``num_users`` users.  One angle set per user is reused over all taps
    unless ``per_tap_angles`` is set.
    """
    pdp = np.atleast_2d(np.asarray(pdp, dtype=float))
    N = num_users if num_users is not None else pdp.shape[0]
    L = pdp.shape[1]
    pdp = np.broadcast_to(pdp, (N, L))
    M = geom.num_antennas
    H = np.zeros((M, N, L), dtype=complex)
    angles = []
    for n in range(N):
        user_angles = []
        for l in range(L):
            if l == 0 or per_tap_angles:
                ang = draw_angles(rng)
                R = build_receive_correlation(geom, ang)
                sq = sqrtm_psd(R)
                user_angles.append(ang)
            H[:, n, l] = sample_cir(rng, R, pdp[n, l], sqrt_R=sq)
        angles.append(user_angles)
    return ChannelRealization(H=H, Wf=cir_to_cfr(H, K, zero_based), angles=angles)


def write_realization(path, ch: ChannelRealization) -> None:
    """Flat binary record: ``<IIII`` header (M, N, L, K) then complex64 H, Wf."""
    M, N, L = ch.H.shape
    K = ch.Wf.shape[2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<IIII", M, N, L, K))
        fh.write(np.ascontiguousarray(ch.H, dtype="<c8").tobytes())
        fh.write(np.ascontiguousarray(ch.Wf, dtype="<c8").tobytes())


def read_realization(path) -> ChannelRealization:
    with open(path, "rb") as fh:
        M, N, L, K = struct.unpack("<IIII", fh.read(16))
        H = np.frombuffer(fh.read(8 * M * N * L), dtype="<c8").reshape(M, N, L)
        Wf = np.frombuffer(fh.read(8 * M * N * K), dtype="<c8").reshape(M, N, K)
    return ChannelRealization(H=H.astype(complex), Wf=Wf.astype(complex))


def write_realization_csv(path, ch: ChannelRealization) -> None:
    M, N, L = ch.H.shape
    with open(path, "w") as fh:
        fh.write("kind,m,n,index,re,im\n")
        for name, arr in (("h", ch.H), ("w", ch.Wf)):
            for (m, n, i), v in np.ndenumerate(arr):
                fh.write(f"{name},{m},{n},{i},{v.real:.9g},{v.imag:.9g}\n")
