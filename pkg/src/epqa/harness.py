"""Turbo receiver orchestration, Monte Carlo trials, metrics and FLOP counts.

Schedule of turbo iteration ``i`` (serial form of the flooding schedule):

1. channel estimation: GMP over pilot messages plus the data-aided ``f -> w``
   messages produced at the end of iteration ``i-1`` (none at ``i = 1``);
   ``inner_first`` sweeps at ``i = 1``, ``inner_later`` afterwards.  The CIR
   estimate recorded for iteration ``i`` is the one after this step.
2. detection with the fresh ``w -> f`` messages and ``x -> f`` from ``i-1``,
   extrinsic LLRs, deinterleaving, BCJR, new a priori LLRs.
3. symbol beliefs and ``x -> f`` from the new prior; then the ``f -> w``
   messages for the next channel-estimation step.
"""

from __future__ import annotations

import csv
import io
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import channel_estimator as ce
from . import ep_detector as ep
from .channel_model import ArrayGeometry, exponential_pdp, generate_channel
from .decoder import bcjr_decode, build_trellis
from .link import RxObservation, ebn0_to_symbol_noise, synthesize_rx
from .messages import GaussianMsg
from .txchain import (CodeConfig, ConfigError, Frame, FrameConfig, deinterleave, interleave,
                      make_frame, qam_constellation)

VARIANTS = ("EP-QA-L", "EP-QA", "BP-GA", "MFB-PCSI")
FLOP_ALGORITHMS = ("EP-QA-L", "EP-QA", "BP-GA", "BP-MF", "BP-MF-M")
CSV_COLUMNS = ("variant", "eb_n0_db", "turbo_iter", "nmse", "ber", "frames", "bits", "seed")


@dataclass
class SimConfig:
    rows: int = 4  # UPA elevation rows D
    cols: int = 2  # UPA azimuth columns W
    d_el: float = 1.0  # spacings in wavelengths
    d_az: float = 1.0
    N: int = 4
    K: int = 64
    L: int = 8
    Kp: int = 8
    T: int = 4
    L_cp: int = 8
    Q: int = 2
    pdp_decay: float = 6.0
    ebn0_db: list = field(default_factory=lambda: [4.0, 6.0, 8.0, 10.0])
    iterations: int = 8
    inner_first: int = 5
    inner_later: int = 1
    variants: list = field(default_factory=lambda: ["EP-QA-L", "EP-QA", "MFB-PCSI"])
    trials: int = 100
    seed: int = 2024
    gmp_variant: str = "gamp"
    maxlog: bool = False
    per_tap_angles: bool = False
    zero_based: bool = False
    pilot_seed: int = 0

    def __post_init__(self):
        self.ebn0_db = [float(v) for v in np.atleast_1d(self.ebn0_db)]
        self.variants = [self.variants] if isinstance(self.variants, str) else list(self.variants)
        if not self.ebn0_db:
            raise ConfigError("Eb/N0 grid is empty")
        if not self.variants:
            raise ConfigError("no receiver variant selected")
        for v in self.variants:
            if v not in VARIANTS:
                raise ConfigError(f"unknown receiver variant {v!r}")
        if self.trials < 1 or self.iterations < 1:
            raise ConfigError("trials and iterations must be at least 1")
        if self.inner_first < 1 or self.inner_later < 0:
            raise ConfigError("invalid inner GMP schedule")
        if self.L < 1 or self.L > self.K:
            raise ConfigError("need 1 <= L <= K")
        if self.gmp_variant not in ce.VARIANTS:
            raise ConfigError(f"unknown GMP variant {self.gmp_variant!r}")
        self.frame_config()  # validates the frame geometry
        ArrayGeometry(self.rows, self.cols, self.d_el, self.d_az)

    @property
    def M(self) -> int:
        return self.rows * self.cols

    def frame_config(self) -> FrameConfig:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return FrameConfig(T=self.T, N=self.N, K=self.K, Kp=self.Kp, L_cp=self.L_cp, Q=self.Q,
                               pilot_seed=self.pilot_seed, L=self.L)

    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.rows, self.cols, self.d_el, self.d_az)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationSnapshot:
    info_hat: np.ndarray  # (N, n_info)
    h_hat: np.ndarray | None  # (M, N, L), None for the genie bound


@dataclass
class MetricRecord:
    variant: str
    eb_n0_db: float
    turbo_iter: int
    nmse: float
    ber: float
    frames: int
    bits: int
    seed: int
    elapsed: float = 0.0

    def row(self) -> list:
        return [self.variant, f"{self.eb_n0_db:g}", self.turbo_iter, f"{self.nmse:.10e}",
                f"{self.ber:.10e}", self.frames, self.bits, self.seed]


# ---------------------------------------------------------------- metrics


def nmse(H_true, H_hat) -> float:
    """Mean over links ``(m, n)`` of ``sum_l |h - h_hat|^2 / sum_l |h|^2``."""
    H_true = np.asarray(H_true)
    H_hat = np.asarray(H_hat)
    if H_true.shape != H_hat.shape:
        raise ValueError("shape mismatch")
    energy = np.sum(np.abs(H_true) ** 2, axis=-1)
    err = np.sum(np.abs(H_true - H_hat) ** 2, axis=-1)
    ok = energy > 0
    if not np.all(ok):
        warnings.warn(f"{np.count_nonzero(~ok)} zero-energy links excluded from NMSE")
        if not np.any(ok):
            return float("nan")
    return float(np.mean(err[ok] / energy[ok]))


def ber(bits, bits_hat) -> float:
    bits = np.asarray(bits)
    bits_hat = np.asarray(bits_hat)
    if bits.shape != bits_hat.shape:
        raise ValueError("length mismatch")
    return float(np.count_nonzero(bits != bits_hat)) / bits.size


# ---------------------------------------------------------------- receivers


def _decode_users(llr_e, frame: Frame, trellis, maxlog):
    """Per-user deinterleave, BCJR and re-interleave.  ``llr_e`` is ``(N, J, Q)``."""
    N, J, Q = llr_e.shape
    llr_a = np.empty_like(llr_e)
    info_hat = []
    for n in range(N):
        seed = frame.interleaver_seeds[n]
        lam, bh = bcjr_decode(deinterleave(llr_e[n].ravel(), seed), trellis, maxlog)
        llr_a[n] = interleave(lam, seed).reshape(J, Q)
        info_hat.append(bh)
    return llr_a, np.stack(info_hat)


def _data_obs(frame: Frame, obs: RxObservation):
    return obs.y[frame.data_t, :, frame.data_k].T  # (M, J)


def run_turbo_receiver(frame: Frame, obs: RxObservation, cfg: SimConfig, variant: str = "EP-QA-L",
                       true_power=None, code: CodeConfig = CodeConfig()) -> list[IterationSnapshot]:
    """Joint channel estimation, detection and decoding; one snapshot per turbo iteration."""
    if variant not in ("EP-QA-L", "EP-QA", "BP-GA"):
        raise ConfigError(f"{variant!r} is not an iterative receiver")
    fc = frame.cfg
    const = qam_constellation(fc.Q)
    M = obs.y.shape[1]
    N, K, L = fc.N, fc.K, cfg.L
    s2 = obs.noise_var
    dk = frame.data_k
    trellis = build_trellis(code)

    oracle = None
    if variant != "EP-QA-L":
        if true_power is None:
            raise ConfigError(f"{variant} needs the true power-delay profile")
        oracle = true_power
    est = ce.init_estimator(M, N, L, K, variant=cfg.gmp_variant, oracle_power=oracle,
                            zero_based=cfg.zero_based)
    pilot_ev = ce.pilot_evidence(obs.y, frame.pilots, s2, N, K)
    evidence = pilot_ev
    det = ep.init_detector(_data_obs(frame, obs), s2, N, const)
    data_f_to_w = None
    snapshots = []

    for it in range(1, cfg.iterations + 1):
        ce.run_gmp(est, evidence, cfg.inner_first if it == 1 else cfg.inner_later)
        est.pdp_history.append((it, est.learned_power.copy()))
        det.w_to_f = ce.messages_to_edges(est, evidence, dk, data_f_to_w)
        det.w_post = GaussianMsg(est.w_post.mean[..., dk], est.w_post.var[..., dk])

        z, tau = ep.interference_stats(det.y, det.w_to_f, det.x_to_f, s2)
        if variant == "BP-GA":
            delta = ep.bp_ga_delta(z, tau, det.w_to_f, const)
            total = delta.sum(axis=0)
            llr_e = ep.extrinsic_from_loglik(-total, det.llr_a, const)
        else:
            det.f_to_x = ep.ep_msg_to_x(z, tau, det.w_to_f, det.x_post.mean)
            det.zeta, det.gamma = ep.combine_to_mapper(det.f_to_x)
            llr_e = ep.extrinsic_llrs(det.zeta, det.gamma, det.llr_a, const)

        det.llr_a, info_hat = _decode_users(llr_e, frame, trellis, cfg.maxlog)
        snapshots.append(IterationSnapshot(info_hat, est.h_mean.copy()))
        if it == cfg.iterations:
            break

        log_prior = ep.mapper_log_prior(det.llr_a, const)
        if variant == "BP-GA":
            edge_logp = log_prior[None] - (total[None] - delta)
            edge_p, xm, xv = ep._project(edge_logp, const)
            det.x_to_f = GaussianMsg(xm, np.maximum(xv, 1e-12))
            z, tau = ep.interference_stats(det.y, det.w_to_f, det.x_to_f, s2)
            data_f_to_w = ep.collapse_mixture(z, tau, edge_p, const)
        else:
            _, xm, xv = ep._project(log_prior + ep.gaussian_loglik(det.zeta, det.gamma, const), const)
            det.x_post = GaussianMsg(xm, xv)
            det.x_to_f = ep.ep_msg_x_to_f(det.x_post, det.f_to_x)
            z, tau = ep.interference_stats(det.y, det.w_to_f, det.x_to_f, s2)
            data_f_to_w = ep.ep_msg_to_w(z, tau, det.x_to_f, det.w_post.mean)
        det.f_to_w = data_f_to_w
        evidence = pilot_ev.copy().add(dk, data_f_to_w)
    return snapshots


def mfb_pcsi(frame: Frame, obs: RxObservation, Wf_true, code: CodeConfig = CodeConfig(),
             maxlog: bool = False) -> np.ndarray:
    """Genie receiver: perfect CSI and interference cancellation, MRC, exact LLRs, BCJR.

    Returns the decoded information bits ``(N, n_info)``.
    """
    fc = frame.cfg
    const = qam_constellation(fc.Q)
    dt, dk = frame.data_t, frame.data_k
    y = _data_obs(frame, obs)  # (M, J)
    w = Wf_true[:, :, dk]  # (M, N, J)
    xs = frame.x[dt, :, dk].T  # (N, J)
    full = np.einsum("mnj,nj->mj", w, xs)
    trellis = build_trellis(code)
    llr_e = np.empty((fc.N, dt.size, fc.Q))
    for n in range(fc.N):
        yn = y - (full - w[:, n] * xs[n])
        g = np.sum(np.abs(w[:, n]) ** 2, axis=0)
        zeta = np.sum(np.conj(w[:, n]) * yn, axis=0) / g
        gamma = obs.noise_var / g
        llr_e[n] = ep.extrinsic_llrs(zeta, gamma, np.zeros((dt.size, fc.Q)), const)
    _, info_hat = _decode_users(llr_e, frame, trellis, maxlog)
    return info_hat


# ---------------------------------------------------------------- complexity


def flop_estimate(cfg: SimConfig | dict, algorithm: str, G: int = 4) -> dict:
    """FLOPs per turbo iteration split into detection/decoding and channel estimation."""
    if algorithm not in FLOP_ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    c = cfg.to_dict() if isinstance(cfg, SimConfig) else dict(cfg)
    M = c["M"] if "M" in c else c["rows"] * c["cols"]
    T, N, K, Kp, L, Q = c["T"], c["N"], c["K"], c["Kp"], c["L"], c["Q"]
    A = 1 << Q
    symbol_part = (23 * A + 3 * Q * A + Q) * T * N * K
    pilot_part = (11 * N + 4) * M * (K - Kp)
    if algorithm in ("EP-QA-L", "EP-QA"):
        det = 47 * T * M * N * K + pilot_part + symbol_part
    elif algorithm == "BP-GA":
        det = (28 * A + 33) * T * M * N * K + (2 * A + 3 * Q * A + Q) * T * N * K
    elif algorithm == "BP-MF":
        det = 19 * T * M * N * K + pilot_part + symbol_part
    else:
        det = 33 * T * M * N * K + pilot_part + symbol_part

    gmp = 20 * K * math.log2(K) + 30 * T * K + 11 * K - 26 * T * Kp + 13 * Kp - 2
    if algorithm == "EP-QA-L":
        est = M * N * (gmp + 18 * L)
    elif algorithm in ("EP-QA", "BP-GA"):
        est = M * N * (gmp + 14 * L)
    elif algorithm == "BP-MF":
        est = M * N * (16 * K**3 + 12 * K**2 + 17 * T * K - K) + 2 * T * N * K - 2 * N * K - 2 * M * N
    else:
        est = M * N * (118 * G**2 + 68 * G - 4) * K - 112 * G**3 - 92 * G**3 + 5 * G
    return {"detection": float(det), "estimation": float(est), "total": float(det + est)}


# ---------------------------------------------------------------- Monte Carlo


def trial_seeds(master: int, trial: int, snr_index: int):
    """Independent generators for (channel + bits) and noise of one trial."""
    base = np.random.SeedSequence([master, trial])
    noise = np.random.SeedSequence([master, trial, 1_000_003 + snr_index])
    return np.random.default_rng(base), np.random.default_rng(noise)


def simulate_trial(cfg: SimConfig, snr_index: int, trial: int) -> dict:
    """All selected variants on one shared channel, frame and noise draw.

    Returns ``{variant: (bit_errors[I], nmse[I], info_bits)}``.
    """
    fc = cfg.frame_config()
    rng, noise_rng = trial_seeds(cfg.seed, trial, snr_index)
    power = exponential_pdp(cfg.L, cfg.pdp_decay)
    ch = generate_channel(rng, cfg.geometry(), power, cfg.K, cfg.N,
                          per_tap_angles=cfg.per_tap_angles, zero_based=cfg.zero_based)
    frame = make_frame(rng, fc)
    s2 = ebn0_to_symbol_noise(cfg.ebn0_db[snr_index], fc, cfg.M)
    obs = synthesize_rx(ch.Wf, frame.x, s2, noise_rng)
    out = {}
    for variant in cfg.variants:
        if variant == "MFB-PCSI":
            bh = mfb_pcsi(frame, obs, ch.Wf, maxlog=cfg.maxlog)
            errs = np.full(cfg.iterations, np.count_nonzero(bh != frame.info_bits))
            nm = np.full(cfg.iterations, np.nan)
        else:
            snaps = run_turbo_receiver(frame, obs, cfg, variant,
                                       true_power=np.broadcast_to(power, (cfg.N, cfg.L)))
            errs = np.array([np.count_nonzero(s.info_hat != frame.info_bits) for s in snaps])
            nm = np.array([nmse(ch.H, s.h_hat) for s in snaps])
        out[variant] = (errs, nm, frame.info_bits.size)
    return out


def _run_task(args):
    cfg_dict, snr_index, trial = args
    return snr_index, trial, simulate_trial(SimConfig.from_dict(cfg_dict), snr_index, trial)


def monte_carlo(cfg: SimConfig, workers: int = 1, progress=None) -> list[MetricRecord]:
    """Aggregate BER/NMSE per (variant, Eb/N0, turbo iteration) over ``cfg.trials`` trials.

    The result depends only on ``cfg``; trials are reduced in index order so
    any worker count yields identical numbers.
    """
    tasks = [(cfg.to_dict(), s, t) for s in range(len(cfg.ebn0_db)) for t in range(cfg.trials)]
    results = {}
    start = time.perf_counter()
    if workers <= 1:
        for task in tasks:
            s, t, r = _run_task(task)
            results[(s, t)] = r
            if progress:
                progress(len(results), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for s, t, r in pool.map(_run_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))):
                results[(s, t)] = r
                if progress:
                    progress(len(results), len(tasks))
    elapsed = time.perf_counter() - start

    records = []
    I = cfg.iterations
    for variant in cfg.variants:
        for s, snr in enumerate(cfg.ebn0_db):
            errs = np.zeros(I, dtype=np.int64)
            nm_sum = np.zeros(I)
            bits = 0
            for t in range(cfg.trials):
                e, nm, nb = results[(s, t)][variant]
                errs += e
                nm_sum += nm
                bits += nb
            for i in range(I):
                records.append(MetricRecord(variant, snr, i + 1, nm_sum[i] / cfg.trials,
                                            errs[i] / bits, cfg.trials, bits, cfg.seed, elapsed))
    return records


def records_to_csv(records, path=None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(r.row())
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text
