"""Gaussian message passing over the CIR with variational PDP learning.

Each link ``(m, n)`` observes its CFR ``w = Phi h`` through Gaussian
messages ``f -> w`` (pilot observations and, from the second turbo iteration
on, the detector's data-aided messages).  Those messages are accumulated in
precision form so subcarriers that carry no information simply contribute
zero precision.

Two update rules are available:

``"gamp"`` (default)
    The standard GAMP Onsager correction ``eps = z_g * sum_l nu_h / tau_g``
    and ``xi = Phi^H (z_g / tau_g) + h * sum_k 1/tau_g``.  Its fixed point for
    a Gaussian prior and orthogonal pilots is the LMMSE estimate.
``"table"``
    The same recursion with two extra memory terms,
    ``-(nu_h / tau_bar) xi_prev`` in ``xi`` and
    ``(Phi (nu_h h_prev) - nu_bar eps_prev) / tau_g`` in ``eps``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel_model import dft_matrix
from .messages import VAR_FLOOR, GaussianMsg
from .txchain import ConfigError, PilotPattern

VARIANTS = ("gamp", "table")


@dataclass
class ChannelEvidence:
    """Sum over OFDM symbols of incoming ``f -> w`` messages, per (m, n, k)."""

    precision: np.ndarray  # sum_t 1/nu
    weighted_mean: np.ndarray  # sum_t w_hat/nu

    @classmethod
    def empty(cls, M, N, K):
        return cls(np.zeros((M, N, K)), np.zeros((M, N, K), dtype=complex))

    def add(self, k_idx, msgs: GaussianMsg, n_idx=None) -> "ChannelEvidence":
        """Accumulate messages located at subcarriers ``k_idx``.

        ``msgs`` is ``(M, N, J)`` with ``k_idx`` of length J, or, when
        ``n_idx`` is given, ``(M, P)`` with one (user, subcarrier) per column.
        """
        prec = 1.0 / msgs.var
        pm = msgs.mean * prec
        if n_idx is None:
            for n in range(self.precision.shape[1]):
                np.add.at(self.precision[:, n], (slice(None), k_idx), prec[:, n])
                np.add.at(self.weighted_mean[:, n], (slice(None), k_idx), pm[:, n])
        else:
            np.add.at(self.precision, (slice(None), n_idx, k_idx), prec)
            np.add.at(self.weighted_mean, (slice(None), n_idx, k_idx), pm)
        return self

    def copy(self) -> "ChannelEvidence":
        return ChannelEvidence(self.precision.copy(), self.weighted_mean.copy())


@dataclass
class EstimatorState:
    h_mean: np.ndarray  # (M, N, L)
    h_var: np.ndarray  # (M, N, L)
    xi: np.ndarray  # (M, N, L)
    eps: np.ndarray  # (M, N, K)
    Phi: np.ndarray  # (K, L)
    variant: str = "gamp"
    oracle_power: np.ndarray | None = None  # (N, L) true tap powers, or None to learn
    z_g: np.ndarray | None = None
    tau_g: np.ndarray | None = None
    tau_bar: np.ndarray | None = None
    nu_bar: np.ndarray | None = None
    g_to_w: GaussianMsg | None = None
    w_post: GaussianMsg | None = None
    learned_power: np.ndarray | None = None  # (N, L)
    gamma_shape: np.ndarray | None = None
    gamma_rate: np.ndarray | None = None
    pdp_history: list = field(default_factory=list)

    @property
    def dims(self):
        M, N, L = self.h_mean.shape
        return M, N, L, self.Phi.shape[0]


def init_estimator(M: int, N: int, L: int, K: int, *, variant: str = "gamp",
                   oracle_power=None, zero_based: bool = False) -> EstimatorState:
    """``h = 0``, ``nu_h = 1/L``, ``xi = 0``, ``eps = 0``."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown GMP variant {variant!r}")
    if oracle_power is not None:
        oracle_power = np.broadcast_to(np.asarray(oracle_power, dtype=float), (N, L)).copy()
    state = EstimatorState(
        h_mean=np.zeros((M, N, L), dtype=complex),
        h_var=np.full((M, N, L), 1.0 / L),
        xi=np.zeros((M, N, L), dtype=complex),
        eps=np.zeros((M, N, K), dtype=complex),
        Phi=dft_matrix(K, L, zero_based),
        variant=variant,
        oracle_power=oracle_power,
    )
    pdp_update(state)
    return state


def oracle_pdp_mode(state: EstimatorState, true_power) -> EstimatorState:
    """Switch the prior of ``h`` to known tap powers (simulation only)."""
    M, N, L, _ = state.dims
    state.oracle_power = np.broadcast_to(np.asarray(true_power, dtype=float), (N, L)).copy()
    return state


def pilot_messages(y, pilots: PilotPattern, noise_var: float):
    """``f -> w`` messages ``CN(y / x, sigma^2 / |x|^2)`` on every pilot.

    ``y`` is ``(T, M, K)``.  Returns ``(msgs, n_idx, k_idx)`` with ``msgs``
    shaped ``(M, N * Kp)``.
    """
    x = pilots.values
    if np.any(np.abs(x) == 0):
        raise ConfigError("pilot symbols must be nonzero")
    N, Kp = x.shape
    n_idx = np.repeat(np.arange(N), Kp)
    k_idx = pilots.subcarriers.ravel()
    xv = x.ravel()
    obs = np.asarray(y)[pilots.t][:, k_idx]  # (M, N*Kp)
    msgs = GaussianMsg(obs / xv, np.broadcast_to(noise_var / np.abs(xv) ** 2, obs.shape))
    return msgs, n_idx, k_idx


def pilot_evidence(y, pilots: PilotPattern, noise_var: float, N: int, K: int) -> ChannelEvidence:
    msgs, n_idx, k_idx = pilot_messages(y, pilots, noise_var)
    ev = ChannelEvidence.empty(msgs.mean.shape[0], N, K)
    return ev.add(k_idx, msgs, n_idx=n_idx)


def pdp_update(state: EstimatorState) -> np.ndarray:
    """Learned tap power ``(1/M) sum_m (|h|^2 + nu_h)`` and its Gamma belief."""
    M = state.h_mean.shape[0]
    rate = np.sum(np.abs(state.h_mean) ** 2 + state.h_var, axis=0)  # (N, L)
    state.gamma_shape = np.full(rate.shape, float(M))
    state.gamma_rate = rate
    state.learned_power = rate / M
    return state.learned_power


def _prior_precision(state: EstimatorState) -> np.ndarray:
    power = state.oracle_power if state.oracle_power is not None else state.learned_power
    with np.errstate(divide="ignore"):
        return 1.0 / np.maximum(power, 0.0)


def gmp_pass(state: EstimatorState, evidence: ChannelEvidence, learn_pdp: bool = True) -> EstimatorState:
    """One sweep of the CIR-domain message passing; updates ``state`` in place."""
    M, N, L, K = state.dims
    Phi = state.Phi
    prec = evidence.precision
    informed = prec > 0
    w_wg = np.where(informed, evidence.weighted_mean / np.where(informed, prec, 1.0), 0.0)

    if state.oracle_power is None and learn_pdp:
        pdp_update(state)
    prior_prec = _prior_precision(state)[None]  # (1, N, L)

    h_old, v_old, xi_old, eps_old = state.h_mean, state.h_var, state.xi, state.eps
    S_old = v_old.sum(axis=-1, keepdims=True)  # (M, N, 1)
    inv_tau = prec / (1.0 + prec * S_old)
    with np.errstate(divide="ignore"):
        tau_g = 1.0 / inv_tau
    z_g = w_wg - h_old @ Phi.T + eps_old
    tau_bar = tau_g.mean(axis=-1)

    sum_inv = inv_tau.sum(axis=-1, keepdims=True)
    xi = (z_g * inv_tau) @ Phi.conj() + h_old * sum_inv
    if state.variant == "table":
        with np.errstate(invalid="ignore"):
            ratio = np.where(np.isfinite(tau_bar), 1.0 / tau_bar, 0.0)[..., None]
        xi = xi - v_old * ratio * xi_old

    with np.errstate(divide="ignore", invalid="ignore"):
        h_var = 1.0 / (prior_prec + sum_inv)
    h_var = np.nan_to_num(h_var, nan=0.0, posinf=0.0)
    h_mean = h_var * xi
    nu_bar = h_var.mean(axis=-1)
    S = h_var.sum(axis=-1, keepdims=True)

    if state.variant == "table":
        eps = (z_g * S + (h_var * h_old) @ Phi.T - nu_bar[..., None] * eps_old) * inv_tau
    else:
        eps = z_g * S * inv_tau
    w_g = h_mean @ Phi.T - eps
    v_g = np.broadcast_to(np.maximum(S, VAR_FLOOR), (M, N, K))

    post_prec = 1.0 / v_g + prec
    w_post = GaussianMsg((w_g / v_g + evidence.weighted_mean) / post_prec, 1.0 / post_prec)

    state.h_mean, state.h_var, state.xi, state.eps = h_mean, h_var, xi, eps
    state.z_g, state.tau_g, state.tau_bar, state.nu_bar = z_g, tau_g, tau_bar, nu_bar
    state.g_to_w = GaussianMsg(w_g, v_g.copy())
    state.w_post = w_post
    return state


def run_gmp(state: EstimatorState, evidence: ChannelEvidence, iterations: int,
            learn_pdp: bool = True) -> EstimatorState:
    for _ in range(iterations):
        gmp_pass(state, evidence, learn_pdp)
    return state


def messages_to_edges(state: EstimatorState, evidence: ChannelEvidence, k_idx,
                      f_to_w: GaussianMsg | None = None) -> GaussianMsg:
    """``w -> f`` messages for edges at subcarriers ``k_idx`` (``(M, N, J)``).

    The posterior is divided by the edge's own incoming ``f -> w`` message when
    one exists (i.e. the message was part of ``evidence``).
    """
    g = state.g_to_w
    prec = 1.0 / g.var[..., k_idx] + evidence.precision[..., k_idx]
    pm = g.mean[..., k_idx] / g.var[..., k_idx] + evidence.weighted_mean[..., k_idx]
    if f_to_w is not None:
        prec = prec - 1.0 / f_to_w.var
        pm = pm - f_to_w.mean / f_to_w.var
    prec = np.maximum(prec, 1.0 / g.var[..., k_idx])  # exclusion never removes the prior part
    return GaussianMsg(pm / prec, 1.0 / prec)


def write_pdp_csv(path, history) -> None:
    """``history`` is a list of ``(turbo_iter, power[N, L])`` pairs."""
    with open(path, "w") as fh:
        fh.write("turbo_iter,user,tap,power\n")
        for it, power in history:
            for (n, l), p in np.ndenumerate(power):
                fh.write(f"{it},{n},{l + 1},{p:.9g}\n")
