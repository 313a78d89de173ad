"""Detection side of the turbo receiver: EP-QA (default) and BP-GA messages.

All per-edge arrays live on the data grid and are shaped ``(M, N, J)`` where
``J`` enumerates the data positions ``(t, k)``; per-symbol arrays are
``(N, J)`` and per-bit arrays ``(N, J, Q)``.  LLRs are ``ln P(1)/P(0)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .messages import BIG_VAR, VAR_FLOOR, GaussianMsg, gaussian_divide, log_normalize
from .txchain import Constellation

LLR_CLAMP = 50.0


@dataclass
class DetectorState:
    y: np.ndarray  # (M, J)
    noise_var: float
    const: Constellation
    x_to_f: GaussianMsg  # (M, N, J)
    w_to_f: GaussianMsg  # (M, N, J)
    f_to_x: GaussianMsg  # (M, N, J)
    f_to_w: GaussianMsg  # (M, N, J)
    x_post: GaussianMsg  # (N, J)
    w_post: GaussianMsg  # (M, N, J)
    llr_a: np.ndarray  # (N, J, Q)
    zeta: np.ndarray | None = None
    gamma: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.x_to_f.mean.shape


def init_detector(y, noise_var: float, num_users: int, const: Constellation) -> DetectorState:
    """Cold start: zero means, unit variances and zero a priori LLRs."""
    y = np.asarray(y, dtype=complex)
    M, J = y.shape
    edge = (M, num_users, J)
    return DetectorState(
        y=y,
        noise_var=float(noise_var),
        const=const,
        x_to_f=GaussianMsg.uninformative(edge),
        w_to_f=GaussianMsg.uninformative(edge),
        f_to_x=GaussianMsg.uninformative(edge),
        f_to_w=GaussianMsg.uninformative(edge),
        x_post=GaussianMsg.uninformative((num_users, J)),
        w_post=GaussianMsg.uninformative(edge),
        llr_a=np.zeros((num_users, J, const.bits_per_symbol)),
    )


def interference_stats(y, w: GaussianMsg, x: GaussianMsg, noise_var: float):
    """Mean ``z`` and variance ``tau`` of each edge's observation with the
    other users' contributions treated as Gaussian interference.

    ``y`` is ``(M, J)``; ``w`` and ``x`` hold ``(M, N, J)`` edge messages.
    """
    prod = w.mean * x.mean
    z = y[:, None, :] - (prod.sum(axis=1, keepdims=True) - prod)
    aw2 = np.abs(w.mean) ** 2
    ax2 = np.abs(x.mean) ** 2
    v = aw2 * x.var + w.var * ax2 + w.var * x.var
    tau = noise_var + (v.sum(axis=1, keepdims=True) - v)
    return z, np.maximum(tau, noise_var)


def _quadratic_message(z, tau, a_mean, a_var, b_post, repair_mean=0.0):
    """Gaussian message for ``b`` from ``z = a b + noise(tau)`` expanded around ``b_post``.

    ``a`` is the other factor's incoming message.  A non-positive variance is
    replaced by ``BIG_VAR`` with mean ``repair_mean``.
    """
    z_hat = z - a_mean * b_post
    tau_hat = tau + a_var * np.abs(b_post) ** 2
    den = np.abs(a_mean) ** 2 + a_var * (1.0 - np.abs(z_hat) ** 2 / tau_hat)
    ok = den > 0
    var = np.where(ok, tau_hat / np.where(ok, den, 1.0), BIG_VAR)
    mean = np.where(ok, var * np.conj(a_mean) * z / tau_hat, repair_mean)
    return GaussianMsg(mean, var)


def ep_msg_to_w(z, tau, x_to_f: GaussianMsg, w_post_mean) -> GaussianMsg:
    """f -> w messages, expanded at the channel posterior mean."""
    return _quadratic_message(z, tau, x_to_f.mean, x_to_f.var, w_post_mean)


def ep_msg_to_x(z, tau, w_to_f: GaussianMsg, x_post_mean) -> GaussianMsg:
    """f -> x messages, expanded at the symbol posterior mean."""
    return _quadratic_message(z, tau, w_to_f.mean, w_to_f.var, x_post_mean)


def combine_to_mapper(f_to_x: GaussianMsg) -> tuple[np.ndarray, np.ndarray]:
    """``(zeta, gamma)``: product of the M antenna messages for each symbol."""
    prec = np.sum(1.0 / f_to_x.var, axis=0)
    gamma = 1.0 / prec
    zeta = gamma * np.sum(f_to_x.mean / f_to_x.var, axis=0)
    return zeta, gamma


def gaussian_loglik(zeta, gamma, const: Constellation) -> np.ndarray:
    """``ln N(a; zeta, gamma)`` up to a per-symbol constant, for every point ``a``."""
    zeta = np.asarray(zeta)[..., None]
    gamma = np.maximum(np.asarray(gamma, dtype=float), 1e-300)[..., None]
    return -np.abs(const.points - zeta) ** 2 / gamma


def mapper_log_prior(llr_a, const: Constellation) -> np.ndarray:
    """``ln`` of the symbol prior implied by per-bit LLRs, shape ``(..., |A|)``."""
    llr_a = np.asarray(llr_a, dtype=float)
    labels = const.labels.astype(float)
    return llr_a @ labels.T - np.logaddexp(0.0, llr_a).sum(axis=-1, keepdims=True)


def mapper_to_symbol_prior(llr_a, const: Constellation) -> np.ndarray:
    """Probability of every constellation point given per-bit a priori LLRs."""
    return log_normalize(mapper_log_prior(llr_a, const))


def bit_llrs_from_loglik(loglik, const: Constellation) -> np.ndarray:
    """Posterior bit LLRs of a symbol log-probability table ``(..., |A|)``."""
    out = np.empty(loglik.shape[:-1] + (const.bits_per_symbol,))
    for q in range(const.bits_per_symbol):
        one = const.labels[:, q] == 1
        out[..., q] = np.logaddexp.reduce(loglik[..., one], axis=-1) - np.logaddexp.reduce(
            loglik[..., ~one], axis=-1
        )
    return out


def extrinsic_from_loglik(loglik, llr_a, const: Constellation, clamp: float = LLR_CLAMP):
    total = loglik + mapper_log_prior(llr_a, const)
    return np.clip(bit_llrs_from_loglik(total, const) - llr_a, -clamp, clamp)


def extrinsic_llrs(zeta, gamma, llr_a, const: Constellation, clamp: float = LLR_CLAMP):
    """Extrinsic bit LLRs from the Gaussian symbol message and the a priori LLRs."""
    return extrinsic_from_loglik(gaussian_loglik(zeta, gamma, const), llr_a, const, clamp)


def symbol_posterior_project(prior, zeta, gamma, const: Constellation):
    """Discrete belief ``prior * N(a; zeta, gamma)`` and its mean and variance.

    ``prior`` is a probability table ``(..., |A|)``.
    """
    with np.errstate(divide="ignore"):
        logp = np.log(np.asarray(prior, dtype=float))
    return _project(logp + gaussian_loglik(zeta, gamma, const), const)


def _project(logp, const: Constellation):
    beta = log_normalize(logp)
    mean = beta @ const.points
    var = np.sum(beta * np.abs(const.points - mean[..., None]) ** 2, axis=-1)
    return beta, mean, var


def ep_msg_x_to_f(x_post: GaussianMsg, f_to_x: GaussianMsg) -> GaussianMsg:
    """EP cavity message x -> f; falls back to the posterior when it is not proper."""
    post = GaussianMsg(np.broadcast_to(x_post.mean, f_to_x.mean.shape),
                       np.broadcast_to(x_post.var, f_to_x.var.shape))
    return gaussian_divide(post, f_to_x, on_negative="posterior")


# ---------------------------------------------------------------- BP-GA baseline


def bp_ga_delta(z, tau, w_to_f: GaussianMsg, const: Constellation) -> np.ndarray:
    """``|z - w a|^2 / (tau + nu_w |a|^2) + ln(tau + nu_w |a|^2)`` per edge and point."""
    a = const.points
    s = tau[..., None] + w_to_f.var[..., None] * np.abs(a) ** 2
    return np.abs(z[..., None] - w_to_f.mean[..., None] * a) ** 2 / s + np.log(s)


def collapse_mixture(z, tau, weights, const: Constellation) -> GaussianMsg:
    """Two-moment Gaussian fit of ``sum_a mu(a) CN(z; w a, tau)`` viewed as a density in ``w``.

    ``weights`` are the symbol probabilities ``mu(a)``; the components are
    ``CN(w; z/a, tau/|a|^2)`` weighted by ``mu(a)/|a|^2``.
    """
    a = const.points
    theta = weights / np.abs(a) ** 2
    theta = theta / theta.sum(axis=-1, keepdims=True)
    mean = z * np.sum(theta / a, axis=-1)
    second = (tau + np.abs(z) ** 2) * np.sum(theta / np.abs(a) ** 2, axis=-1)
    var = second - np.abs(mean) ** 2
    return GaussianMsg(mean, np.maximum(var, VAR_FLOOR))


def bp_ga_pass(z, tau, w_to_f: GaussianMsg, log_prior, const: Constellation):
    """One BP-GA sweep.

    ``log_prior`` is the mapper message ``(N, J, |A|)``.  Returns
    ``(x_to_f, f_to_w, loglik)`` where ``loglik`` is the exact discrete
    symbol-to-mapper message ``-sum_m Delta`` (``(N, J, |A|)``).
    """
    delta = bp_ga_delta(z, tau, w_to_f, const)
    total = delta.sum(axis=0)
    edge_logp = log_prior[None] - (total[None] - delta)
    _, xm, xv = _project(edge_logp, const)
    x_to_f = GaussianMsg(xm, np.maximum(xv, VAR_FLOOR))
    f_to_w = collapse_mixture(z, tau, log_normalize(edge_logp), const)
    return x_to_f, f_to_w, -total


# ---------------------------------------------------------------- Wirtinger expansion


@dataclass(frozen=True)
class QuadraticExpansion:
    """Second-order expansion of ``H = |z|^2/tau + ln tau + |u|^2/nu`` around a point."""

    z0: complex
    tau0: float
    u0: complex
    nu: float

    @property
    def constant(self) -> float:
        return abs(self.z0) ** 2 / self.tau0 + np.log(self.tau0) + abs(self.u0) ** 2 / self.nu

    @property
    def grad_z(self) -> complex:
        """Coefficient ``g`` of ``2 Re{g dz}``."""
        return np.conj(self.z0) / self.tau0

    @property
    def grad_u(self) -> complex:
        return np.conj(self.u0) / self.nu

    @property
    def grad_tau(self) -> float:
        return 1.0 / self.tau0 - abs(self.z0) ** 2 / self.tau0**2

    @property
    def hess_z(self) -> float:
        return 1.0 / self.tau0

    @property
    def hess_u(self) -> float:
        return 1.0 / self.nu

    def __call__(self, dz=0.0, dtau=0.0, du=0.0) -> float:
        return (
            self.constant
            + 2 * np.real(self.grad_z * dz + self.grad_u * du)
            + self.grad_tau * dtau
            + self.hess_z * abs(dz) ** 2
            + self.hess_u * abs(du) ** 2
        )


def wirtinger_expand(z0: complex, tau0: float, u0: complex, nu: float) -> QuadraticExpansion:
    if tau0 <= 0 or nu <= 0:
        raise ValueError("tau0 and nu must be positive")
    return QuadraticExpansion(complex(z0), float(tau0), complex(u0), float(nu))


def local_cost(z, tau, u, nu) -> float:
    """``H(z, tau, u)`` itself, for checking the expansion."""
    return abs(z) ** 2 / tau + np.log(tau) + abs(u) ** 2 / nu
