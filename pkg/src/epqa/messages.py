"""Gaussian and discrete message containers with product/division rules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BIG_VAR = 1e6  # stands in for an infinite (uninformative) variance
VAR_FLOOR = 1e-12


@dataclass
class GaussianMsg:
    """Complex Gaussian messages ``CN(mean, var)``, elementwise over arrays."""

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=complex)
        self.var = np.asarray(self.var, dtype=float)

    @classmethod
    def uninformative(cls, shape, var=1.0):
        return cls(np.zeros(shape, dtype=complex), np.full(shape, float(var)))

    @property
    def precision(self) -> np.ndarray:
        return 1.0 / self.var

    def copy(self) -> "GaussianMsg":
        return GaussianMsg(self.mean.copy(), self.var.copy())

    def __getitem__(self, idx) -> "GaussianMsg":
        return GaussianMsg(self.mean[idx], self.var[idx])


def gaussian_product(msgs: GaussianMsg, axis: int) -> GaussianMsg:
    """Normalized product of the messages along ``axis``."""
    prec = np.sum(1.0 / msgs.var, axis=axis)
    var = 1.0 / prec
    mean = var * np.sum(msgs.mean / msgs.var, axis=axis)
    return GaussianMsg(mean, var)


def gaussian_divide(post: GaussianMsg, msg: GaussianMsg, on_negative: str = "posterior") -> GaussianMsg:
    """Cavity ``post / msg`` with a repair for non-positive results.

    ``on_negative="posterior"`` falls back to the posterior moments,
    ``"big"`` to ``CN(0, BIG_VAR)``.
    """
    diff = msg.var - post.var
    ok = diff > 0
    safe = np.where(ok, diff, 1.0)
    var = np.where(ok, post.var * msg.var / safe, 0.0)
    mean = np.where(ok, post.mean + post.var * (post.mean - msg.mean) / safe, 0.0)
    if on_negative == "posterior":
        var = np.where(ok, var, post.var)
        mean = np.where(ok, mean, post.mean)
    elif on_negative == "big":
        var = np.where(ok, var, BIG_VAR)
    else:
        raise ValueError(f"unknown repair {on_negative!r}")
    return GaussianMsg(mean, np.maximum(var, VAR_FLOOR))


def log_normalize(logp: np.ndarray, axis: int = -1) -> np.ndarray:
    """Probabilities from unnormalized log-probabilities (underflow safe)."""
    mx = np.max(logp, axis=axis, keepdims=True)
    p = np.exp(logp - mx)
    return p / p.sum(axis=axis, keepdims=True)
