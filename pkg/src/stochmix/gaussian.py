"""Diagonal-Gaussian components q(x; theta), theta = [mu, log_sigma]."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation

LOG_2PI = np.log(2.0 * np.pi)
LOG_2PIE = LOG_2PI + 1.0


@dataclass(frozen=True)
class Theta:
    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        ls = np.atleast_1d(np.asarray(self.log_sigma, dtype=float))
        if mu.shape != ls.shape or mu.ndim != 1:
            raise ContractViolation(f"mu and log_sigma shapes differ: {mu.shape} vs {ls.shape}")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(ls))):
            raise ContractViolation("theta entries must be finite")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_sigma", ls)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.mu, self.log_sigma])

    @classmethod
    def from_vector(cls, v) -> "Theta":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size % 2:
            raise ContractViolation(f"theta vector must have even length, got shape {v.shape}")
        d = v.size // 2
        return cls(v[:d], v[d:])


def _check_dim(theta: Theta, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != theta.dim:
        raise ContractViolation(f"expected trailing dim {theta.dim}, got shape {x.shape}")
    return x


def component_log_density(theta: Theta, x):
    x = _check_dim(theta, x)
    z = (x - theta.mu) * np.exp(-theta.log_sigma)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(theta.log_sigma) - 0.5 * theta.dim * LOG_2PI


def sample_reparam(theta: Theta, eps) -> np.ndarray:
    """Map standard-normal noise of shape ``(..., d)`` to draws from q."""
    eps = _check_dim(theta, eps)
    return theta.mu + np.exp(theta.log_sigma) * eps


def component_entropy(theta: Theta) -> float:
    return float(np.sum(theta.log_sigma) + 0.5 * theta.dim * LOG_2PIE)


def half_log_det_fim(theta: Theta) -> float:
    """Half log-determinant of the Fisher information, constants dropped.

    Under the log-sigma parameterization the scale block is a constant
    multiple of the identity, leaving only the mean block's -sum(log sigma).
    """
    return float(-np.sum(theta.log_sigma))


def kl_gaussian_analytic(theta: Theta, target_mu, target_sigma) -> float:
    """KL(q(.; theta) || N(target_mu, diag(target_sigma^2)))."""
    target_mu = np.broadcast_to(np.asarray(target_mu, dtype=float), theta.mu.shape)
    target_sigma = np.broadcast_to(np.asarray(target_sigma, dtype=float), theta.mu.shape)
    if np.any(target_sigma <= 0):
        raise ContractViolation("target_sigma must be positive")
    var_ratio = np.exp(2 * theta.log_sigma) / target_sigma**2
    mean_term = ((theta.mu - target_mu) / target_sigma) ** 2
    return float(0.5 * np.sum(var_ratio + mean_term - 1.0 - np.log(var_ratio)))


def cross_entropy_gaussian(theta: Theta, mean, cov) -> float:
    """-E_q[log N(x; mean, cov)] for a full-covariance Gaussian target."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    prec = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    r = theta.mu - mean
    var = np.exp(2 * theta.log_sigma)
    return float(0.5 * (np.sum(np.diag(prec) * var) + r @ prec @ r + logdet + theta.dim * LOG_2PI))


def cross_entropy_gaussian_grad(theta: Theta, mean, cov) -> np.ndarray:
    """Gradient of :func:`cross_entropy_gaussian` with respect to [mu, log_sigma]."""
    prec = np.linalg.inv(np.asarray(cov, dtype=float))
    var = np.exp(2 * theta.log_sigma)
    return np.concatenate([prec @ (theta.mu - np.asarray(mean, dtype=float)), np.diag(prec) * var])
