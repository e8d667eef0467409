"""The mixing log-density over component parameters.

    log psi(theta) = 1/2 log|F(theta)| - lambda * KL(q(.; theta) || p*)

KL is estimated by Monte Carlo with reparameterized noise that is held fixed
for a whole HMC trajectory and redrawn between trajectories.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation
from .gaussian import (
    LOG_2PIE,
    Theta,
    component_entropy,
    cross_entropy_gaussian,
    cross_entropy_gaussian_grad,
    half_log_det_fim,
)
from .targets import TargetModel


@dataclass(frozen=True)
class PsiParams:
    """Trade-off weight and estimator settings.

    Attributes:
        lam: weight on the KL term; 1 behaves like sampling, large values like VI.
        K: Monte Carlo draws per KL estimate.
        kl_mode: ``"mc"`` or ``"analytic"`` (Gaussian targets only).
        log_sigma_floor: if set, a quadratic barrier pulls log sigma back
            above this value. Off by default; the lambda=1 density is improper.
        barrier_strength: curvature of that barrier.
    """

    lam: float = 1.0
    K: int = 256
    kl_mode: str = "mc"
    log_sigma_floor: float | None = None
    barrier_strength: float = 1.0

    def __post_init__(self):
        if not self.lam >= 1.0:
            raise ContractViolation(f"lambda must be >= 1, got {self.lam}")
        if int(self.K) != self.K or self.K < 1:
            raise ContractViolation(f"K must be a positive integer, got {self.K}")
        if self.kl_mode not in ("mc", "analytic"):
            raise ContractViolation(f"kl_mode must be 'mc' or 'analytic', got {self.kl_mode!r}")


@dataclass(frozen=True)
class NoiseBlock:
    eps: np.ndarray
    generation: int = 0

    @classmethod
    def draw(cls, K: int, dim: int, rng: np.random.Generator) -> "NoiseBlock":
        return cls(rng.standard_normal((K, dim)), 0)

    @property
    def K(self) -> int:
        return self.eps.shape[0]


def refresh_noise(noise: NoiseBlock, rng: np.random.Generator) -> NoiseBlock:
    return NoiseBlock(rng.standard_normal(noise.eps.shape), noise.generation + 1)


def _check(theta: Theta, target: TargetModel, noise: NoiseBlock | None):
    if theta.dim != target.dim:
        raise ContractViolation(f"theta dim {theta.dim} != target dim {target.dim}")
    if noise is not None and noise.eps.shape[1] != target.dim:
        raise ContractViolation(f"noise shape {noise.eps.shape} does not match dim {target.dim}")


def estimate_kl(theta: Theta, target: TargetModel, noise: NoiseBlock) -> float:
    """Monte Carlo KL(q || p*), i.e. KL(q || p) - log Z."""
    _check(theta, target, noise)
    x = theta.mu + np.exp(theta.log_sigma) * noise.eps
    return float(-component_entropy(theta) - np.mean(target.log_density(x)))


def _barrier(log_sigma, psi: PsiParams):
    if psi.log_sigma_floor is None:
        return 0.0, np.zeros_like(log_sigma)
    gap = np.minimum(log_sigma - psi.log_sigma_floor, 0.0)
    return -0.5 * psi.barrier_strength * float(gap @ gap), -psi.barrier_strength * gap


def log_psi_and_grad(
    theta_vec: np.ndarray, target: TargetModel, psi: PsiParams, noise: NoiseBlock | None
) -> tuple[float, np.ndarray]:
    """Value and gradient of log psi at a flat ``[mu, log_sigma]`` vector."""
    d = target.dim
    mu, ls = theta_vec[:d], theta_vec[d:]
    lam = psi.lam
    pen, pen_grad = _barrier(ls, psi)

    if psi.kl_mode == "analytic":
        if target.gaussian is None:
            raise ContractViolation(f"analytic KL needs a Gaussian target, got {target.name!r}")
        th = Theta(mu, ls)
        mean, cov = target.gaussian
        ce = cross_entropy_gaussian(th, mean, cov)
        kl = -component_entropy(th) + ce
        g = -lam * cross_entropy_gaussian_grad(th, mean, cov)
        g[d:] += lam - 1.0
        g[d:] += pen_grad
        return -np.sum(ls) - lam * kl + pen, g

    sigma = np.exp(ls)
    eps = noise.eps
    x = mu + sigma * eps
    lp, gx = target.log_density_and_grad(x)
    kl = -(np.sum(ls) + 0.5 * d * LOG_2PIE) - np.mean(lp)
    value = -np.sum(ls) - lam * kl + pen
    g_mu = lam * np.mean(gx, axis=0)
    g_ls = (lam - 1.0) + lam * sigma * np.mean(gx * eps, axis=0) + pen_grad
    return float(value), np.concatenate([g_mu, g_ls])


def log_psi_unnorm(theta: Theta, target: TargetModel, psi: PsiParams, noise: NoiseBlock | None) -> float:
    _check(theta, target, noise if psi.kl_mode == "mc" else None)
    return log_psi_and_grad(theta.to_vector(), target, psi, noise)[0]


def grad_log_psi(theta: Theta, target: TargetModel, psi: PsiParams, noise: NoiseBlock | None) -> np.ndarray:
    _check(theta, target, noise if psi.kl_mode == "mc" else None)
    return log_psi_and_grad(theta.to_vector(), target, psi, noise)[1]


@dataclass
class PsiDensity:
    """Adapter exposing log psi to the HMC engine.

    Owns its noise block; ``on_new_trajectory`` redraws it so that every
    trajectory sees fixed noise and consecutive trajectories see fresh noise.
    """

    target: TargetModel
    psi: PsiParams
    noise: NoiseBlock = field(default=None)

    def __post_init__(self):
        if self.noise is None:
            self.noise = NoiseBlock(np.zeros((self.psi.K, self.target.dim)), 0)

    @property
    def dim(self) -> int:
        return 2 * self.target.dim

    def value_and_grad(self, v: np.ndarray) -> tuple[float, np.ndarray]:
        return log_psi_and_grad(v, self.target, self.psi, self.noise)

    def on_new_trajectory(self, rng: np.random.Generator) -> None:
        if self.psi.kl_mode == "mc":
            self.noise = refresh_noise(self.noise, rng)
