"""Random band-limited test integrands and their exact Gaussian expectations.

    f(x) = sum_{w=1..N} a_w sin(w u_w . x + phi_w),   a_w = w ** alpha

With this sign convention alpha = -1 gives 1/w decay (smooth) and positive
alpha makes the function rougher.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .gaussian import Theta

AMPLITUDE_CONVENTION = "a_w = w ** alpha"


@dataclass(frozen=True)
class FourierFunction:
    omegas: np.ndarray      # (N,)
    amplitudes: np.ndarray  # (N,)
    directions: np.ndarray  # (N, d), unit rows
    phases: np.ndarray      # (N,)
    alpha: float

    @property
    def N(self) -> int:
        return self.omegas.size

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def with_alpha(self, alpha: float) -> "FourierFunction":
        """Same directions and phases, different spectral decay."""
        return FourierFunction(self.omegas, self.omegas ** float(alpha), self.directions,
                               self.phases, float(alpha))

    def __call__(self, x):
        return eval_fourier(self, x)


def synth_fourier(N: int, alpha: float, dim: int, rng: np.random.Generator) -> FourierFunction:
    if N < 1 or dim < 1:
        raise ContractViolation("N and dim must be >= 1")
    omegas = np.arange(1, N + 1, dtype=float)
    u = rng.standard_normal((N, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=N)
    return FourierFunction(omegas, omegas ** float(alpha), u, phases, float(alpha))


def eval_fourier(f: FourierFunction, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != f.dim:
        raise ContractViolation(f"expected trailing dim {f.dim}, got shape {x.shape}")
    proj = x @ f.directions.T  # (..., N)
    return np.sin(f.omegas * proj + f.phases) @ f.amplitudes


def gaussian_sinusoid_integral(theta: Theta, omega: float, u, phi: float) -> float:
    """E[sin(omega u.x + phi)] for x ~ N(mu, diag(sigma^2))."""
    u = np.asarray(u, dtype=float)
    if u.shape != theta.mu.shape:
        raise ContractViolation(f"direction shape {u.shape} != {theta.mu.shape}")
    if abs(np.linalg.norm(u) - 1.0) > 1e-9:
        raise ContractViolation("direction must have unit norm")
    var = float(np.sum(np.exp(2 * theta.log_sigma) * u * u))
    return float(np.sin(omega * (u @ theta.mu) + phi) * np.exp(-0.5 * omega**2 * var))


def component_expectations(thetas: np.ndarray, f: FourierFunction) -> np.ndarray:
    """Exact E_{q(.;theta_t)}[f] for each row of a ``(T, 2d)`` parameter array."""
    d = f.dim
    mu, ls = thetas[:, :d], thetas[:, d:]
    proj = mu @ f.directions.T                      # (T, N)
    var = np.exp(2 * ls) @ (f.directions**2).T      # (T, N)
    damp = np.exp(-0.5 * f.omegas**2 * var)
    return (np.sin(f.omegas * proj + f.phases) * damp) @ f.amplitudes


def expect_fourier(m, f: FourierFunction) -> float:
    """Exact E_{m_T}[f] for a uniform mixture ``m``; no sampling noise."""
    if m.dim != f.dim:
        raise ContractViolation(f"mixture dim {m.dim} != function dim {f.dim}")
    return float(np.mean(component_expectations(m.thetas, f)))
