"""Finite uniform mixtures of diagonal-Gaussian components."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ContractViolation
from .gaussian import LOG_2PI, Theta
from .targets import logsumexp


@dataclass(frozen=True)
class MixtureApprox:
    """Uniformly weighted mixture; row t of ``thetas`` is ``[mu, log_sigma]``."""

    thetas: np.ndarray
    source: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        th = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if th.shape[0] < 1:
            raise ContractViolation("a mixture needs at least one component")
        if th.shape[1] % 2 or th.shape[1] == 0:
            raise ContractViolation(f"theta rows must have even length, got {th.shape[1]}")
        if not np.all(np.isfinite(th)):
            raise ContractViolation("mixture parameters must be finite")
        object.__setattr__(self, "thetas", th)

    @classmethod
    def from_thetas(cls, thetas: Sequence[Theta], source=None) -> "MixtureApprox":
        return cls(np.stack([t.to_vector() for t in thetas]), dict(source or {}))

    @property
    def T(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1] // 2

    @property
    def mu(self) -> np.ndarray:
        return self.thetas[:, : self.dim]

    @property
    def log_sigma(self) -> np.ndarray:
        return self.thetas[:, self.dim :]

    def theta(self, t: int) -> Theta:
        return Theta(self.mu[t], self.log_sigma[t])

    def __len__(self) -> int:
        return self.T


def component_log_densities(m: MixtureApprox, x) -> np.ndarray:
    """log q(x; theta_t) for every component; shape ``(..., T)``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != m.dim:
        raise ContractViolation(f"expected trailing dim {m.dim}, got shape {x.shape}")
    z = (x[..., None, :] - m.mu) * np.exp(-m.log_sigma)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(m.log_sigma, axis=1) - 0.5 * m.dim * LOG_2PI


def mixture_log_density(m: MixtureApprox, x, chunk: int = 4096):
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        return float(logsumexp(component_log_densities(m, x)) - np.log(m.T))
    flat = x.reshape(-1, m.dim)
    out = np.empty(flat.shape[0])
    step = max(1, chunk * 64 // m.T)
    for i in range(0, flat.shape[0], step):
        out[i : i + step] = logsumexp(component_log_densities(m, flat[i : i + step]), axis=-1)
    return (out - np.log(m.T)).reshape(x.shape[:-1])


def expect_mc(m: MixtureApprox, f: Callable[[np.ndarray], np.ndarray], n: int,
              rng: np.random.Generator) -> float:
    """Monte Carlo E_m[f] by ancestral sampling; ``f`` maps ``(n, d)`` to ``(n,)``."""
    if n < 1:
        raise ContractViolation("n must be >= 1")
    idx = rng.integers(0, m.T, size=n)
    x = m.mu[idx] + np.exp(m.log_sigma[idx]) * rng.standard_normal((n, m.dim))
    return float(np.mean(f(x)))


def subsample(pool: MixtureApprox, T: int, rng: np.random.Generator) -> MixtureApprox:
    if not 1 <= T <= pool.T:
        raise ContractViolation(f"cannot draw {T} components from a pool of {pool.T}")
    idx = rng.choice(pool.T, size=T, replace=False)
    source = dict(pool.source, subsample_of=pool.T, subsample_index=idx.tolist())
    return MixtureApprox(pool.thetas[idx], source)
