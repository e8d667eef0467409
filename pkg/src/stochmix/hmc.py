"""Hamiltonian Monte Carlo with jittered trajectory lengths and dual averaging.

This stands in for NUTS: trajectories have a uniformly random number of
leapfrog steps instead of a U-turn criterion. The mass matrix is diagonal and
fixed (lambda * I when sampling psi).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation
from .targets import TargetModel

DIVERGENCE_THRESHOLD = 1000.0


@dataclass
class DiffDensity:
    """A log-density with gradient over a flat state vector."""

    dim: int
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]]
    on_new_trajectory: Optional[Callable[[np.random.Generator], None]] = None

    def value(self, q) -> float:
        return self.value_and_grad(np.asarray(q, dtype=float))[0]

    def gradient(self, q) -> np.ndarray:
        return self.value_and_grad(np.asarray(q, dtype=float))[1]

    @classmethod
    def from_target(cls, target: TargetModel) -> "DiffDensity":
        def vg(q):
            return float(target.log_density(q)), target.grad(q)

        return cls(target.dim, vg)

    @classmethod
    def wrap(cls, obj) -> "DiffDensity":
        """Adapt any object with ``dim``/``value_and_grad``/``on_new_trajectory``."""
        if isinstance(obj, DiffDensity):
            return obj
        if isinstance(obj, TargetModel):
            return cls.from_target(obj)
        return cls(obj.dim, obj.value_and_grad, getattr(obj, "on_new_trajectory", None))


@dataclass(frozen=True)
class HmcConfig:
    step_size: float = 0.1
    max_leapfrog: int = 16
    mass_diag: Optional[np.ndarray] = None
    target_accept: float = 0.8
    warmup: int = 1000
    jitter: float = 0.5
    init_step_search: bool = True
    refine_frac: float = 0.25

    def __post_init__(self):
        if not self.step_size > 0:
            raise ContractViolation("step_size must be positive")
        if self.max_leapfrog < 1:
            raise ContractViolation("max_leapfrog must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ContractViolation("target_accept must lie in (0, 1)")
        if self.warmup < 0:
            raise ContractViolation("warmup must be >= 0")
        if not 0.0 <= self.jitter <= 1.0:
            raise ContractViolation("jitter must lie in [0, 1]")
        if not 0.0 <= self.refine_frac < 1.0:
            raise ContractViolation("refine_frac must lie in [0, 1)")
        if self.mass_diag is not None:
            m = np.asarray(self.mass_diag, dtype=float)
            if np.any(m <= 0):
                raise ContractViolation("mass_diag must be positive")
            object.__setattr__(self, "mass_diag", m)

    def mass(self, dim: int) -> np.ndarray:
        if self.mass_diag is None:
            return np.ones(dim)
        return np.broadcast_to(self.mass_diag, (dim,)).astype(float)


@dataclass
class Chain:
    draws: np.ndarray
    accepted: np.ndarray
    accept_rate: float
    divergences: int
    step_size_final: float
    seed: Optional[int] = None
    warning: Optional[str] = None
    accept_prob_mean: float = float("nan")


def leapfrog(q, p, step: float, mass_diag, density, grad=None):
    """One velocity-Verlet step.

    Returns ``(q, p)``; pass ``grad`` (the gradient at ``q``) and use
    :func:`_leapfrog` directly to reuse evaluations along a trajectory.
    """
    density = DiffDensity.wrap(density)
    if grad is None:
        grad = density.value_and_grad(np.asarray(q, dtype=float))[1]
    q, p, _, _ = _leapfrog(np.asarray(q, dtype=float), np.asarray(p, dtype=float), grad,
                           step, 1.0 / np.asarray(mass_diag, dtype=float), density.value_and_grad)
    return q, p


def _leapfrog(q, p, grad, step, inv_mass, value_and_grad):
    p = p + 0.5 * step * grad
    q = q + step * inv_mass * p
    logp, grad = value_and_grad(q)
    p = p + 0.5 * step * grad
    return q, p, logp, grad


def _kinetic(p, inv_mass):
    return 0.5 * float(np.sum(inv_mass * p * p))


def _trajectory(q0, logp0, grad0, step, n_steps, inv_mass, sqrt_mass, vg, rng):
    """Integrate one trajectory; returns (q, logp, grad, accept_prob, diverged)."""
    p0 = sqrt_mass * rng.standard_normal(q0.size)
    h0 = -logp0 + _kinetic(p0, inv_mass)
    q, p, logp, grad = q0, p0, logp0, grad0
    for _ in range(n_steps):
        q, p, logp, grad = _leapfrog(q, p, grad, step, inv_mass, vg)
        if not (np.isfinite(logp) and np.all(np.isfinite(grad))):
            return None, None, None, 0.0, True
    dh = -logp + _kinetic(p, inv_mass) - h0
    if not np.isfinite(dh) or dh > DIVERGENCE_THRESHOLD:
        return None, None, None, 0.0, True
    return q, logp, grad, min(1.0, math.exp(-dh)) if dh > 0 else 1.0, False


def _n_steps(config: HmcConfig, rng) -> int:
    hi = config.max_leapfrog
    lo = max(1, math.ceil((1.0 - config.jitter) * hi))
    return int(rng.integers(lo, hi + 1))


def hmc_step(state, config: HmcConfig, density, rng: np.random.Generator, step_size: float | None = None):
    """One Metropolis-corrected HMC transition.

    Returns ``(state, accepted, diverged)``. The density's
    ``on_new_trajectory`` hook fires once before integration.
    """
    state, accepted, diverged, _ = _hmc_transition(
        np.asarray(state, dtype=float), config, DiffDensity.wrap(density), rng,
        config.step_size if step_size is None else step_size,
    )
    return state, accepted, diverged


def _hmc_transition(q, config, density, rng, step, mass=None):
    with np.errstate(over="ignore", invalid="ignore"):
        return _hmc_transition_inner(q, config, density, rng, step, mass)


def _hmc_transition_inner(q, config, density, rng, step, mass):
    if density.on_new_trajectory is not None:
        density.on_new_trajectory(rng)
    if mass is None:
        mass = config.mass(q.size)
    logp0, grad0 = density.value_and_grad(q)
    if not np.isfinite(logp0):
        return q, False, True, 0.0
    q1, _, _, a, div = _trajectory(q, logp0, grad0, step, _n_steps(config, rng),
                                   1.0 / mass, np.sqrt(mass), density.value_and_grad, rng)
    if div:
        return q, False, True, 0.0
    if rng.uniform() < a:
        return q1, True, False, a
    return q, False, False, a


@dataclass
class DualAveraging:
    """Step-size adaptation state (Nesterov dual averaging as used by NUTS)."""

    mu: float
    target_accept: float = 0.8
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    h_bar: float = 0.0
    log_step: float = 0.0
    log_step_bar: float = 0.0
    m: int = 0

    @classmethod
    def start(cls, step_size: float, target_accept: float = 0.8) -> "DualAveraging":
        return cls(mu=math.log(10.0 * step_size), target_accept=target_accept,
                   log_step=math.log(step_size))

    @property
    def final_step_size(self) -> float:
        return math.exp(self.log_step_bar) if self.m else math.exp(self.log_step)


def adapt_step_size(state: DualAveraging, accept_prob: float) -> tuple[DualAveraging, float]:
    if not 0.0 <= accept_prob <= 1.0:
        raise ContractViolation(f"accept_prob must be in [0, 1], got {accept_prob}")
    m = state.m + 1
    w = 1.0 / (m + state.t0)
    h_bar = (1.0 - w) * state.h_bar + w * (state.target_accept - accept_prob)
    log_step = state.mu - math.sqrt(m) / state.gamma * h_bar
    eta = m ** (-state.kappa)
    log_step_bar = eta * log_step + (1.0 - eta) * state.log_step_bar
    new = DualAveraging(state.mu, state.target_accept, state.gamma, state.t0, state.kappa,
                        h_bar, log_step, log_step_bar, m)
    return new, math.exp(log_step)


def find_initial_step(q, density: DiffDensity, mass, rng, step: float = 0.1) -> float:
    """Double or halve ``step`` until a one-step acceptance crosses 1/2."""
    inv_mass, sqrt_mass = 1.0 / mass, np.sqrt(mass)
    if density.on_new_trajectory is not None:
        density.on_new_trajectory(rng)
    logp0, grad0 = density.value_and_grad(q)

    def log_accept(s):
        p0 = sqrt_mass * rng.standard_normal(q.size)
        _, p1, logp1, _ = _leapfrog(q, p0, grad0, s, inv_mass, density.value_and_grad)
        val = logp1 - _kinetic(p1, inv_mass) - logp0 + _kinetic(p0, inv_mass)
        return val if np.isfinite(val) else -np.inf

    direction = 1.0 if log_accept(step) > math.log(0.5) else -1.0
    for _ in range(50):
        nxt = step * 2.0**direction
        if (log_accept(nxt) > math.log(0.5)) != (direction > 0):
            break
        step = nxt
    return step


def _refine_step_size(q, config, density, rng, step, mass, n):
    """Robbins-Monro on log step with Polyak averaging over the second half.

    Dual-averaging iterates keep a constant spread, so their average lands
    where the *iterate-averaged* acceptance hits the target; when acceptance
    falls off a cliff (leapfrog instability) that step accepts too often.
    A decreasing gain converges to the root of the acceptance curve itself.
    """
    x = math.log(step)
    tail = []
    for k in range(n):
        q, _, _, a = _hmc_transition(q, config, density, rng, math.exp(x), mass)
        x += (k + 10.0) ** -0.6 * (a - config.target_accept)
        if k >= n // 2:
            tail.append(x)
    return math.exp(float(np.mean(tail))), q


def run_chain(density, config: HmcConfig, init_state, n_draws: int, rng: np.random.Generator,
              seed: int | None = None) -> Chain:
    """Warm up with step-size adaptation, then collect ``n_draws`` states."""
    if n_draws < 1:
        raise ContractViolation("n_draws must be >= 1")
    density = DiffDensity.wrap(density)
    q = np.array(init_state, dtype=float)
    if q.shape != (density.dim,):
        raise ContractViolation(f"init_state shape {q.shape} != ({density.dim},)")
    mass = config.mass(density.dim)

    step = config.step_size
    if config.init_step_search and config.warmup > 0:
        with np.errstate(over="ignore", invalid="ignore"):
            step = find_initial_step(q, density, mass, rng, step)
    n_refine = int(config.refine_frac * config.warmup)
    adapt = DualAveraging.start(step, config.target_accept)
    for _ in range(config.warmup - n_refine):
        q, _, _, a = _hmc_transition(q, config, density, rng, step, mass)
        adapt, step = adapt_step_size(adapt, a)
    if config.warmup > 0:
        step = adapt.final_step_size
    if n_refine:
        step, q = _refine_step_size(q, config, density, rng, step, mass, n_refine)

    draws = np.empty((n_draws, density.dim))
    accepted = np.zeros(n_draws, dtype=bool)
    n_div = 0
    a_sum = 0.0
    for i in range(n_draws):
        q, acc, div, a = _hmc_transition(q, config, density, rng, step, mass)
        draws[i] = q
        accepted[i] = acc
        n_div += div
        a_sum += a

    warning = None
    if n_div > 0.1 * n_draws:
        warning = f"{n_div} of {n_draws} transitions diverged"
        warnings.warn(warning, RuntimeWarning, stacklevel=2)
    return Chain(draws, accepted, float(accepted.mean()), n_div, step, seed, warning,
                 a_sum / n_draws)
