"""Unnormalized target densities log p*(x) with analytic gradients.

All densities accept a single point of shape ``(dim,)`` or a batch of
shape ``(..., dim)`` and broadcast over the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError, ContractViolation

LOG_2PI = np.log(2.0 * np.pi)


def logsumexp(a, axis=-1, keepdims=False):
    # scipy's version carries enough overhead to dominate small-batch HMC
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class TargetModel:
    """A differentiable unnormalized log-density over R^dim.

    ``gaussian`` is set for Gaussian targets as ``(mean, cov)`` so that the
    psi density can switch to closed-form KL.
    """

    name: str
    dim: int
    params: Mapping[str, Any]
    _logp: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _grad: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    gaussian: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    _both: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = field(default=None, repr=False)

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dim:
            raise ContractViolation(
                f"target {self.name!r} expects points of dim {self.dim}, got shape {x.shape}"
            )
        return x

    def log_density(self, x) -> np.ndarray | float:
        return self._logp(self._check(x))

    def grad(self, x) -> np.ndarray:
        return self._grad(self._check(x))

    def log_density_and_grad(self, x):
        """Both at once; shares work for mixture targets. No shape check."""
        if self._both is not None:
            return self._both(x)
        return self._logp(x), self._grad(x)


def log_density_unnorm(target: TargetModel, x) -> float:
    return target.log_density(x)


def grad_log_density(target: TargetModel, x) -> np.ndarray:
    return target.grad(x)


# -- banana -----------------------------------------------------------------

def _banana_logp(z):
    x, y = z[..., 0], z[..., 1]
    r = y - 0.25 * x * x
    return -r * r - 0.25 * x * x


def _banana_grad(z):
    x, y = z[..., 0], z[..., 1]
    r = y - 0.25 * x * x
    return np.stack([x * r - 0.5 * x, -2.0 * r], axis=-1)


# -- Laplace mixture --------------------------------------------------------

def _laplace_mixture(weights, locs, scale):
    log_w = np.log(weights)

    def comps(z):
        # (..., M) log of w_m exp(-|x - c_m| / b)
        return log_w - np.abs(z - locs) / scale

    def logp(z):
        return logsumexp(comps(z), axis=-1)

    def grad(z):
        c = comps(z)
        r = np.exp(c - logsumexp(c, axis=-1, keepdims=True))
        # np.sign(0) == 0 gives the symmetric subgradient at the kinks
        return np.sum(r * (-np.sign(z - locs) / scale), axis=-1, keepdims=True)

    def both(z):
        c = comps(z)
        lse = logsumexp(c, axis=-1, keepdims=True)
        r = np.exp(c - lse)
        return lse[..., 0], np.sum(r * (-np.sign(z - locs) / scale), axis=-1, keepdims=True)

    return logp, grad, both


# -- Gaussian ---------------------------------------------------------------

def _gaussian(mean, cov):
    prec = np.linalg.inv(cov)
    _, logdet = np.linalg.slogdet(cov)
    const = -0.5 * (len(mean) * LOG_2PI + logdet)

    def logp(z):
        r = z - mean
        return const - 0.5 * np.einsum("...i,ij,...j->...", r, prec, r)

    def grad(z):
        return -(z - mean) @ prec

    return logp, grad


def _gaussian_mixture(weights, means, scales):
    log_w = np.log(weights)
    d = means.shape[1]
    log_norm = -0.5 * d * LOG_2PI - np.sum(np.log(scales), axis=1)

    def comps(z):
        r = (z[..., None, :] - means) / scales
        return log_w + log_norm - 0.5 * np.sum(r * r, axis=-1), r

    def logp(z):
        return logsumexp(comps(z)[0], axis=-1)

    def grad(z):
        c, r = comps(z)
        resp = np.exp(c - logsumexp(c, axis=-1, keepdims=True))
        return -np.sum(resp[..., None] * r / scales, axis=-2)

    def both(z):
        c, r = comps(z)
        lse = logsumexp(c, axis=-1, keepdims=True)
        resp = np.exp(c - lse)
        return lse[..., 0], -np.sum(resp[..., None] * r / scales, axis=-2)

    return logp, grad, both


def _vec(params, key, default=None):
    if key not in params:
        if default is None:
            raise ConfigError(f"missing parameter {key!r}")
        return np.asarray(default, dtype=float)
    try:
        return np.asarray(params[key], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"parameter {key!r} is not numeric: {params[key]!r}") from exc


def _allowed(name, params, keys):
    extra = set(params) - set(keys)
    if extra:
        raise ConfigError(f"unknown parameters for target {name!r}: {sorted(extra)}")


def make_target(name: str, params: Mapping[str, Any] | None = None) -> TargetModel:
    """Build one of the builtin targets.

    Args:
        name: ``banana``, ``laplace_mixture``, ``gaussian`` or ``gaussian_mixture``.
        params: builtin-specific parameters. ``gaussian`` takes ``mean`` and
            either ``sd`` (diagonal) or ``cov``; ``gaussian_mixture`` takes
            ``weights``, ``means`` (M x d) and ``scales`` (M or M x d);
            ``laplace_mixture`` optionally overrides ``weights``, ``locs``,
            ``scale``.
    """
    params = dict(params or {})
    if name == "banana":
        _allowed(name, params, ())
        return TargetModel(name, 2, params, _banana_logp, _banana_grad)

    if name == "laplace_mixture":
        _allowed(name, params, ("weights", "locs", "scale"))
        w = _vec(params, "weights", [0.4, 0.6])
        locs = _vec(params, "locs", [-1.5, 1.5])
        scale = float(_vec(params, "scale", 0.75))
        if w.shape != locs.shape or w.ndim != 1 or np.any(w <= 0) or scale <= 0:
            raise ConfigError("laplace_mixture needs positive weights matching locs and scale > 0")
        logp, grad, both = _laplace_mixture(w / w.sum(), locs, scale)
        return TargetModel(name, 1, params, logp, grad, _both=both)

    if name == "gaussian":
        _allowed(name, params, ("mean", "sd", "cov"))
        mean = np.atleast_1d(_vec(params, "mean"))
        if "cov" in params and "sd" in params:
            raise ConfigError("gaussian takes either 'sd' or 'cov', not both")
        if "cov" in params:
            cov = np.atleast_2d(_vec(params, "cov"))
        else:
            sd = np.broadcast_to(_vec(params, "sd", np.ones_like(mean)), mean.shape)
            if np.any(sd <= 0):
                raise ConfigError("gaussian 'sd' must be positive")
            cov = np.diag(sd**2)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ConfigError(f"gaussian mean/cov shapes disagree: {mean.shape} vs {cov.shape}")
        if not np.allclose(cov, cov.T) or np.any(np.linalg.eigvalsh(cov) <= 0):
            raise ConfigError("gaussian 'cov' must be symmetric positive definite")
        logp, grad = _gaussian(mean, cov)
        return TargetModel(name, mean.size, params, logp, grad, gaussian=(mean, cov))

    if name == "gaussian_mixture":
        _allowed(name, params, ("weights", "means", "scales"))
        means = np.atleast_2d(_vec(params, "means"))
        if means.ndim != 2:
            raise ConfigError("gaussian_mixture 'means' must be M x d")
        m, d = means.shape
        w = _vec(params, "weights", np.full(m, 1.0 / m))
        scales = _vec(params, "scales", np.ones(m))
        if scales.ndim == 1:
            scales = np.repeat(scales[:, None], d, axis=1)
        if w.shape != (m,) or scales.shape != (m, d) or np.any(w <= 0) or np.any(scales <= 0):
            raise ConfigError("gaussian_mixture weights/scales malformed")
        logp, grad, both = _gaussian_mixture(w / w.sum(), means, scales)
        return TargetModel(name, d, params, logp, grad, _both=both)

    raise ConfigError(f"unknown target {name!r}")
