"""Grid quadrature for normalizers, expectations and KL diagnostics (1D/2D).

KL between mixtures of very narrow components cannot be resolved on any
fixed grid. The mixture-level diagnostics therefore accept a ``resolution``
r > 0: both densities are convolved with N(0, r^2 I) before the KL is taken.
By the data-processing inequality this never exceeds the unsmoothed KL and it
leaves components much wider than r essentially untouched.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractViolation
from .mixture import MixtureApprox, component_log_densities, mixture_log_density
from .targets import TargetModel, logsumexp

MAX_POINTS = 1 << 22

DensityLike = Union[Callable[[np.ndarray], np.ndarray], np.ndarray]


class SupportWarning(UserWarning):
    """The grid may be truncating non-negligible probability mass."""


@dataclass(frozen=True)
class Grid:
    bounds: tuple[tuple[float, float], ...]
    resolution: tuple[int, ...]

    def __init__(self, bounds: Sequence[Sequence[float]], resolution: int | Sequence[int]):
        bounds = tuple((float(lo), float(hi)) for lo, hi in bounds)
        if isinstance(resolution, (int, np.integer)):
            resolution = (int(resolution),) * len(bounds)
        resolution = tuple(int(r) for r in resolution)
        if not 1 <= len(bounds) <= 2 or len(resolution) != len(bounds):
            raise ContractViolation("grids are 1D or 2D with one resolution per axis")
        if any(hi <= lo for lo, hi in bounds):
            raise ContractViolation(f"grid bounds must satisfy hi > lo: {bounds}")
        if any(r < 64 for r in resolution):
            raise ContractViolation("grid resolution must be >= 64 per axis")
        if np.prod(resolution) > MAX_POINTS:
            raise ContractViolation(f"grid has more than {MAX_POINTS} points")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", resolution)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.bounds, self.resolution)]

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.resolution)])

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    def points(self) -> np.ndarray:
        """Grid nodes, shape ``(*resolution, dim)``."""
        return np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1)

    def log_weights(self) -> np.ndarray:
        """Log trapezoid weights on the grid, shape ``resolution``."""
        w = None
        for n, h in zip(self.resolution, self.spacing):
            wi = np.full(n, h)
            wi[[0, -1]] *= 0.5
            w = wi if w is None else np.multiply.outer(w, wi)
        return np.log(w)

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.resolution, dtype=bool)
        for ax in range(self.dim):
            idx = [slice(None)] * self.dim
            for end in (0, -1):
                idx[ax] = end
                mask[tuple(idx)] = True
        return mask

    def to_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "resolution": list(self.resolution)}


def _on_grid(density: DensityLike, grid: Grid) -> np.ndarray:
    if callable(density):
        return np.asarray(density(grid.points()), dtype=float).reshape(grid.shape)
    arr = np.asarray(density, dtype=float)
    if arr.shape != grid.shape:
        raise ContractViolation(f"density array shape {arr.shape} != grid shape {grid.shape}")
    return arr


def _check_target(target: TargetModel, grid: Grid):
    if target.dim != grid.dim:
        raise ContractViolation(f"target dim {target.dim} != grid dim {grid.dim}")


def log_integral(log_f: np.ndarray, grid: Grid) -> float:
    return float(logsumexp((log_f + grid.log_weights()).ravel()))


def quadrature_log_z(target: TargetModel, grid: Grid, tail_tol: float = 1e-8) -> float:
    """log of the integral of p* over the grid (trapezoid rule).

    Warns with :class:`SupportWarning` if the normalized density on the grid
    boundary, times the grid extent, exceeds ``tail_tol``.
    """
    _check_target(target, grid)
    lp = _on_grid(target.log_density, grid)
    log_z = log_integral(lp, grid)
    extent = float(np.prod([hi - lo for lo, hi in grid.bounds]) ** (1.0 / grid.dim))
    edge = float(np.max(lp[grid.boundary_mask()])) - log_z + np.log(extent)
    if edge > np.log(tail_tol):
        warnings.warn(f"boundary mass estimate {np.exp(edge):.2e} exceeds {tail_tol:.0e} "
                      f"for target {target.name!r}", SupportWarning, stacklevel=2)
    return log_z


def normalized_log_density(target: TargetModel, grid: Grid) -> np.ndarray:
    lp = _on_grid(target.log_density, grid)
    return lp - log_integral(lp, grid)


def kl_quadrature(log_a: DensityLike, log_b: DensityLike, grid: Grid, *, normalize: bool = False,
                  threshold: float = 1e-300) -> float:
    """Integral of a log(a / b) on the grid, with 0 log 0 := 0.

    ``log_a``/``log_b`` are callables over grid points or arrays already on
    the grid. Returns ``inf`` (with a RuntimeWarning) where ``b`` vanishes
    under non-negligible ``a``.
    """
    la, lb = _on_grid(log_a, grid), _on_grid(log_b, grid)
    if normalize:
        la = la - log_integral(la, grid)
        lb = lb - log_integral(lb, grid)
    a = np.exp(la)
    live = a > threshold
    if np.any(live & ~np.isfinite(lb)):
        warnings.warn("KL is infinite: b vanishes where a has mass", RuntimeWarning, stacklevel=2)
        return float("inf")
    w = np.exp(grid.log_weights())
    return float(np.sum((w * a * (la - lb))[live]))


def quadrature_expectation(target: TargetModel, f: Callable[[np.ndarray], np.ndarray], grid: Grid,
                           chunk: int = 1 << 16) -> float:
    """E_p[f] with p = p*/Z, both integrals on the same grid."""
    _check_target(target, grid)
    pts = grid.points().reshape(-1, grid.dim)
    lw = normalized_log_density(target, grid).ravel() + grid.log_weights().ravel()
    w = np.exp(lw)
    total = 0.0
    for i in range(0, pts.shape[0], chunk):
        total += float(np.dot(w[i : i + chunk], f(pts[i : i + chunk])))
    return total


# -- mixture diagnostics ---------------------------------------------------

def _widen(m: MixtureApprox, r: float) -> MixtureApprox:
    if r <= 0:
        return m
    ls = 0.5 * np.logaddexp(2 * m.log_sigma, 2 * np.log(r))
    return MixtureApprox(np.hstack([m.mu, ls]), m.source)


def target_log_density_on_grid(target: TargetModel, grid: Grid, resolution: float = 0.0) -> np.ndarray:
    """Normalized log p on the grid, optionally convolved with N(0, r^2 I)."""
    lp = normalized_log_density(target, grid)
    if resolution <= 0:
        return lp
    if np.any(grid.spacing * 3 > resolution):
        warnings.warn("grid spacing is coarse relative to the smoothing resolution",
                      SupportWarning, stacklevel=2)
    p = gaussian_filter(np.exp(lp), sigma=resolution / grid.spacing, mode="constant", truncate=6.0)
    with np.errstate(divide="ignore"):
        lp = np.log(p)
    return lp - log_integral(lp, grid)


def mixture_log_density_on_grid(m: MixtureApprox, grid: Grid, resolution: float = 0.0) -> np.ndarray:
    return mixture_log_density(_widen(m, resolution), grid.points())


def kl_bias_estimate(pool: MixtureApprox, target: TargetModel, grid: Grid, resolution: float = 0.0,
                     log_p: np.ndarray | None = None) -> float:
    """KL(m || p) with the pool standing in for the infinite mixture m."""
    _check_target(target, grid)
    if log_p is None:
        log_p = target_log_density_on_grid(target, grid, resolution)
    return kl_quadrature(mixture_log_density_on_grid(pool, grid, resolution), log_p, grid)


def mixture_kl_decomposition(m: MixtureApprox, target: TargetModel, grid: Grid, resolution: float = 0.0,
                             log_p: np.ndarray | None = None, chunk: int = 256) -> dict[str, float]:
    """Expected KL, mutual information and KL(m_T || p) for a finite mixture.

    Components are weighted uniformly; expected KL is the mean of
    KL(q_t || p) and mutual information is the mean of KL(q_t || m_T).
    With ``resolution`` > 0 every density is first convolved with
    N(0, r^2 I), which keeps the identity exact for arbitrarily narrow
    components.
    """
    _check_target(target, grid)
    if log_p is None:
        log_p = target_log_density_on_grid(target, grid, resolution)
    wide = _widen(m, resolution)
    pts = grid.points()
    lm = mixture_log_density(wide, pts)
    w = np.exp(grid.log_weights())[..., None]
    axes = tuple(range(grid.dim))
    per_kl, per_mi = [], []
    for i in range(0, m.T, chunk):
        lq = component_log_densities(MixtureApprox(wide.thetas[i : i + chunk]), pts)
        q = np.exp(lq)
        with np.errstate(invalid="ignore"):
            per_kl.append(np.nansum(w * q * (lq - log_p[..., None]), axis=axes))
            per_mi.append(np.nansum(w * q * (lq - lm[..., None]), axis=axes))
    return {
        "expected_kl": float(np.mean(np.concatenate(per_kl))),
        "mutual_information": float(np.mean(np.concatenate(per_mi))),
        "kl": kl_quadrature(lm, log_p, grid),
    }


def finite_mixture_identity_check(m: MixtureApprox, target: TargetModel, grid: Grid) -> tuple[float, float]:
    """Both sides of KL(m_T||p) = E_t KL(q_t||p) - E_t KL(q_t||m_T) on the grid."""
    parts = mixture_kl_decomposition(m, target, grid)
    return parts["kl"], parts["expected_kl"] - parts["mutual_information"]


def kl_variance_replicates(pool: MixtureApprox, T: int, reps: int, grid: Grid,
                           rng: np.random.Generator, resolution: float = 0.0,
                           min_ratio: float = 10.0) -> np.ndarray:
    """KL(m_T || pool) for ``reps`` random size-T subsamples of the pool."""
    if pool.dim != grid.dim:
        raise ContractViolation(f"pool dim {pool.dim} != grid dim {grid.dim}")
    if T < 1 or reps < 1:
        raise ContractViolation("T and reps must be >= 1")
    if pool.T < min_ratio * T:
        raise ContractViolation(f"pool of {pool.T} is too small for T={T} (need {min_ratio:g}x)")
    wide = _widen(pool, resolution)
    pts = grid.points()
    lm = mixture_log_density(wide, pts)
    out = np.empty(reps)
    for i in range(reps):
        # sorted so that T == pool size reproduces the pool bit for bit
        idx = np.sort(rng.choice(pool.T, size=T, replace=False))
        lmt = mixture_log_density(MixtureApprox(wide.thetas[idx]), pts)
        out[i] = kl_quadrature(lmt, lm, grid)
    return out


def kl_variance_estimate(pool: MixtureApprox, T: int, reps: int, grid: Grid,
                         rng: np.random.Generator, resolution: float = 0.0,
                         min_ratio: float = 10.0) -> float:
    return float(np.mean(kl_variance_replicates(pool, T, reps, grid, rng, resolution, min_ratio)))


def component_kls(m: MixtureApprox, target: TargetModel, n_nodes: int = 24) -> np.ndarray:
    """KL(q_t || p*) for every component by tensor Gauss-Hermite quadrature.

    Unnormalized, i.e. off by -log Z. Works at any component width,
    including components far narrower than any grid.
    """
    if m.dim != target.dim:
        raise ContractViolation(f"mixture dim {m.dim} != target dim {target.dim}")
    nodes, weights = np.polynomial.hermite_e.hermegauss(n_nodes)
    weights = weights / weights.sum()
    grids = np.meshgrid(*([nodes] * m.dim), indexing="ij")
    eps = np.stack([g.ravel() for g in grids], axis=-1)                  # (n^d, d)
    w = np.prod(np.meshgrid(*([weights] * m.dim), indexing="ij"), axis=0).ravel()
    x = m.mu[:, None, :] + np.exp(m.log_sigma)[:, None, :] * eps          # (T, n^d, d)
    ce = -(target.log_density(x) @ w)
    entropy = np.sum(m.log_sigma, axis=1) + 0.5 * m.dim * (np.log(2 * np.pi) + 1.0)
    return ce - entropy


def expected_kl(m: MixtureApprox, target: TargetModel, log_z: float, n_nodes: int = 24) -> float:
    """Mean over components of KL(q_t || p) with p = p* / exp(log_z)."""
    return float(np.mean(component_kls(m, target, n_nodes)) + log_z)
