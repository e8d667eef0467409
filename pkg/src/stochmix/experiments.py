"""Pools of psi draws, ground truth and the bias/variance sweep."""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ContractViolation
from .fourier import AMPLITUDE_CONVENTION, FourierFunction, component_expectations, synth_fourier
from .hmc import Chain, DiffDensity, HmcConfig, run_chain
from .mixture import MixtureApprox
from .psi import PsiDensity, PsiParams
from .quadrature import Grid, quadrature_expectation
from .seeding import derived_seed, make_rng
from .targets import TargetModel, make_target
from .vi import fit_advi

log = logging.getLogger(__name__)

DEFAULT_GRIDS = {
    # wide enough for < 1e-8 tail mass and fine enough that frequencies up to
    # 100 do not alias under the trapezoid rule
    "banana": Grid([(-9.0, 9.0), (-5.0, 25.0)], (1024, 1024)),
    "laplace_mixture": Grid([(-20.0, 20.0)], 16384),
}


@dataclass(frozen=True)
class ChainConfig:
    n_chains: int = 4
    draws: int = 2500
    warmup: int = 1000
    max_leapfrog: int = 16
    jitter: float = 0.5
    target_accept: float = 0.8
    K: int = 256
    max_pool: int = 5000
    log_sigma_floor: float | None = None

    def hmc(self, mass: float = 1.0) -> HmcConfig:
        return HmcConfig(step_size=0.1, max_leapfrog=self.max_leapfrog, mass_diag=np.array([mass]),
                         target_accept=self.target_accept, warmup=self.warmup, jitter=self.jitter)


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get("STOCHMIX_THREADS", "1")))
    except ValueError:
        return 1


def parallel_map(fn, jobs: list) -> list:
    """Order-preserving map; fans out to processes when STOCHMIX_THREADS > 1."""
    workers = min(n_workers(), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _psi_chain_job(job) -> Chain:
    name, params, lam, cfg, seed = job
    target = make_target(name, params)
    psi = PsiParams(lam=lam, K=cfg.K, log_sigma_floor=cfg.log_sigma_floor)
    rng = np.random.default_rng(seed)
    init = np.concatenate([rng.standard_normal(target.dim), np.zeros(target.dim)])
    chain = run_chain(PsiDensity(target, psi), cfg.hmc(lam), init, cfg.draws, rng, seed=seed)
    log.debug("psi chain lam=%g seed=%d accept=%.2f", lam, seed, chain.accept_rate)
    return chain


def _x_chain_job(job) -> Chain:
    name, params, cfg, seed = job
    target = make_target(name, params)
    rng = np.random.default_rng(seed)
    return run_chain(DiffDensity.from_target(target), cfg.hmc(1.0),
                     rng.standard_normal(target.dim), cfg.draws, rng, seed=seed)


def psi_chains(target: TargetModel, lam: float, cfg: ChainConfig, root_seed: int) -> list[Chain]:
    """Independent HMC chains over theta ~ psi; mass lambda * I.

    Initialization: mu ~ N(0, 1) per coordinate, log sigma = 0.
    """
    jobs = [(target.name, dict(target.params), float(lam), cfg,
             derived_seed(root_seed, "psi", target.name, float(lam), c)) for c in range(cfg.n_chains)]
    return parallel_map(_psi_chain_job, jobs)


def x_chains(target: TargetModel, cfg: ChainConfig, root_seed: int) -> list[Chain]:
    jobs = [(target.name, dict(target.params), cfg, derived_seed(root_seed, "x", target.name, c))
            for c in range(cfg.n_chains)]
    return parallel_map(_x_chain_job, jobs)


def pool_from_chains(chains: list[Chain], max_pool: int = 5000, **source) -> MixtureApprox:
    """Thin each chain by a common stride so the pool holds at most ``max_pool``."""
    total = sum(len(c.draws) for c in chains)
    stride = max(1, -(-total // max_pool))
    rows = [c.draws[::stride] for c in chains]
    src = dict(source, chain_seeds=[c.seed for c in chains], chain_lengths=[len(r) for r in rows],
               stride=stride, accept_rates=[c.accept_rate for c in chains],
               divergences=[c.divergences for c in chains],
               warnings=[c.warning for c in chains if c.warning])
    return MixtureApprox(np.concatenate(rows), src)


def build_psi_pool(target: TargetModel, lam: float, cfg: ChainConfig, root_seed: int) -> MixtureApprox:
    chains = psi_chains(target, lam, cfg, root_seed)
    return pool_from_chains(chains, cfg.max_pool, target=target.name, lam=lam, root_seed=root_seed)


def split_by_chain(pool: MixtureApprox) -> list[MixtureApprox]:
    lengths = pool.source.get("chain_lengths", [pool.T])
    edges = np.cumsum([0, *lengths])
    return [MixtureApprox(pool.thetas[a:b]) for a, b in zip(edges[:-1], edges[1:])]


def ground_truth(target: TargetModel, f: FourierFunction, grid: Grid | None = None) -> float:
    grid = grid or DEFAULT_GRIDS.get(target.name)
    if grid is None:
        raise ContractViolation(f"no quadrature grid for target {target.name!r}; pass one")
    return quadrature_expectation(target, f, grid)


def subsample_estimates(pool: MixtureApprox, f: FourierFunction, T: int, reps: int,
                        rng: np.random.Generator) -> np.ndarray:
    """E_{m_T}[f] for ``reps`` random size-T subsamples, computed exactly."""
    if not 1 <= T <= pool.T:
        raise ContractViolation(f"cannot draw {T} components from a pool of {pool.T}")
    per = component_expectations(pool.thetas, f)
    return np.array([per[rng.choice(pool.T, size=T, replace=False)].mean() for _ in range(reps)])


@dataclass
class SweepResult:
    rows: list[dict]
    manifest: dict = field(default_factory=dict)

    def select(self, **match) -> list[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]


def _stats(est: np.ndarray, truth: float) -> dict:
    err = est - truth
    bias = float(err.mean())
    var = float(est.var())
    return {"bias": bias, "variance": var, "mse": bias * bias + var,
            "mse_direct": float(np.mean(err * err)),
            "bias_se": float(np.sqrt(est.var(ddof=1) / est.size)) if est.size > 1 else float("nan"),
            "n_replicates": int(est.size)}


def sweep_bias_variance(target: TargetModel, lambdas, alphas, T: int, reps: int, f_seed: int,
                        chain_cfg: ChainConfig | None = None, root_seed: int = 0, N: int = 100,
                        grid: Grid | None = None, pools: dict | None = None,
                        baselines: bool = False) -> SweepResult:
    """Bias, variance and MSE of E_{m_T}[f] across lambda and spectral decay.

    One Fourier function (directions and phases from ``f_seed``) is reused
    for every alpha. ``pools`` may carry prebuilt pools keyed by lambda and
    is filled in with any it builds.
    """
    lambdas, alphas = list(lambdas), list(alphas)
    if not lambdas or not alphas or T < 1 or reps < 1:
        raise ContractViolation("need non-empty lambdas/alphas and T, reps >= 1")
    cfg = chain_cfg or ChainConfig()
    pools = {} if pools is None else pools
    base_f = synth_fourier(N, alphas[0], target.dim, make_rng(f_seed, "fourier"))
    fs = {a: base_f.with_alpha(a) for a in alphas}
    truths = {a: ground_truth(target, fs[a], grid) for a in alphas}

    rows = []
    for lam in lambdas:
        if lam not in pools:
            pools[lam] = build_psi_pool(target, lam, cfg, root_seed)
        pool = pools[lam]
        warn = "; ".join(pool.source.get("warnings", []))
        # one seed per (lambda, T): every alpha sees the same subsamples
        seed = derived_seed(root_seed, "sweep", float(lam), T)
        for a in alphas:
            est = subsample_estimates(pool, fs[a], T, reps, np.random.default_rng(seed))
            rows.append({"method": "psi", "lambda": float(lam), "alpha": float(a), "T": T,
                         **_stats(est, truths[a]), "truth": truths[a], "seed": seed,
                         "pool_size": pool.T, "warning": warn})

    if baselines:
        xs = x_chains(target, cfg, root_seed)
        draws = np.concatenate([c.draws for c in xs])
        vi = fit_advi(target, rng=make_rng(root_seed, "vi", target.name))
        seed = derived_seed(root_seed, "sampling", T)
        for a in alphas:
            rng = np.random.default_rng(seed)
            fx = fs[a](draws)
            est = np.array([fx[rng.choice(len(fx), size=T, replace=False)].mean() for _ in range(reps)])
            rows.append({"method": "sampling", "lambda": float("nan"), "alpha": float(a), "T": T,
                         **_stats(est, truths[a]), "truth": truths[a], "seed": seed,
                         "pool_size": len(fx), "warning": ""})
            v = float(component_expectations(vi.theta_star.to_vector()[None], fs[a])[0])
            rows.append({"method": "vi", "lambda": float("inf"), "alpha": float(a), "T": T,
                         **_stats(np.array([v]), truths[a]), "truth": truths[a],
                         "seed": derived_seed(root_seed, "vi", target.name), "pool_size": 1,
                         "warning": ""})

    manifest = {"target": target.name, "lambdas": lambdas, "alphas": alphas, "T": T, "reps": reps,
                "f_seed": f_seed, "N": N, "root_seed": root_seed, "chain_config": asdict(cfg),
                "amplitude_convention": AMPLITUDE_CONVENTION,
                "grid": (grid or DEFAULT_GRIDS.get(target.name)).to_dict()}
    return SweepResult(rows, manifest)


def mse_argmin(result: SweepResult, alpha: float) -> float:
    rows = [r for r in result.select(method="psi") if r["alpha"] == alpha]
    return min(rows, key=lambda r: r["mse"])["lambda"]


def vi_bias(target: TargetModel, f: FourierFunction, vi_theta: np.ndarray, grid: Grid | None = None) -> float:
    """E_{q*}[f] - E_p[f] for a fitted single Gaussian ``vi_theta``."""
    return float(component_expectations(np.asarray(vi_theta)[None], f)[0] - ground_truth(target, f, grid))


def select_fourier_seed(target: TargetModel, vi_theta: np.ndarray, alpha: float = -1.0, N: int = 100,
                        min_bias: float = 0.1, max_tries: int = 50, grid: Grid | None = None) -> tuple[int, float]:
    """First seed 0, 1, 2, ... whose integrand the VI fit gets wrong by ``min_bias``.

    The bias-direction check needs an integrand on which the large-lambda
    limit is measurably biased; this picks one using only the VI fit and
    quadrature, never the psi pools.
    """
    for s in range(max_tries):
        f = synth_fourier(N, alpha, target.dim, make_rng(s, "fourier"))
        b = vi_bias(target, f, vi_theta, grid)
        if abs(b) >= min_bias:
            return s, b
    raise ContractViolation(f"no seed below {max_tries} gives |VI bias| >= {min_bias}")
