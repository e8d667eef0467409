"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run standalone with ``python3 tests/test_acceptance.py`` or via pytest.
Expensive pools are built once per session and shared.
"""
import sys
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from conftest import central_diff
from stochmix.cli import run_cli
from stochmix.experiments import (DEFAULT_GRIDS, ChainConfig, build_psi_pool, mse_argmin,
                                  select_fourier_seed, split_by_chain, sweep_bias_variance)
from stochmix.fourier import gaussian_sinusoid_integral
from stochmix.gaussian import Theta, cross_entropy_gaussian
from stochmix.hmc import DiffDensity, HmcConfig, run_chain
from stochmix.mixture import MixtureApprox
from stochmix.psi import NoiseBlock, PsiParams, grad_log_psi, log_psi_unnorm
from stochmix.quadrature import (finite_mixture_identity_check, kl_bias_estimate,
                                 kl_variance_replicates, target_log_density_on_grid)
from stochmix.seeding import make_rng
from stochmix.targets import make_target
from stochmix.vi import fit_advi

RESULTS: list[str] = []
BANANA_LAMBDAS = [1.0, 3.0, 10.0, 30.0, 100.0]
LAPLACE_LAMBDAS = [1.0, 3.0, 10.0, 100.0]
LAPLACE_RESOLUTION = 0.05
ROOT_SEED = 0


def report(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def banana_pools():
    target = make_target("banana", {})
    t0 = time.perf_counter()
    pools = {lam: build_psi_pool(target, lam, ChainConfig(), ROOT_SEED) for lam in BANANA_LAMBDAS}
    return pools, time.perf_counter() - t0


@pytest.fixture(scope="session")
def laplace_pools():
    target = make_target("laplace_mixture", {})
    cfg = ChainConfig(n_chains=4, draws=500, max_pool=2000)
    t0 = time.perf_counter()
    pools = {lam: build_psi_pool(target, lam, cfg, ROOT_SEED) for lam in LAPLACE_LAMBDAS}
    return pools, time.perf_counter() - t0


def test_c01_gradient_correctness():
    t0 = time.perf_counter()
    worst = 0.0
    for name in ("banana", "laplace_mixture"):
        target = make_target(name, {})
        for lam in (1.0, 10.0, 100.0):
            rng = make_rng(1, name, lam)
            psi = PsiParams(lam=lam, K=16)
            for _ in range(50):
                noise = NoiseBlock.draw(16, target.dim, rng)
                v = np.concatenate([rng.normal(0, 1.5, target.dim), rng.normal(-0.5, 0.5, target.dim)])
                fd = central_diff(lambda z: log_psi_unnorm(Theta.from_vector(z), target, psi, noise), v)
                g = grad_log_psi(Theta.from_vector(v), target, psi, noise)
                scale = np.maximum(np.abs(fd), 1.0)
                worst = max(worst, float(np.max(np.abs(g - fd) / scale)))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-5 and dt < 10, f"max rel err {worst:.2e} (<= 1e-5), {dt:.1f}s (< 10s)")


def test_c02_lambda_one_cancellation():
    t0 = time.perf_counter()
    target = make_target("gaussian", {"mean": [1.0, -0.5], "cov": [[1.5, 0.3], [0.3, 0.8]]})
    psi = PsiParams(lam=1.0, kl_mode="analytic")
    rng = make_rng(2)
    vals = []
    for _ in range(100):
        th = Theta(rng.normal(0, 2, 2), rng.normal(0, 1, 2))
        vals.append(log_psi_unnorm(th, target, psi, None) + cross_entropy_gaussian(th, *target.gaussian))
    spread = float(np.ptp(vals))
    dt = time.perf_counter() - t0
    report(2, spread <= 1e-12 and dt < 1, f"spread of log psi + CE {spread:.1e} (<= 1e-12), {dt:.2f}s (< 1s)")


def test_c03_sampler_validity():
    t0 = time.perf_counter()
    dens = DiffDensity(2, lambda q: (-0.5 * float(q @ q), -q))
    rng = make_rng(3)
    chain = run_chain(dens, HmcConfig(warmup=1000), np.zeros(2), 20_000, rng)
    direct = rng.standard_normal((20_000, 2))
    mean_err = float(np.max(np.abs(chain.draws.mean(axis=0))))
    var_err = float(np.max(np.abs(chain.draws.var(axis=0) - 1)))
    pvals = [stats.ks_2samp(chain.draws[:, i], direct[:, i]).pvalue for i in range(2)]
    dt = time.perf_counter() - t0
    ok = mean_err <= 0.05 and var_err <= 0.1 and min(pvals) > 0.01 and dt < 30
    report(3, ok, f"|mean| {mean_err:.3f}, |var-1| {var_err:.3f}, KS p {min(pvals):.3f}, {dt:.1f}s")


def test_c04_finite_mixture_identity():
    t0 = time.perf_counter()
    target = make_target("laplace_mixture", {})
    grid = DEFAULT_GRIDS["laplace_mixture"]
    rng = make_rng(4)
    worst = 0.0
    for _ in range(20):
        T = int(rng.integers(1, 8))
        m = MixtureApprox(np.column_stack([rng.normal(0, 2, T), rng.normal(-0.5, 0.5, T)]))
        lhs, rhs = finite_mixture_identity_check(m, target, grid)
        worst = max(worst, abs(lhs - rhs))
    dt = time.perf_counter() - t0
    report(4, worst <= 1e-6 and dt < 30, f"max |lhs - rhs| {worst:.1e} (<= 1e-6), {dt:.1f}s")


def test_c05_exact_integration():
    t0 = time.perf_counter()
    rng = make_rng(5)
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 3))
        th = Theta(rng.normal(0, 1, d), rng.normal(-0.5, 0.5, d))
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        omega, phi = rng.uniform(0.2, 5), rng.uniform(0, 2 * np.pi)
        x = th.mu + th.sigma * rng.standard_normal((1_000_000, d))
        vals = np.sin(omega * x @ u + phi)
        z = abs(vals.mean() - gaussian_sinusoid_integral(th, omega, u, phi)) / (vals.std() / 1000)
        worst = max(worst, z)
    dt = time.perf_counter() - t0
    report(5, worst <= 3 and dt < 30, f"max |z| {worst:.2f} (<= 3 SE), {dt:.1f}s")


def test_c06_kl_directionality(laplace_pools):
    pools, build_time = laplace_pools
    t0 = time.perf_counter()
    target = make_target("laplace_mixture", {})
    grid = DEFAULT_GRIDS["laplace_mixture"]
    log_p = target_log_density_on_grid(target, grid, LAPLACE_RESOLUTION)
    kv, kv_se, kb, kb_se = [], [], [], []
    for lam in LAPLACE_LAMBDAS:
        pool = pools[lam]
        reps = kl_variance_replicates(pool, 10, 200, grid, make_rng(ROOT_SEED, "klvar", lam),
                                      LAPLACE_RESOLUTION)
        kv.append(reps.mean())
        kv_se.append(reps.std(ddof=1) / np.sqrt(reps.size))
        kb.append(kl_bias_estimate(pool, target, grid, LAPLACE_RESOLUTION, log_p=log_p))
        per_chain = [kl_bias_estimate(p, target, grid, LAPLACE_RESOLUTION, log_p=log_p)
                     for p in split_by_chain(pool)]
        kb_se.append(np.std(per_chain, ddof=1) / np.sqrt(len(per_chain)))
    inversions = [(i, kv[i + 1] - kv[i], np.hypot(kv_se[i], kv_se[i + 1]))
                  for i in range(len(kv) - 1) if kv[i + 1] > kv[i]]
    var_ok = len(inversions) <= 1 and all(diff <= 2 * se for _, diff, se in inversions)
    gap_se = float(np.hypot(kb_se[0], kb_se[-1]))
    bias_ok = kb[-1] - kb[0] >= 3 * gap_se
    dt = time.perf_counter() - t0 + build_time
    detail = (f"KL-var {np.round(kv, 4).tolist()} (inversions {len(inversions)}); "
              f"KL-bias {np.round(kb, 4).tolist()}, gap {kb[-1] - kb[0]:.3f} vs 3SE {3 * gap_se:.3f}; "
              f"resolution {LAPLACE_RESOLUTION}; {dt:.0f}s (< 300s)")
    report(6, var_ok and bias_ok and dt < 300, detail)


@pytest.fixture(scope="session")
def banana_f_seed():
    target = make_target("banana", {})
    vi = fit_advi(target, rng=make_rng(ROOT_SEED, "vi", "banana"))
    return select_fourier_seed(target, vi.theta_star.to_vector())


def test_c07_bias_variance_trend(banana_pools, banana_f_seed):
    pools, build_time = banana_pools
    f_seed, vib = banana_f_seed
    t0 = time.perf_counter()
    res = sweep_bias_variance(make_target("banana", {}), BANANA_LAMBDAS, [-1.0], T=10, reps=200,
                              f_seed=f_seed, root_seed=ROOT_SEED, pools=pools)
    rows = {r["lambda"]: r for r in res.select(method="psi")}
    lo, hi = rows[1.0], rows[100.0]
    se = float(np.hypot(lo["bias_se"], hi["bias_se"]))
    bias_ok = abs(lo["bias"]) <= abs(hi["bias"]) - 2 * se
    ratio = hi["variance"] / lo["variance"]
    dt = time.perf_counter() - t0 + build_time
    detail = (f"f_seed {f_seed} (VI bias {vib:.3f}); |bias| l=1 {abs(lo['bias']):.4f} vs "
              f"l=100 {abs(hi['bias']):.4f} - 2SE {2 * se:.4f}; var ratio {ratio:.3%} (<= 10%); "
              f"bias by lambda {[round(rows[l]['bias'], 4) for l in BANANA_LAMBDAS]}; {dt:.0f}s (< 600s)")
    report(7, bias_ok and ratio <= 0.10 and dt < 600, detail)


def test_c08_wiggliness_ordering(banana_pools):
    pools, _ = banana_pools
    t0 = time.perf_counter()
    smooth, wiggly = -2.0, 2.0  # a_w = w ** alpha: negative alpha decays, positive alpha grows
    res = sweep_bias_variance(make_target("banana", {}), BANANA_LAMBDAS, [smooth, wiggly], T=100,
                              reps=200, f_seed=ROOT_SEED, root_seed=ROOT_SEED, pools=pools)
    a_s, a_w = mse_argmin(res, smooth), mse_argmin(res, wiggly)
    mse = {a: [f"{r['mse']:.3g}" for r in res.select(method="psi") if r["alpha"] == a] for a in (smooth, wiggly)}
    dt = time.perf_counter() - t0
    report(8, a_w >= a_s and dt < 900,
           f"argmin lambda wiggly {a_w:g} >= smooth {a_s:g}; MSE smooth {mse[smooth]} "
           f"wiggly {mse[wiggly]}; {dt:.0f}s excluding shared pools (< 900s)")


def test_c09_vi_baseline():
    t0 = time.perf_counter()
    res = fit_advi(make_target("gaussian", {"mean": [3.0], "sd": [2.0]}), rng=make_rng(9))
    mu, sigma = res.theta_star.mu[0], res.theta_star.sigma[0]
    dt = time.perf_counter() - t0
    report(9, abs(mu - 3) <= 0.05 and abs(sigma - 2) <= 0.05 and dt < 10,
           f"mu {mu:.4f}, sigma {sigma:.4f} (within 0.05 of 3, 2), {dt:.1f}s")


CLI_RUNS = {
    "synth-fn": ["--N", "25", "--alpha", "-1"],
    "sample-psi": ["--target", "banana", "--lambda", "10", "--draws", "60", "--warmup", "40",
                   "--chains", "2", "--K", "16"],
    "sample-x": ["--target", "banana", "--draws", "100", "--warmup", "50", "--chains", "2"],
    "fit-vi": ["--target", "banana", "--iters", "300"],
    "sweep": ["--target", "laplace_mixture", "--lambdas", "1,10", "--alphas=-1,1", "--T", "5",
              "--reps", "20", "--N", "10", "--draws", "60", "--warmup", "40", "--chains", "2",
              "--K", "16", "--baselines"],
    "diagnose": ["--target", "laplace_mixture", "--lambda", "3", "--draws", "60", "--warmup", "40",
                 "--chains", "2", "--K", "16", "--T", "5", "--reps", "5"],
}


def test_c10_cli_determinism(tmp_path):
    mismatched, codes = [], {}
    for cmd, args in CLI_RUNS.items():
        outs = []
        for rep in range(2):
            out = tmp_path / f"{cmd}-{rep}"
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                codes[cmd] = run_cli([cmd, *args, "--seed", "7", "--out", str(out)])
            outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
        if not outs[0] or outs[0] != outs[1]:
            mismatched.append(cmd)
    ok = not mismatched and all(c == 0 for c in codes.values())
    report(10, ok, f"{len(CLI_RUNS)} commands, exit codes {set(codes.values())}, "
                   f"non-identical: {mismatched or 'none'}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s", "-p", "no:cacheprovider"]))
