"""KL bias and KL variance of psi pools on the Laplace mixture, plus (expected KL, MI) pairs."""
import argparse
from pathlib import Path

import numpy as np

from stochmix.experiments import DEFAULT_GRIDS, ChainConfig, build_psi_pool, split_by_chain
from stochmix.io import write_csv
from stochmix.quadrature import (expected_kl, kl_bias_estimate, kl_variance_replicates,
                                 mixture_kl_decomposition, quadrature_log_z,
                                 target_log_density_on_grid)
from stochmix.seeding import make_rng
from stochmix.targets import make_target

COLUMNS = ["lambda", "resolution", "expected_kl_raw", "expected_kl", "kl_bias", "kl_bias_se",
           "mutual_information", "kl_variance", "kl_variance_se"]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/kl"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--resolution", type=float, default=0.05)
    ap.add_argument("--T", type=int, default=10)
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    target = make_target("laplace_mixture", {})
    grid = DEFAULT_GRIDS[target.name]
    log_z = quadrature_log_z(target, grid)
    log_p = target_log_density_on_grid(target, grid, args.resolution)
    cfg = ChainConfig(n_chains=4, draws=500, max_pool=2000)
    rows = []
    for lam in (1.0, 3.0, 10.0, 30.0, 100.0):
        pool = build_psi_pool(target, lam, cfg, args.seed)
        raw = expected_kl(pool, target, log_z)
        parts = mixture_kl_decomposition(pool, target, grid, args.resolution, log_p=log_p)
        e_kl, kb = parts["expected_kl"], parts["kl"]
        per_chain = [kl_bias_estimate(p, target, grid, args.resolution, log_p=log_p) for p in split_by_chain(pool)]
        kv = kl_variance_replicates(pool, args.T, args.reps, grid, make_rng(args.seed, "klvar", lam),
                                    args.resolution)
        rows.append([lam, args.resolution, raw, e_kl, kb, np.std(per_chain, ddof=1) / np.sqrt(len(per_chain)), e_kl - kb,
                     kv.mean(), kv.std(ddof=1) / np.sqrt(kv.size)])
        print(f"lambda={lam:>5}: E[KL] raw={raw:8.3f} smoothed={e_kl:.3f} MI={e_kl - kb:.3f} KL-bias={kb:.4f} KL-var={kv.mean():.4f}")
    write_csv(args.out / "kl_directionality.csv", COLUMNS, rows)


if __name__ == "__main__":
    main()
