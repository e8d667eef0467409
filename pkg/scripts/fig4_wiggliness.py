"""MSE across lambda for integrands of different smoothness (banana, T=100).

Under a_w = w ** alpha, alpha < 0 is smooth and alpha > 0 is wiggly.
"""
import argparse
from pathlib import Path

from stochmix.cli import SWEEP_COLUMNS
from stochmix.experiments import ChainConfig, mse_argmin, sweep_bias_variance
from stochmix.io import write_csv, write_json
from stochmix.targets import make_target


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=Path("out/fig4"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--T", type=int, default=100)
    ap.add_argument("--reps", type=int, default=200)
    ap.add_argument("--alphas", default="-2,-1,0,1,2")
    args = ap.parse_args()

    alphas = [float(a) for a in args.alphas.split(",")]
    res = sweep_bias_variance(make_target("banana", {}), [1.0, 3.0, 10.0, 30.0, 100.0], alphas,
                              args.T, args.reps, args.seed, ChainConfig(), args.seed)
    write_csv(args.out / "sweep.csv", SWEEP_COLUMNS, ([r[c] for c in SWEEP_COLUMNS] for r in res.rows))
    write_json(args.out / "sweep.json", res.manifest)
    for a in alphas:
        print(f"alpha={a:+g}: MSE-minimizing lambda = {mse_argmin(res, a):g}")


if __name__ == "__main__":
    main()
