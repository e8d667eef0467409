"""Command-line entry point: ``stochmix <command> [--config cfg.json] [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import platform
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, ContractViolation
from .experiments import (DEFAULT_GRIDS, ChainConfig, build_psi_pool, parallel_map, pool_from_chains,
                          psi_chains, sweep_bias_variance, x_chains)
from .fourier import synth_fourier
from .io import (load_mixture, save_chain, save_fourier, save_mixture, theta_columns, write_csv,
                 write_json)
from .quadrature import (Grid, expected_kl, kl_variance_replicates, mixture_kl_decomposition,
                         quadrature_log_z, target_log_density_on_grid)
from .seeding import derived_seed, make_rng
from .targets import make_target
from .vi import ViDivergence, fit_advi

log = logging.getLogger("stochmix")

DEFAULT_RESOLUTION = {"laplace_mixture": 0.05, "banana": 0.2}
DIAGNOSE_GRIDS = {
    "laplace_mixture": Grid([(-20.0, 20.0)], 16384),
    "banana": Grid([(-9.0, 9.0), (-5.0, 25.0)], (288, 480)),
}

_CHAIN = {"chains": 4, "draws": 2500, "warmup": 1000, "max_leapfrog": 16, "jitter": 0.5,
          "target_accept": 0.8}

DEFAULTS = {
    "sample-psi": {"target": "banana", "target_params": {}, "lambda": 10.0, "K": 256,
                   "log_sigma_floor": None, "max_pool": 5000, **_CHAIN},
    "sample-x": {"target": "banana", "target_params": {}, **_CHAIN},
    "fit-vi": {"target": "banana", "target_params": {}, "iters": 5000, "step": 0.05, "K_elbo": 8},
    "sweep": {"target": "banana", "target_params": {}, "lambdas": [1.0, 3.0, 10.0, 30.0, 100.0],
              "alphas": [-1.0], "T": 10, "reps": 200, "N": 100, "f_seed": None, "K": 256,
              "max_pool": 5000, "baselines": False, **_CHAIN},
    "diagnose": {"target": "laplace_mixture", "target_params": {}, "pool": None, "lambda": 1.0,
                 "K": 256, "max_pool": 2000, "T": 10, "reps": 50, "resolution": None, **_CHAIN},
    "synth-fn": {"N": 100, "alpha": -1.0, "dim": 2},
}


def _list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


FLAGS = {
    "target": str, "lambda": float, "K": int, "chains": int, "draws": int, "warmup": int,
    "max_leapfrog": int, "jitter": float, "target_accept": float, "max_pool": int,
    "log_sigma_floor": float, "iters": int, "step": float, "K_elbo": int, "lambdas": _list,
    "alphas": _list, "T": int, "reps": int, "N": int, "f_seed": int, "pool": str,
    "resolution": float, "alpha": float, "dim": int,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochmix", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, defaults in DEFAULTS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file of parameters")
        sp.add_argument("--seed", type=int, default=None, help="root seed (default 0)")
        sp.add_argument("--out", type=Path, default=None, help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="overrides STOCHMIX_THREADS")
        for key in defaults:
            if key in FLAGS:
                sp.add_argument(f"--{key.replace('_', '-')}", dest=key, type=FLAGS[key], default=None)
        if "baselines" in defaults:
            sp.add_argument("--baselines", action="store_true", default=None)
    return p


def _line_of(text: str, key: str) -> int | None:
    for i, line in enumerate(text.splitlines(), 1):
        if f'"{key}"' in line:
            return i
    return None


def load_config(path: Path | None, command: str) -> dict:
    if path is None:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    allowed = set(DEFAULTS[command]) | {"seed", "out"}
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"{path}:{_line_of(text, key) or 1}: unknown key {key!r} for {command}")
    return cfg


def resolve(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    cfg.update({"seed": 0, "out": f"out/{args.command}"})
    cfg.update(load_config(args.config, args.command))
    for key in list(cfg):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["out"] = str(cfg["out"])
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError(f"seed must be a 64-bit non-negative integer, got {cfg['seed']!r}")
    return cfg


def _chain_config(cfg: dict) -> ChainConfig:
    kw = {"n_chains": cfg["chains"], "draws": cfg["draws"], "warmup": cfg["warmup"],
          "max_leapfrog": cfg["max_leapfrog"], "jitter": cfg["jitter"],
          "target_accept": cfg["target_accept"]}
    for key in ("K", "max_pool", "log_sigma_floor"):
        if key in cfg:
            kw[key] = cfg[key]
    names = {f.name for f in fields(ChainConfig)}
    return ChainConfig(**{k: v for k, v in kw.items() if k in names})


def _target(cfg):
    if not isinstance(cfg.get("target_params", {}), dict):
        raise ConfigError("target_params must be an object")
    return make_target(cfg["target"], cfg.get("target_params") or {})


# -- commands ---------------------------------------------------------------

def cmd_sample_psi(cfg, out: Path) -> list[Path]:
    target = _target(cfg)
    ccfg = _chain_config(cfg)
    chains = psi_chains(target, cfg["lambda"], ccfg, cfg["seed"])
    cols = theta_columns(target.dim)
    files = [save_chain(out / f"chain_{i}.csv", c, cols, {"chain": i, "lambda": cfg["lambda"]})
             for i, c in enumerate(chains)]
    pool = pool_from_chains(chains, ccfg.max_pool, target=target.name, lam=cfg["lambda"],
                            root_seed=cfg["seed"])
    files.append(save_mixture(out / "pool.csv", pool))
    return files


def cmd_sample_x(cfg, out: Path) -> list[Path]:
    target = _target(cfg)
    chains = x_chains(target, _chain_config(cfg), cfg["seed"])
    cols = [f"x_{i + 1}" for i in range(target.dim)]
    return [save_chain(out / f"chain_{i}.csv", c, cols, {"chain": i}) for i, c in enumerate(chains)]


def cmd_fit_vi(cfg, out: Path) -> list[Path]:
    target = _target(cfg)
    try:
        res = fit_advi(target, cfg["iters"], cfg["step"], cfg["K_elbo"], make_rng(cfg["seed"], "vi"))
    except ViDivergence as exc:
        write_csv(out / "elbo.csv", ["iteration", "elbo"], enumerate(exc.elbo_trace))
        raise ContractViolation(str(exc)) from exc
    files = [write_csv(out / "vi.csv", theta_columns(target.dim), [res.theta_star.to_vector()]),
             write_csv(out / "elbo.csv", ["iteration", "elbo"], enumerate(res.elbo_trace))]
    files.append(write_json(out / "vi.json", res.metadata))
    return files


SWEEP_COLUMNS = ["method", "lambda", "alpha", "T", "bias", "variance", "mse", "bias_se",
                 "n_replicates", "truth", "seed", "pool_size", "warning"]


def cmd_sweep(cfg, out: Path) -> list[Path]:
    target = _target(cfg)
    f_seed = cfg["seed"] if cfg["f_seed"] is None else cfg["f_seed"]
    res = sweep_bias_variance(target, cfg["lambdas"], cfg["alphas"], cfg["T"], cfg["reps"], f_seed,
                              _chain_config(cfg), cfg["seed"], N=cfg["N"],
                              baselines=bool(cfg["baselines"]))
    files = [write_csv(out / "sweep.csv", SWEEP_COLUMNS,
                       ([r[c] for c in SWEEP_COLUMNS] for r in res.rows))]
    files.append(write_json(out / "sweep.json", res.manifest))
    return files


DIAGNOSE_COLUMNS = ["lambda", "T", "resolution", "expected_kl_raw", "expected_kl", "kl_bias",
                    "mutual_information", "kl_variance", "kl_variance_se", "pool_size"]


def cmd_diagnose(cfg, out: Path) -> list[Path]:
    """(expected KL, MI) pair plus KL bias and KL variance for one pool.

    ``expected_kl_raw`` is unsmoothed (Gauss-Hermite per component); the
    other KL columns use densities smoothed at ``resolution``, for which
    mutual_information = expected_kl - kl_bias holds exactly.
    """
    target = _target(cfg)
    if target.dim > 2:
        raise ContractViolation("KL diagnostics are limited to 1D and 2D targets")
    grid = DIAGNOSE_GRIDS.get(target.name)
    if grid is None:
        raise ConfigError(f"no diagnostic grid for target {target.name!r}")
    res = cfg["resolution"] if cfg["resolution"] is not None else DEFAULT_RESOLUTION.get(target.name, 0.1)
    if cfg["pool"]:
        pool = load_mixture(cfg["pool"])
        lam = pool.source.get("lam", cfg["lambda"])
    else:
        lam = cfg["lambda"]
        pool = build_psi_pool(target, lam, _chain_config(cfg), cfg["seed"])
        save_mixture(out / "pool.csv", pool)
    raw = expected_kl(pool, target, quadrature_log_z(target, grid))
    log_p = target_log_density_on_grid(target, grid, res)
    parts = mixture_kl_decomposition(pool, target, grid, res, log_p=log_p)
    kv = kl_variance_replicates(pool, cfg["T"], cfg["reps"], grid,
                                make_rng(cfg["seed"], "kl-variance", lam), res)
    row = [lam, cfg["T"], res, raw, parts["expected_kl"], parts["kl"],
           parts["expected_kl"] - parts["kl"], kv.mean(),
           kv.std(ddof=1) / np.sqrt(kv.size) if kv.size > 1 else float("nan"), pool.T]
    return [write_csv(out / "diagnose.csv", DIAGNOSE_COLUMNS, [row])]


def cmd_synth_fn(cfg, out: Path) -> list[Path]:
    f = synth_fourier(cfg["N"], cfg["alpha"], cfg["dim"], make_rng(cfg["seed"], "fourier"))
    return [save_fourier(out / "fourier.csv", f, {"seed": cfg["seed"]})]


COMMANDS = {"sample-psi": cmd_sample_psi, "sample-x": cmd_sample_x, "fit-vi": cmd_fit_vi,
            "sweep": cmd_sweep, "diagnose": cmd_diagnose, "synth-fn": cmd_synth_fn}


def run_cli(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.threads is not None:
            import os
            os.environ["STOCHMIX_THREADS"] = str(args.threads)
        cfg = resolve(args)
        out = Path(cfg["out"])
        files = COMMANDS[args.command](cfg, out)
        write_json(out / "manifest.json", {
            "command": args.command, "config": cfg, "outputs": sorted(str(f.name) for f in files),
            "metadata": {"timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "version": __version__,
                         "python": platform.python_version(), "numpy": np.__version__},
        })
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ContractViolation as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return 1
    for f in files:
        print(f)
    return 0


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
