"""CSV/JSON persistence. Floats use shortest round-trip formatting."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .fourier import FourierFunction
from .hmc import Chain
from .mixture import MixtureApprox


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows([fmt(v) for v in row] for row in rows)
    _atomic_write(Path(path), buf.getvalue())
    return Path(path)


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, np.ndarray):
        return _jsonable(o.tolist())
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        o = float(o)
        return o if math.isfinite(o) else repr(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, Path):
        return str(o)
    return o


def write_json(path, obj) -> Path:
    _atomic_write(Path(path), json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return Path(path)


def theta_columns(d: int) -> list[str]:
    return [f"mu_{i + 1}" for i in range(d)] + [f"log_sigma_{i + 1}" for i in range(d)]


def save_mixture(path, m: MixtureApprox) -> Path:
    """Theta rows to CSV plus a ``.json`` provenance sidecar."""
    path = Path(path)
    write_csv(path, theta_columns(m.dim), m.thetas)
    write_json(path.with_suffix(".json"), {"T": m.T, "dim": m.dim, "source": m.source})
    return path


def load_mixture(path) -> MixtureApprox:
    path = Path(path)
    _, rows = read_csv(path)
    side = path.with_suffix(".json")
    source = json.loads(side.read_text())["source"] if side.exists() else {}
    return MixtureApprox(np.array([[float(v) for v in r] for r in rows]), source)


def save_chain(path, chain: Chain, columns: Sequence[str], meta: dict | None = None) -> Path:
    path = Path(path)
    write_csv(path, [*columns, "accepted"],
              ([*row, acc] for row, acc in zip(chain.draws, chain.accepted)))
    write_json(path.with_suffix(".json"), {
        **(meta or {}), "seed": chain.seed, "accept_rate": chain.accept_rate,
        "accept_prob_mean": chain.accept_prob_mean, "divergences": chain.divergences,
        "step_size_final": chain.step_size_final, "n_draws": len(chain.draws),
        "warning": chain.warning,
    })
    return path


def save_fourier(path, f: FourierFunction, meta: dict | None = None) -> Path:
    path = Path(path)
    header = ["omega", "amplitude", "phase", *[f"u_{i + 1}" for i in range(f.dim)]]
    write_csv(path, header, ([w, a, p, *u] for w, a, p, u in
                             zip(f.omegas, f.amplitudes, f.phases, f.directions)))
    write_json(path.with_suffix(".json"), {**(meta or {}), "N": f.N, "alpha": f.alpha, "dim": f.dim,
                                           "convention": "a_w = w ** alpha"})
    return path


def load_fourier(path) -> FourierFunction:
    path = Path(path)
    _, rows = read_csv(path)
    arr = np.array([[float(v) for v in r] for r in rows])
    alpha = json.loads(path.with_suffix(".json").read_text())["alpha"]
    return FourierFunction(arr[:, 0], arr[:, 1], arr[:, 3:], arr[:, 2], float(alpha))
