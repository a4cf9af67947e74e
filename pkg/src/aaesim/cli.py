"""Command-line experiment runner.

Usage::

    aaesim {aae,operator,energy-diff,sweep,weights} [--config FILE] [--out DIR]
           [--seed N] [--workers N] [--backend {qpe,exact}]

``AAESIM_OUT`` and ``AAESIM_WORKERS`` override the defaults for ``--out``
and ``--workers``; explicit flags win over both.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .errors import EstimationRegimeError, GapError, PriorViolationError
from .estimation import (
    ClassicalPriorSet,
    GroupPriors,
    Prior,
    aae_estimate,
    estimate_with_classical_priors,
    exact_priors,
)
from .experiments import CSV_COLUMNS, default_grid, derive_seed, run_sweep, single_qubit_instance
from .fermion import (
    OneBodyOperator,
    ground_state_prep,
    projector_decomposition,
    read_one_body_matrix,
    toy_path,
)
from .quadrature import energy_difference, newton_cotes_rule
from .statevector import exact_eigensolve

logger = logging.getLogger("aaesim")

MODES = ("aae", "operator", "energy-diff", "sweep", "weights")
BACKEND_FLAGS = {"qpe": "qpe", "exact": "exact_subspace"}
EXIT_OK, EXIT_INVALID, EXIT_PIPELINE = 0, 1, 2


class ConfigError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}")


# -- config schema -----------------------------------------------------------
# Each schema maps a key to (validator, default).  A nested dict schema is a
# dict itself.

def _num(lo: float | None = None, hi: float | None = None, open_lo: bool = False):
    def check(path: str, v: Any) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(path, f"expected a number, got {v!r}")
        if lo is not None and (v < lo or (open_lo and v == lo)):
            raise ConfigError(path, f"must be {'>' if open_lo else '>='} {lo}")
        if hi is not None and v > hi:
            raise ConfigError(path, f"must be <= {hi}")
        return float(v)
    return check


def _int(lo: int | None = None):
    def check(path: str, v: Any) -> int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(path, f"expected an integer, got {v!r}")
        if lo is not None and v < lo:
            raise ConfigError(path, f"must be >= {lo}")
        return v
    return check


def _choice(*options: str):
    def check(path: str, v: Any) -> str:
        if v not in options:
            raise ConfigError(path, f"expected one of {list(options)}, got {v!r}")
        return v
    return check


def _file(path: str, v: Any) -> str:
    if not isinstance(v, str) or not Path(v).is_file():
        raise ConfigError(path, f"file not found: {v!r}")
    return v


def _toy_qubits(path: str, v: Any) -> int:
    if v not in (2, 3) or isinstance(v, bool):
        raise ConfigError(path, f"toy systems have 2 or 3 qubits, got {v!r}")
    return v


def _eps_list(path: str, v: Any) -> list[float]:
    if not isinstance(v, list) or not v:
        raise ConfigError(path, "expected a non-empty list of positive numbers")
    return [_num(0, open_lo=True)(f"{path}[{i}]", x) for i, x in enumerate(v)]


def _priors(path: str, v: Any) -> Any:
    if v == "exact":
        return v
    if not isinstance(v, dict) or set(v) - {"mus", "classical"} or "mus" not in v:
        raise ConfigError(path, 'expected "exact" or {"mus": [...], "classical": [...]}')
    mus = v["mus"]
    if not isinstance(mus, list):
        raise ConfigError(f"{path}.mus", "expected a list")
    for i, mu in enumerate(mus):
        if mu is not None:
            _int(1)(f"{path}.mus[{i}]", mu)
    classical = v.get("classical", [{} for _ in mus])
    if not isinstance(classical, list) or len(classical) != len(mus):
        raise ConfigError(f"{path}.classical", "expected one mapping per group")
    parsed = []
    for j, est in enumerate(classical):
        if not isinstance(est, dict):
            raise ConfigError(f"{path}.classical[{j}]", "expected a mapping index -> value")
        try:
            parsed.append({int(k): float(c) for k, c in est.items()})
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.classical[{j}]", "keys must be integers, values numbers") from None
    return {"mus": mus, "classical": parsed}


COMMON = {
    "mode": (_choice(*MODES), None),
    "seed": (_int(0), 0),
    "backend": (_choice(*BACKEND_FLAGS), "qpe"),
    "failure": (_num(0, 1, open_lo=True), 0.05),
    "workers": (_int(1), 1),
}

SCHEMAS: dict[str, dict] = {
    "aae": {
        "epsilon": (_num(0, open_lo=True), 5e-3),
        "system": {"p": (_num(0, 1), 0.2)},
        "prior": {"mu": (_int(1), 1)},
        "delta_floor": (_num(0, 1, open_lo=True), 0.5),
    },
    "operator": {
        "epsilon": (_num(0, open_lo=True), 1e-2),
        "operator": {"file": (_file, None), "random_seed": (_int(0), 0)},
        "system": {"toy_qubits": (_toy_qubits, 2), "coupling": (_num(0), 0.05),
                   "x": (_num(-1, 1), 0.0)},
        "priors": (_priors, "exact"),
    },
    "energy-diff": {
        "epsilon": (_num(0, open_lo=True), 1e-3),
        "path": {"toy_qubits": (_toy_qubits, 2), "coupling": (_num(0), 0.02)},
        "node_priors": (_choice("propagate", "exact"), "propagate"),
    },
    "sweep": {
        "grid": (_eps_list, None),
    },
    "weights": {
        "n": (_int(1), 3),
    },
}


def _validate(schema: dict, data: Any, path: str) -> dict:
    if not isinstance(data, dict):
        raise ConfigError(path or "<root>", "expected a mapping")
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    out = {}
    for key, entry in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(entry, dict):
            out[key] = _validate(entry, data.get(key, {}), where)
            continue
        check, default = entry
        if key in data:
            out[key] = check(where, data[key])
        else:
            out[key] = default
    return out


@dataclass
class ExperimentConfig:
    mode: str
    seed: int = 0
    backend: str = "qpe"
    failure: float = 0.05
    workers: int = 1
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict, mode: str | None = None) -> ExperimentConfig:
        data = dict(data)
        if mode is not None:
            if data.get("mode", mode) != mode:
                raise ConfigError("mode", f"config says {data['mode']!r}, command line says {mode!r}")
            data["mode"] = mode
        if "mode" not in data:
            raise ConfigError("mode", "missing required key")
        m = _choice(*MODES)("mode", data["mode"])
        common = {k: data.pop(k) for k in list(data) if k in COMMON}
        base = _validate(COMMON, common, "")
        params = _validate(SCHEMAS[m], data, "")
        if m == "operator" and params["operator"]["file"] is not None:
            n = read_one_body_matrix(params["operator"]["file"]).n_orbitals
            if n != params["system"]["toy_qubits"]:
                raise ConfigError("operator.file", f"operator has {n} orbitals, system has "
                                  f"{params['system']['toy_qubits']} qubits")
        return cls(mode=m, seed=base["seed"], backend=base["backend"], failure=base["failure"],
                   workers=base["workers"], params=params)

    def as_dict(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, "backend": self.backend,
                "failure": self.failure, "workers": self.workers, **self.params}


@dataclass
class ResultRecord:
    experiment_id: str
    mode: str
    estimate: Any
    true_value: float | None
    abs_error: float | None
    target_epsilon: float | None
    queries: dict[str, int]
    repetitions: int
    wall_seconds: float
    seed: int
    version: str
    details: dict = field(default_factory=dict)
    error: dict | None = None

    def to_json(self, timing: bool = False) -> str:
        d = asdict(self)
        if not timing:
            d.pop("wall_seconds")
        return json.dumps(_plain(d), sort_keys=True, allow_nan=False)


def _plain(o: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple, np.ndarray)):
        return [_plain(v) for v in o]
    if isinstance(o, (np.integer, bool)):
        return o.item() if isinstance(o, np.integer) else o
    if isinstance(o, (float, np.floating)):
        return float(o) if math.isfinite(o) else None
    return o


def _version() -> str:
    return f"aaesim-{__version__}"


def _experiment_id(config: ExperimentConfig, index: int) -> str:
    digest = hashlib.sha1(json.dumps(config.as_dict(), sort_keys=True).encode()).hexdigest()[:10]
    return f"{config.mode}-{digest}-{index}"


def _record(config: ExperimentConfig, index: int, t0: float, **kw) -> ResultRecord:
    true = kw.get("true_value")
    est = kw.get("estimate")
    abs_err = abs(est - true) if true is not None and isinstance(est, float) else None
    kw.setdefault("queries", {})
    kw.setdefault("repetitions", 0)
    kw.setdefault("target_epsilon", None)
    kw.setdefault("true_value", None)
    return ResultRecord(experiment_id=_experiment_id(config, index), mode=config.mode,
                        abs_error=abs_err, wall_seconds=time.perf_counter() - t0,
                        seed=config.seed, version=_version(), **kw)


# -- pipelines ---------------------------------------------------------------


def _run_aae(config: ExperimentConfig) -> list[ResultRecord]:
    t0 = time.perf_counter()
    p = config.params["system"]["p"]
    prior = Prior(config.params["prior"]["mu"], config.failure)
    prep, r_pi = single_qubit_instance(p)
    rep = aae_estimate(prep, r_pi, prior, config.params["epsilon"], BACKEND_FLAGS[config.backend],
                       seed=derive_seed(config.seed, 0), delta_floor=config.params["delta_floor"])
    return [_record(config, 0, t0, estimate=rep.estimate, true_value=p,
                    target_epsilon=rep.target_epsilon, queries=rep.queries,
                    repetitions=rep.repetitions,
                    details={"mu": rep.mu, "p0": rep.p0, "measured_p1": rep.measured_p1,
                             "delta_hat": rep.delta_hat, "eps_prime": rep.eps_prime,
                             "phase_bits": rep.phase_bits})]


def _run_operator(config: ExperimentConfig) -> list[ResultRecord]:
    t0 = time.perf_counter()
    prm = config.params
    sysp = prm["system"]
    n = sysp["toy_qubits"]
    h = toy_path(n, sysp["coupling"]).hamiltonian(sysp["x"])
    if prm["operator"]["file"] is not None:
        op = read_one_body_matrix(prm["operator"]["file"])
    else:
        rng = np.random.default_rng(prm["operator"]["random_seed"])
        a = rng.normal(size=(n, n))
        op = OneBodyOperator((a + a.T) / 2)
    prep, model = ground_state_prep(h)
    psi = prep.state()
    psum = projector_decomposition(op)
    if prm["priors"] == "exact":
        classical, priors = exact_priors(psum, psi, prm["epsilon"])
    else:
        classical = ClassicalPriorSet(tuple(prm["priors"]["classical"]))
        priors = GroupPriors(tuple(prm["priors"]["mus"]))
    rep = estimate_with_classical_priors(psum, classical, priors, prep, prm["epsilon"],
                                         config.failure, BACKEND_FLAGS[config.backend],
                                         seed=derive_seed(config.seed, 0))
    return [_record(config, 0, t0, estimate=rep.estimate, true_value=psum.expectation(psi),
                    target_epsilon=prm["epsilon"], queries=rep.queries,
                    repetitions=rep.repetitions,
                    details={"groups": rep.groups, "state_prep": model.as_dict()})]


def _run_energy_diff(config: ExperimentConfig) -> list[ResultRecord]:
    t0 = time.perf_counter()
    prm = config.params
    path = toy_path(prm["path"]["toy_qubits"], prm["path"]["coupling"])
    e_start = exact_eigensolve(path.hamiltonian(-1.0)).ground_energy
    e_end = exact_eigensolve(path.hamiltonian(1.0)).ground_energy
    rep = energy_difference(path, e_start, prm["epsilon"], config.failure, prm["node_priors"],
                            backend=BACKEND_FLAGS[config.backend], seed=derive_seed(config.seed, 0))
    reps = sum(r.repetitions for r in rep.node_reports)
    return [_record(config, 0, t0, estimate=rep.estimate, true_value=e_end,
                    target_epsilon=prm["epsilon"], queries=rep.total_queries, repetitions=reps,
                    details={"rule_order": rep.rule.n, "node_tolerance": rep.node_tolerance,
                             "truncation_bound": rep.truncation_bound, "gamma_cap": rep.gamma_cap,
                             "node_values": rep.node_values,
                             "prior_sources": [r.metadata.get("prior_source", "exact_start")
                                               for r in rep.node_reports]})]


def _run_weights(config: ExperimentConfig) -> list[ResultRecord]:
    t0 = time.perf_counter()
    rule = newton_cotes_rule(config.params["n"])
    return [_record(config, 0, t0, estimate=[float(w) for w in rule.weights],
                    details={"nodes": [float(x) for x in rule.nodes],
                             "abs_weight_sum": rule.abs_weight_sum})]


PIPELINES: dict[str, Callable[[ExperimentConfig], list[ResultRecord]]] = {
    "aae": _run_aae,
    "operator": _run_operator,
    "energy-diff": _run_energy_diff,
    "weights": _run_weights,
}


def run(config: ExperimentConfig) -> list[ResultRecord]:
    """Execute a non-sweep configuration; one record per estimation."""
    if config.mode == "sweep":
        raise ValueError("use sweep() for sweep configurations")
    return PIPELINES[config.mode](config)


def sweep(config: ExperimentConfig) -> list[dict]:
    grid = config.params["grid"] or default_grid()
    return run_sweep(grid, config.seed, config.failure, BACKEND_FLAGS[config.backend],
                     config.workers)


def error_record(config: ExperimentConfig, exc: Exception) -> ResultRecord:
    err = {"type": type(exc).__name__, "message": str(exc)}
    for attr in ("measured", "group", "node", "x"):
        if getattr(exc, attr, None) is not None:
            err[attr] = getattr(exc, attr)
    return _record(config, 0, time.perf_counter(), estimate=None, error=err)


# -- output ------------------------------------------------------------------


def write_outputs(out: Path, config: ExperimentConfig, records: list[ResultRecord] | None,
                  rows: list[dict] | None, status: int) -> None:
    out.mkdir(parents=True, exist_ok=True)
    files = []
    if records is not None:
        (out / "records.ndjson").write_text("".join(r.to_json() + "\n" for r in records))
        (out / "timings.ndjson").write_text("".join(
            json.dumps({"experiment_id": r.experiment_id, "wall_seconds": r.wall_seconds}) + "\n"
            for r in records))
        files += ["records.ndjson", "timings.ndjson"]
    if rows is not None:
        with open(out / "sweep.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow({k: (repr(row[k]) if isinstance(row[k], float) else row[k])
                                 for k in CSV_COLUMNS})
        files.append("sweep.csv")
    manifest = {"version": _version(), "config": config.as_dict(), "files": files,
                "exit_code": status,
                "records": len(records) if records is not None else len(rows or [])}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aaesim", description=__doc__.split("\n")[0])
    parser.add_argument("mode", choices=MODES)
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument("--out", type=Path, help="output directory (env AAESIM_OUT)")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--workers", type=int, help="sweep worker processes (env AAESIM_WORKERS)")
    parser.add_argument("--backend", choices=tuple(BACKEND_FLAGS))
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config is not None:
        try:
            data = json.loads(args.config.read_text())
        except FileNotFoundError:
            raise ConfigError("--config", f"file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("<root>", "expected a mapping")
    if args.seed is not None:
        data["seed"] = args.seed
    if args.backend is not None:
        data["backend"] = args.backend
    workers = args.workers
    if workers is None and os.environ.get("AAESIM_WORKERS"):
        try:
            workers = int(os.environ["AAESIM_WORKERS"])
        except ValueError:
            raise ConfigError("AAESIM_WORKERS", "expected an integer") from None
    if workers is not None:
        data["workers"] = workers
    return ExperimentConfig.from_dict(data, args.mode)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out or Path(os.environ.get("AAESIM_OUT", "aaesim-out"))
    try:
        config = load_config(args)
    except ConfigError as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_INVALID

    records, rows, status = None, None, EXIT_OK
    try:
        if config.mode == "sweep":
            rows = sweep(config)
        else:
            records = run(config)
    except (PriorViolationError, GapError, EstimationRegimeError) as exc:
        logger.error("%s", exc)
        records, status = [error_record(config, exc)], EXIT_PIPELINE
    write_outputs(out, config, records, rows, status)
    if records is not None:
        for r in records:
            print(r.to_json())
    else:
        print(f"wrote {len(rows)} sweep rows to {out / 'sweep.csv'}")
    return status


if __name__ == "__main__":
    raise SystemExit(main())
