"""Built-in instances and the query-scaling sweep."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from .estimation import (
    Prior,
    aae_estimate,
    choose_mu,
    classical_baseline,
    classical_sample_count,
    standard_ae_estimate,
)
from .oracles import ReflectionOracle, StatePrepOracle

SWEEP_METHODS = ("aae", "standard_ae", "classical")
CSV_COLUMNS = ("epsilon", "method", "queries", "abs_error", "seed")


def single_qubit_instance(p: float) -> tuple[StatePrepOracle, ReflectionOracle]:
    """``sqrt(1-p)|0> + sqrt(p)|1>`` with ``Pi = |1><1|``."""
    if not 0 <= p <= 1:
        raise ValueError(f"probability {p} outside [0, 1]")
    prep = StatePrepOracle.from_state(np.array([math.sqrt(1 - p), math.sqrt(p)], dtype=complex))
    return prep, ReflectionOracle.diagonal(np.array([0.0, 1.0]))


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit stream seed for sweep point ``index``."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def sweep_point(epsilon: float, seed: int, failure: float = 0.05, backend: str = "qpe"
                ) -> list[dict]:
    """One grid point: prior ``P0 = Theta(eps)``, true probability ``P0/2``.

    ``mu`` is the largest integer with ``P0(mu) >= 2 eps``.  Standard AE runs
    the unboosted walk to tolerance ``eps``; the classical baseline takes the
    Chebyshev sample count for a probability bounded by ``P0``.
    """
    mu = choose_mu(min(2 * epsilon, 0.25))
    prior = Prior(mu, failure)
    p = prior.p0 / 2
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63, size=3)
    rows = []

    prep, r_pi = single_qubit_instance(p)
    rep = aae_estimate(prep, r_pi, prior, epsilon, backend=backend, seed=int(seeds[0]))
    rows.append(("aae", rep.total_queries, abs(rep.estimate - p)))

    prep, r_pi = single_qubit_instance(p)
    rep = standard_ae_estimate(prep, r_pi, epsilon, failure, backend=backend, seed=int(seeds[1]))
    rows.append(("standard_ae", rep.total_queries, abs(rep.estimate - p)))

    prep, r_pi = single_qubit_instance(p)
    n = classical_sample_count(prior.p0, epsilon, failure)
    est = classical_baseline(prep, r_pi, n, seed=int(seeds[2]))
    rows.append(("classical", sum(prep.queries().values()), abs(est - p)))

    return [{"epsilon": epsilon, "method": m, "queries": int(q), "abs_error": float(e), "seed": seed}
            for m, q, e in rows]


def _point(args: tuple) -> list[dict]:
    return sweep_point(*args)


def run_sweep(grid: Sequence[float], seed: int, failure: float = 0.05, backend: str = "qpe",
              workers: int = 1) -> list[dict]:
    """Rows for every grid point, ordered by point index regardless of ``workers``."""
    if not grid:
        raise ValueError("sweep grid is empty")
    jobs = [(float(eps), derive_seed(seed, i), failure, backend) for i, eps in enumerate(grid)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_point, jobs))
    else:
        chunks = [_point(j) for j in jobs]
    return [row for chunk in chunks for row in chunk]


def loglog_slope(rows: Sequence[dict], method: str) -> float:
    """Least-squares slope of ``log(queries)`` against ``log(1/epsilon)``."""
    pts = [(math.log(1 / r["epsilon"]), math.log(r["queries"])) for r in rows if r["method"] == method]
    if len(pts) < 2:
        raise ValueError(f"need at least two {method} rows for a slope")
    x, y = np.array(pts).T
    return float(np.polyfit(x, y, 1)[0])


def default_grid() -> list[float]:
    return [2.0**-k for k in range(4, 13)]
