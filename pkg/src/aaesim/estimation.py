"""Amplitude estimation backends and amplified amplitude estimation (AAE).

AAE estimates a probability ``p = <psi|Pi|psi>`` that is known to lie below
``P0 = sin^2(pi / (2(2 mu + 1)))``.  It boosts the state with ``mu`` walk
steps, runs amplitude estimation on the boosted walk and inverts the boost
classically.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .errors import EstimationRegimeError, PriorViolationError, ResourceLimitError
from .oracles import (
    EIGENPHASE_FACTOR,
    ProjectorGroup,
    ProjectorSum,
    ReflectionOracle,
    StatePrepOracle,
    WalkOperator,
    beta_norms,
    invariant_plane,
    make_boosted_walk,
    merge_queries,
    sqrt_encoding,
    success_probability_instance,
)
from .statevector import MAX_QUBITS, StateVector, apply_unitary

logger = logging.getLogger(__name__)

Backend = Literal["qpe", "exact_subspace"]
BACKENDS = ("qpe", "exact_subspace")

PRIOR_VIOLATION_TOL = 1e-10


@dataclass(frozen=True)
class QPEConfig:
    """Sizing of the phase-estimation backend.

    ``t = ceil(log2(1/eps')) + extra_bits`` phase bits and the median of
    ``r = ceil(repetition_factor * ln(1/failure))`` independent runs.
    """

    extra_bits: int = 3
    repetition_factor: float = 8.0
    max_qubits: int = MAX_QUBITS

    def sizing(self, eps_prime: float, failure: float) -> tuple[int, int]:
        t = math.ceil(math.log2(1.0 / eps_prime)) + self.extra_bits
        r = max(1, math.ceil(self.repetition_factor * math.log(1.0 / failure)))
        return t, r


DEFAULT_QPE = QPEConfig()


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def prior_p0(mu: int) -> float:
    return math.sin(math.pi / (2 * (2 * mu + 1))) ** 2


def choose_mu(p_bar: float) -> int:
    """Largest ``mu >= 1`` whose canonical bound ``P0(mu)`` still covers ``p_bar``."""
    if not 0 < p_bar <= 0.25:
        raise ValueError(f"prior bound {p_bar} must lie in (0, 1/4]")
    mu = max(1, math.floor((math.pi / (2 * math.asin(math.sqrt(p_bar))) - 1) / 2))
    while mu > 1 and prior_p0(mu) < p_bar:
        mu -= 1
    while prior_p0(mu + 1) >= p_bar:
        mu += 1
    return mu


@dataclass(frozen=True)
class Prior:
    """Canonical prior ``P0 = sin^2(pi / (2(2 mu + 1)))`` plus a failure budget."""

    mu: int
    failure_budget: float = 0.05

    def __post_init__(self) -> None:
        if int(self.mu) != self.mu or self.mu < 1:
            raise ValueError(f"mu must be an integer >= 1, got {self.mu}")
        if not 0 < self.failure_budget < 1:
            raise ValueError("failure budget must lie in (0, 1)")

    @property
    def p0(self) -> float:
        return prior_p0(self.mu)

    @classmethod
    def covering(cls, p_bar: float, failure_budget: float = 0.05) -> Prior:
        return cls(choose_mu(p_bar), failure_budget)


@dataclass(frozen=True)
class GroupPriors:
    """One ``mu`` per group of a projector sum (``None`` for groups that need no AAE)."""

    mus: tuple[int | None, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "mus", tuple(self.mus))
        for mu in self.mus:
            if mu is not None and (int(mu) != mu or mu < 1):
                raise ValueError(f"group mu must be an integer >= 1, got {mu}")

    def __len__(self) -> int:
        return len(self.mus)

    def p0(self, j: int) -> float:
        return prior_p0(self.mus[j])

    def prior(self, j: int, failure: float) -> Prior:
        mu = self.mus[j]
        if mu is None:
            raise PriorViolationError("no prior supplied", group=j)
        return Prior(mu, failure)


@dataclass(frozen=True)
class ClassicalPriorSet:
    """Classical estimates ``C_{j,i}`` for a subset ``I_j`` of each group's projectors.

    ``estimates[j]`` maps projector index ``i`` (within group ``j``) to ``C_{j,i}``.
    ``tolerances`` optionally records the ``eps~_j`` the estimates were produced
    for; it is checked against :func:`classical_tolerances` when used.
    """

    estimates: tuple[dict[int, float], ...]
    tolerances: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "estimates", tuple(dict(e) for e in self.estimates))
        if self.tolerances is not None:
            object.__setattr__(self, "tolerances", tuple(self.tolerances))

    @classmethod
    def empty(cls, n_groups: int) -> ClassicalPriorSet:
        return cls(tuple({} for _ in range(n_groups)))

    def index_sets(self) -> list[set[int]]:
        return [set(e) for e in self.estimates]


def group_budgets(psum: ProjectorSum, epsilon: float) -> list[float]:
    """Per-group error budgets ``eps_j = (sum_k sqrt(beta_jk))^2 eps / ||beta||_{1,1/2}``."""
    _, n1h = beta_norms(psum)
    if n1h == 0:
        return [0.0 for _ in psum.groups]
    return [g.normalization * epsilon / n1h for g in psum.groups]


def classical_tolerances(psum: ProjectorSum, index_sets: Sequence[set[int]], epsilon: float
                         ) -> list[float]:
    """``eps~_j = eps_j / (2 sum_{i in I_j} beta_ji)`` (``inf`` when ``I_j`` is empty)."""
    out = []
    for g, eps_j, idx in zip(psum.groups, group_budgets(psum, epsilon), index_sets):
        b = float(sum(g.betas[i] for i in idx))
        out.append(eps_j / (2 * b) if b > 0 else math.inf)
    return out


@dataclass
class EstimateReport:
    estimate: float
    target_epsilon: float
    measured_p1: float | None = None
    delta_hat: float | None = None
    queries: dict[str, int] = field(default_factory=dict)
    repetitions: int = 0
    backend: str = "qpe"
    mu: int | None = None
    p0: float | None = None
    eps_prime: float | None = None
    phase_bits: int | None = None
    groups: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def total_queries(self) -> int:
        return int(sum(self.queries.values()))


# -- baselines --------------------------------------------------------------


def classical_baseline(prep: StatePrepOracle, r_pi: ReflectionOracle, n_samples: int, seed=None
                       ) -> float:
    """Sample mean of ``n_samples`` simulated projective measurements of ``Pi``."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    psi = prep.state()
    p = float(np.vdot(psi, r_pi.projector @ psi).real)
    p = min(max(p, 0.0), 1.0)
    prep.charge(n_samples)
    hits = _rng(seed).binomial(n_samples, p)
    return hits / n_samples


def classical_sample_count(p_bar: float, epsilon: float, failure: float) -> int:
    """Chebyshev sample count for an ``epsilon``-accurate mean when ``p <= p_bar <= 1/2``."""
    return max(1, math.ceil(p_bar * (1 - p_bar) / (failure * epsilon**2)))


# -- amplitude estimation ---------------------------------------------------


def _phase_to_probability(phase: float) -> float:
    """Probability from an eigenphase in units of a full turn."""
    theta = 2 * math.pi * phase / EIGENPHASE_FACTOR
    return math.sin(theta) ** 2


def qpe_outcome_distribution(restriction: np.ndarray, t: int, max_qubits: int = MAX_QUBITS
                             ) -> np.ndarray:
    """Textbook phase estimation of a 2x2 unitary on ``t`` ancillas, started on ``e_0``.

    The circuit is simulated on ``t + 1`` qubits (ancillas 0..t-1, target t):
    Hadamards, controlled powers ``U^(2^k)`` on ancilla ``k``, inverse QFT.
    Returns the Born distribution over the ancilla register.
    """
    n = t + 1
    if n > max_qubits:
        raise ResourceLimitError(f"phase estimation needs {n} qubits, cap is {max_qubits}")
    M = 2**t
    evals, evecs = np.linalg.eig(restriction)
    evals = evals / np.abs(evals)
    inv = np.linalg.inv(evecs)
    amps = np.zeros(2 * M, dtype=complex)
    amps[:M] = 1 / math.sqrt(M)
    state = StateVector(n, amps)
    for k in range(t):
        power = evecs @ np.diag(evals ** (2**k)) @ inv
        state = apply_unitary(state, power, targets=[t], controls=[k])
    grid = state.amplitudes.reshape(2, M)
    # inverse QFT on the ancilla register
    grid = np.fft.fft(grid, axis=1) / math.sqrt(M)
    probs = np.sum(np.abs(grid) ** 2, axis=0)
    return probs / probs.sum()


def amplitude_estimate(
    walk: WalkOperator,
    initial: np.ndarray | StateVector | None = None,
    eps_prime: float = 1e-2,
    failure: float = 0.05,
    backend: Backend = "qpe",
    seed=None,
    qpe: QPEConfig = DEFAULT_QPE,
    info: dict | None = None,
) -> float:
    """Estimate the marked probability encoded in ``walk``'s eigenphases.

    ``initial`` defaults to the walk's (boosted) initial state, prepared and
    charged once per phase-estimation run.  ``exact_subspace`` diagonalizes
    the restriction of the walk to the invariant plane and charges nothing.
    """
    if not 0 < eps_prime < 1:
        raise ValueError(f"eps_prime must lie in (0, 1), got {eps_prime}")
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if initial is None:
        init = walk.boosted_state
        charge_initial = True
    else:
        init = initial.amplitudes if isinstance(initial, StateVector) else np.asarray(initial)
        charge_initial = False
    _, restriction = invariant_plane(walk, init)

    if backend == "exact_subspace":
        evals, evecs = np.linalg.eig(restriction)
        weights = np.abs(np.linalg.solve(evecs, np.array([1.0, 0.0])))
        lam = evals[int(np.argmax(weights))]
        phase = abs(np.angle(lam)) / (2 * math.pi)
        if info is not None:
            info.update(phase_bits=None, repetitions=0)
        return _phase_to_probability(phase)

    t, r = qpe.sizing(eps_prime, failure)
    probs = qpe_outcome_distribution(restriction, t, qpe.max_qubits)
    rng = _rng(seed)
    outcomes = rng.choice(2**t, size=r, p=probs)
    estimates = np.sin(math.pi * outcomes / 2**t * 2 / EIGENPHASE_FACTOR) ** 2
    if isinstance(walk, WalkOperator):
        walk.charge(r * (2**t - 1))
        if charge_initial:
            for _ in range(r):
                walk.prepare_initial()
    if info is not None:
        info.update(phase_bits=t, repetitions=r)
    return float(np.median(estimates))


def boost(p: float, mu: int) -> float:
    return math.sin((2 * mu + 1) * math.asin(math.sqrt(p))) ** 2


def invert_boost(p1_hat: float, mu: int) -> float:
    """``sin^2(2 arcsin(sqrt(P1)) arcsin(sqrt(P0)) / pi)`` with ``P0`` from ``mu``."""
    if not 0.0 <= p1_hat <= 1.0:
        raise ValueError(f"boosted probability {p1_hat} outside [0, 1]")
    if mu < 1:
        raise ValueError("mu must be >= 1")
    a0 = math.pi / (2 * (2 * mu + 1))
    return math.sin(2 * math.asin(math.sqrt(p1_hat)) * a0 / math.pi) ** 2


def aae_eps_prime(epsilon: float, p0: float, delta_floor: float, constant: float = 1.0) -> float:
    """AE tolerance on the boosted probability, ``c * eps * |delta| / P0^2``."""
    return constant * epsilon * delta_floor / p0**2


def _snapshot(*oracles) -> dict[str, int]:
    return merge_queries(*(o.queries() for o in oracles))


def _diff(after: dict[str, int], before: dict[str, int]) -> dict[str, int]:
    return {k: v - before.get(k, 0) for k, v in after.items() if v - before.get(k, 0)}


def aae_estimate(
    prep: StatePrepOracle,
    r_pi: ReflectionOracle,
    prior: Prior,
    epsilon: float,
    backend: Backend = "qpe",
    seed=None,
    delta_floor: float = 0.5,
    eps_prime_constant: float = 1.0,
    qpe: QPEConfig = DEFAULT_QPE,
) -> EstimateReport:
    """Amplified amplitude estimation of ``<psi|Pi|psi>`` under ``prior``.

    ``delta_floor`` is the assumed ``|delta|`` as a fraction of ``P0``; it sets
    the AE tolerance.  A true ``|delta|`` below the floor degrades accuracy.

    Raises:
        EstimationRegimeError: ``epsilon`` too large for the prior (the AE
            tolerance would reach 1).
        PriorViolationError: the boosted probability reads 1, i.e. the data
            is consistent with ``delta >= 0``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p0 = prior.p0
    eps_prime = aae_eps_prime(epsilon, p0, delta_floor * p0, eps_prime_constant)
    if eps_prime >= 1:
        raise EstimationRegimeError(
            f"epsilon={epsilon:g} is outside the AAE regime for P0={p0:.4g} "
            f"(AE tolerance {eps_prime:.3g} >= 1; need epsilon < {p0 / delta_floor / eps_prime_constant:.4g})")
    before = _snapshot(prep, r_pi)
    walk = make_boosted_walk(prep, r_pi, prior.mu)
    info: dict = {}
    p1_hat = amplitude_estimate(walk, None, eps_prime, prior.failure_budget, backend, seed, qpe, info)
    if p1_hat >= 1.0 - PRIOR_VIOLATION_TOL:
        raise PriorViolationError(
            f"boosted probability {p1_hat:.12g} reached 1; prior P0={p0:.6g} is not a strict upper bound",
            measured=p1_hat)
    estimate = invert_boost(p1_hat, prior.mu)
    return EstimateReport(
        estimate=estimate,
        target_epsilon=epsilon,
        measured_p1=p1_hat,
        delta_hat=estimate - p0,
        queries=_diff(_snapshot(prep, r_pi), before),
        repetitions=info["repetitions"],
        backend=backend,
        mu=prior.mu,
        p0=p0,
        eps_prime=eps_prime,
        phase_bits=info["phase_bits"],
    )


def standard_ae_estimate(prep: StatePrepOracle, r_pi: ReflectionOracle, epsilon: float, failure: float,
                         backend: Backend = "qpe", seed=None, qpe: QPEConfig = DEFAULT_QPE
                         ) -> EstimateReport:
    """Plain amplitude estimation (no boost) to additive error ``epsilon``."""
    before = _snapshot(prep, r_pi)
    walk = make_boosted_walk(prep, r_pi, 0)
    info: dict = {}
    p_hat = amplitude_estimate(walk, None, epsilon, failure, backend, seed, qpe, info)
    return EstimateReport(estimate=p_hat, target_epsilon=epsilon, measured_p1=p_hat,
                          queries=_diff(_snapshot(prep, r_pi), before),
                          repetitions=info["repetitions"], backend=backend, eps_prime=epsilon,
                          phase_bits=info["phase_bits"])


# -- projector sums ---------------------------------------------------------


def _group_seeds(seed, n: int) -> list[np.random.Generator]:
    if isinstance(seed, np.random.Generator):
        ss = np.random.SeedSequence(int(seed.integers(2**63)))
    elif isinstance(seed, np.random.SeedSequence):
        ss = seed
    else:
        ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(n)]


def _estimate_group_probability(group: ProjectorGroup, prep: StatePrepOracle, prior: Prior,
                                eps_prob: float, backend: Backend, rng, j: int, **kw
                                ) -> EstimateReport:
    enc = sqrt_encoding(group)
    combined, marker = success_probability_instance(enc, prep)
    try:
        return aae_estimate(combined, marker, prior, eps_prob, backend, rng, **kw)
    except PriorViolationError as exc:
        raise exc.located(group=j) from None


def estimate_projector_sum(
    psum: ProjectorSum,
    priors: GroupPriors,
    prep: StatePrepOracle,
    epsilon: float,
    failure: float = 0.05,
    backend: Backend = "qpe",
    seed=None,
    **aae_kwargs,
) -> EstimateReport:
    """Estimate ``<psi|A|psi>`` group by group with AAE on each square-root encoding.

    Each group's success probability is estimated to ``eps / ||beta||_{1,1/2}``
    with failure ``failure / J``, rescaled by its normalization and sign; the
    offset is added classically.
    """
    classical = ClassicalPriorSet.empty(len(psum.groups))
    return estimate_with_classical_priors(psum, classical, priors, prep, epsilon, failure, backend,
                                          seed, **aae_kwargs)


def estimate_with_classical_priors(
    psum: ProjectorSum,
    classical: ClassicalPriorSet,
    priors: GroupPriors,
    prep: StatePrepOracle,
    epsilon: float,
    failure: float = 0.05,
    backend: Backend = "qpe",
    seed=None,
    **aae_kwargs,
) -> EstimateReport:
    """Refine classical estimates of a projector sum with AAE on the residual terms.

    Projectors in ``I_j`` contribute ``beta_ji * C_ji`` directly.  The residual
    sub-sum of group ``j`` is estimated with AAE to ``eps_j / 2`` when ``I_j``
    is non-empty and to the full ``eps_j`` otherwise.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    J = len(psum.groups)
    if len(classical.estimates) != J:
        raise ValueError(f"classical prior set has {len(classical.estimates)} groups, sum has {J}")
    index_sets = classical.index_sets()
    tol = classical_tolerances(psum, index_sets, epsilon)
    if classical.tolerances is not None:
        for j, (given, want) in enumerate(zip(classical.tolerances, tol)):
            if math.isfinite(want) and abs(given - want) > 1e-12 * max(1.0, want):
                raise ValueError(f"group {j}: classical tolerance {given:g} does not match "
                                 f"the required {want:g}; regenerate the classical estimates")
    for j, (est, eps_t) in enumerate(zip(classical.estimates, tol)):
        for i, c in est.items():
            if not 0 <= i < psum.groups[j].size:
                raise ValueError(f"group {j}: classical estimate for unknown projector {i}")
            if c < eps_t * (1 - 1e-12):
                raise ValueError(f"group {j}, projector {i}: classical estimate {c:g} is below "
                                 f"the tolerance {eps_t:g}; estimates must satisfy C >= eps~")

    budgets = group_budgets(psum, epsilon)
    active = [j for j, g in enumerate(psum.groups)
              if any(g.betas[k] > 0 for k in range(g.size) if k not in index_sets[j])]
    group_failure = failure / max(1, len(active))
    rngs = _group_seeds(seed, J)

    total = psum.offset
    queries: dict[str, int] = {}
    details = []
    reps = 0
    for j, g in enumerate(psum.groups):
        idx = index_sets[j]
        classical_part = float(sum(g.betas[i] * c for i, c in classical.estimates[j].items()))
        detail = {"group": j, "sign": g.sign, "normalization": g.normalization,
                  "epsilon_j": budgets[j], "classical": classical_part,
                  "classical_tolerance": tol[j], "quantum": 0.0, "queries": {}}
        if j in active:
            sub = g.subgroup([k for k in range(g.size) if k not in idx])
            eps_share = budgets[j] / 2 if idx else budgets[j]
            eps_prob = eps_share / sub.normalization
            prior = priors.prior(j, group_failure)
            rep = _estimate_group_probability(sub, prep, prior, eps_prob, backend, rngs[j], j,
                                              **aae_kwargs)
            quantum = sub.normalization * rep.estimate
            detail.update(quantum=quantum, p_hat=rep.estimate, measured_p1=rep.measured_p1,
                          mu=rep.mu, p0=rep.p0, eps_prob=eps_prob, eps_quantum=eps_share,
                          residual_normalization=sub.normalization, queries=rep.queries)
            queries = merge_queries(queries, rep.queries)
            reps += rep.repetitions
        else:
            quantum = 0.0
        a_j = quantum + classical_part
        detail["estimate"] = a_j
        details.append(detail)
        total += g.sign * a_j

    return EstimateReport(estimate=float(total), target_epsilon=epsilon, queries=queries,
                          repetitions=reps, backend=backend, groups=details)


def exact_priors(
    psum: ProjectorSum,
    state: StateVector | np.ndarray,
    epsilon: float,
    classical_threshold: float | None = None,
    margin: float = 2.0,
) -> tuple[ClassicalPriorSet, GroupPriors]:
    """Priors built from exact projector expectations (a stand-in for accurate
    classical methods).

    Projectors whose expectation is at least ``classical_threshold`` go to the
    classical set.  With ``classical_threshold=None`` the largest projectors
    of each group are moved there until ``margin * P_res <= 1/4`` holds for
    the residual probability ``P_res``.  Each residual group gets the largest
    ``mu`` with ``P0(mu) >= margin * P_res`` (floored at the probability
    tolerance, so ``|delta| >= P0 / margin`` when the floor is inactive).
    """
    v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
    budgets = group_budgets(psum, epsilon)
    estimates: list[dict[int, float]] = []
    mus: list[int | None] = []
    for j, g in enumerate(psum.groups):
        q = np.array([np.vdot(v, p @ v).real for p in g.projectors])
        order = list(np.argsort(-q))
        if classical_threshold is not None:
            idx = {k for k in range(g.size) if q[k] >= classical_threshold}
        else:
            idx = set()
        while True:
            res = [k for k in range(g.size) if k not in idx and g.betas[k] > 0]
            if not res:
                break
            sub = g.subgroup(res)
            p_res = float(sum(g.betas[k] * q[k] for k in res) / sub.normalization)
            if margin * p_res <= 0.25 or classical_threshold is not None:
                break
            idx.add(next(k for k in order if k not in idx))
        b_cl = float(sum(g.betas[i] for i in idx))
        eps_t = budgets[j] / (2 * b_cl) if b_cl > 0 else math.inf
        estimates.append({int(i): float(max(q[i], eps_t)) for i in sorted(idx)})
        if res:
            eps_share = budgets[j] / 2 if idx else budgets[j]
            floor = eps_share / sub.normalization
            p_bar = max(margin * p_res, floor)
            if p_bar > 0.25:
                raise PriorViolationError(
                    f"residual probability {p_res:.4g} too large for a canonical prior", group=j,
                    measured=p_res)
            mus.append(choose_mu(p_bar))
        else:
            mus.append(None)
    tol = classical_tolerances(psum, [set(e) for e in estimates], epsilon)
    return ClassicalPriorSet(tuple(estimates), tuple(tol)), GroupPriors(tuple(mus))


def predicted_queries(p0: float, delta_abs: float, epsilon: float, failure: float) -> float:
    """Unit-constant cost model ``sqrt(P0) ln(1/delta') (P0/|delta|) / eps``."""
    if min(p0, delta_abs, epsilon, failure) <= 0:
        raise ValueError("all arguments must be positive")
    if delta_abs > p0:
        raise ValueError(f"|delta|={delta_abs} exceeds P0={p0}")
    return math.sqrt(p0) * math.log(1 / failure) * (p0 / delta_abs) / epsilon


__all__ = [
    "QPEConfig", "Prior", "GroupPriors", "ClassicalPriorSet", "EstimateReport", "prior_p0",
    "choose_mu", "classical_baseline", "classical_sample_count", "amplitude_estimate", "boost",
    "invert_boost", "aae_estimate", "standard_ae_estimate", "estimate_projector_sum",
    "estimate_with_classical_priors", "exact_priors", "group_budgets", "classical_tolerances",
    "predicted_queries", "qpe_outcome_distribution",
]
