"""Newton-Cotes integration of Hellmann-Feynman gradients along a Hamiltonian path.

``E(1) - E(-1) = sum_k w_k <psi0(x_k)| dH/dx |psi0(x_k)>`` up to a truncation
error controlled by how large the continued ground energy's derivative gets
on an ellipse-like contour around ``[-1, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import GapError, PriorViolationError, ResourceLimitError, ShapeError
from .estimation import (
    ClassicalPriorSet,
    EstimateReport,
    GroupPriors,
    choose_mu,
    estimate_with_classical_priors,
    exact_priors,
    group_budgets,
)
from .fermion import HamiltonianPath, ground_state_prep, projector_drift_bound
from .oracles import ProjectorGroup, ProjectorSum, merge_queries
from .statevector import exact_eigensolve

MAX_RULE = 33
CONTOUR_RHO = 3.0
CONTOUR_SAMPLES = 256
GAMMA_SAFETY = 1.2
MIN_PATH_GAP = 1e-6


@dataclass(frozen=True)
class NewtonCotesRule:
    n: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def abs_weight_sum(self) -> float:
        return math.fsum(abs(w) for w in self.weights)


def _lagrange_weights(n: int) -> list[Fraction]:
    xs = [Fraction(-1) + Fraction(2 * k, n) for k in range(n + 1)]
    weights = []
    for k, xk in enumerate(xs):
        coeffs = [Fraction(1)]  # ascending powers
        denom = Fraction(1)
        for m, xm in enumerate(xs):
            if m == k:
                continue
            nxt = [Fraction(0)] * (len(coeffs) + 1)
            for d, c in enumerate(coeffs):
                nxt[d + 1] += c
                nxt[d] -= c * xm
            coeffs = nxt
            denom *= xk - xm
        # only even powers survive on [-1, 1]
        integral = sum(c * Fraction(2, d + 1) for d, c in enumerate(coeffs) if d % 2 == 0)
        weights.append(integral / denom)
    return weights


@lru_cache(maxsize=None)
def _rule(n: int) -> NewtonCotesRule:
    w = np.array([float(x) for x in _lagrange_weights(n)])
    x = np.array([-1.0 + 2.0 * k / n for k in range(n + 1)])
    w.setflags(write=False)
    x.setflags(write=False)
    return NewtonCotesRule(n, x, w)


def newton_cotes_rule(n: int) -> NewtonCotesRule:
    """Closed ``(n+1)``-point Newton-Cotes rule on ``[-1, 1]`` for odd ``n``.

    Weights come from exact rational integration of the Lagrange basis.
    Rules above ``n = 33`` are refused: their weights alternate in sign and
    grow quickly, so the rule amplifies node errors.
    """
    if int(n) != n or n < 1 or n % 2 == 0:
        raise ValueError(f"rule order must be an odd positive integer, got {n}")
    if n > MAX_RULE:
        raise ResourceLimitError(f"rule order {n} exceeds the stability cap {MAX_RULE}")
    return _rule(int(n))


def integrate(rule: NewtonCotesRule, values: Sequence[float]) -> float:
    values = np.asarray(values, dtype=float)
    if values.shape != (rule.n + 1,):
        raise ShapeError(f"expected {rule.n + 1} node values, got shape {values.shape}")
    return math.fsum(rule.weights * values)


# -- analyticity and parameter selection -------------------------------------


@dataclass(frozen=True)
class AnalyticityBudget:
    """``gamma_cap`` bounds ``|dE/dz|`` on the contour ``1 + rho e^{i phi} + e^{-i phi}/rho``."""

    gamma_cap: float
    rho: float = CONTOUR_RHO

    def __post_init__(self) -> None:
        if self.gamma_cap < 0:
            raise ValueError("gamma_cap must be non-negative")


def contour_points(samples: int = CONTOUR_SAMPLES, rho: float = CONTOUR_RHO) -> np.ndarray:
    phi = 2 * np.pi * np.arange(samples) / samples
    return 1 + rho * np.exp(1j * phi) + np.exp(-1j * phi) / rho


def gamma_from_derivative(derivative: Callable[[np.ndarray], np.ndarray],
                          samples: int = CONTOUR_SAMPLES) -> float:
    """``max |f(z)|`` over sampled contour points for an analytic ``f = dE/dz``."""
    return float(np.max(np.abs(derivative(contour_points(samples)))))


def continued_ground_derivative(path: HamiltonianPath, samples: int = CONTOUR_SAMPLES,
                                substeps: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Track the analytically continued ground energy around the contour.

    Starts at the real point ``phi = 0`` and follows the eigenvalue whose
    eigenvector best matches the previous one.  Returns the contour points and
    ``dE/dz`` there, using left/right eigenvectors of the non-hermitian ``H(z)``.
    """
    fine = contour_points(samples * substeps)
    prev = None
    out = np.empty(samples, dtype=complex)
    for i, z in enumerate(fine):
        h = path.hamiltonian(z)
        evals, right = np.linalg.eig(h)
        if prev is None:
            idx = int(np.argmin(evals.real))
        else:
            idx = int(np.argmax(np.abs(prev.conj() @ right) / np.linalg.norm(right, axis=0)))
        v = right[:, idx] / np.linalg.norm(right[:, idx])
        prev = v
        if i % substeps == 0:
            left = np.linalg.inv(right)[idx]
            hd = path.derivative(z)
            out[i // substeps] = (left @ hd @ right[:, idx]) / (left @ right[:, idx])
    return fine[::substeps], out


def analyticity_budget(path: HamiltonianPath, samples: int = CONTOUR_SAMPLES,
                       safety: float = GAMMA_SAFETY) -> AnalyticityBudget:
    _, d = continued_ground_derivative(path, samples)
    return AnalyticityBudget(safety * float(np.max(np.abs(d))))


def truncation_bound(n: int, budget: AnalyticityBudget) -> float:
    """``(5/3) Gamma (3/4)^(n+1)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 5.0 / 3.0 * budget.gamma_cap * 0.75 ** (n + 1)


def select_parameters(epsilon: float, budget: AnalyticityBudget) -> tuple[int, float]:
    """Smallest odd rule order with truncation at most ``epsilon/2`` and a node tolerance.

    The node tolerance is the smaller of ``log(4/3) eps / (4 log(10 Gamma/(3 eps)))``
    and ``(eps - truncation) / max(sum|w_k|, 2(n+1))``, so node errors summed
    through the rule stay inside the budget even where the weights alternate.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    g = budget.gamma_cap
    ratio = 10 * g / (3 * epsilon)
    if ratio <= 1:
        n = 1
        log_tol = math.inf
    else:
        n_min = math.log(ratio) / math.log(4 / 3) - 1
        n = max(1, math.ceil(n_min - 1e-9))
        if n % 2 == 0:
            n += 1
        log_tol = math.log(4 / 3) * epsilon / (4 * math.log(ratio))
    rule = newton_cotes_rule(n)
    slack = epsilon - truncation_bound(n, budget)
    tol = min(log_tol, slack / max(rule.abs_weight_sum, 2 * (n + 1)))
    return n, tol


# -- gradient operators ------------------------------------------------------


def _is_identity(u: np.ndarray) -> bool:
    return np.allclose(u, np.eye(u.shape[0]), atol=1e-12)


def gradient_operator(path: HamiltonianPath, x: float, orientation: Sequence[int] | None = None
                      ) -> tuple[np.ndarray, ProjectorSum]:
    """``G(x) = sum_j dalpha_j/dx U_j`` and its split into eigenspace projectors.

    A term ``c U`` becomes ``2|c| Pi^{sgn c} - |c|`` in the positive group, or
    with ``orientation[j] = -1``, ``-2|c| Pi^{-sgn c} + |c|`` in the negative
    group, where ``Pi^{s} = (I + s U)/2``.  Identity terms go to the offset.
    Projector labels are ``"<term>:<s>"`` with the term index and sign.
    """
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside the path domain [-1, 1]")
    dim = 2**path.n_qubits
    eye = np.eye(dim)
    g = np.zeros((dim, dim), dtype=complex)
    offset = 0.0
    members: dict[int, list[tuple[float, np.ndarray, str]]] = {1: [], -1: []}
    for j, term in enumerate(path.terms):
        c = float(np.real(term.alpha_dot(x)))
        if c == 0:
            continue
        g += c * term.unitary
        if _is_identity(term.unitary):
            offset += c
            continue
        o = 1 if orientation is None else int(orientation[j])
        s = 1 if c > 0 else -1
        if o == 1:
            members[1].append((2 * abs(c), (eye + s * term.unitary) / 2, f"{j}:{s:+d}"))
            offset -= abs(c)
        else:
            members[-1].append((2 * abs(c), (eye - s * term.unitary) / 2, f"{j}:{-s:+d}"))
            offset += abs(c)
    groups = [ProjectorGroup(sign, [m[0] for m in members[sign]], [m[1] for m in members[sign]],
                             [m[2] for m in members[sign]]) for sign in (1, -1)]
    return g, ProjectorSum(groups, offset, path.n_qubits)


def small_projector_orientation(path: HamiltonianPath, x: float, state: np.ndarray) -> list[int]:
    """Per-term orientation whose projector has the smaller expectation on ``state``."""
    out = []
    for term in path.terms:
        c = float(np.real(term.alpha_dot(x)))
        u = float(np.vdot(state, term.unitary @ state).real)
        out.append(1 if c * u <= 0 else -1)
    return out


def hellmann_feynman_residual(path: HamiltonianPath, xs: Sequence[float], h: float = 1e-4) -> float:
    """Max deviation between ``<psi0|G|psi0>`` and centered differences of ``E0``."""
    worst = 0.0
    for x in xs:
        psi = path.ground_state(x)
        hf = float(np.vdot(psi, path.derivative(x) @ psi).real)
        e_plus = exact_eigensolve(path.hamiltonian(x + h)).ground_energy
        e_minus = exact_eigensolve(path.hamiltonian(x - h)).ground_energy
        worst = max(worst, abs(hf - (e_plus - e_minus) / (2 * h)))
    return worst


# -- energy differences ------------------------------------------------------

NodePriorProvider = Callable[[int, float, ProjectorSum, dict], "tuple[ClassicalPriorSet, GroupPriors]"]


@dataclass
class EnergyDiffReport:
    estimate: float
    e_start: float
    node_values: list[float]
    node_reports: list[EstimateReport]
    rule: NewtonCotesRule
    truncation_bound: float
    node_tolerance: float
    gamma_cap: float
    total_queries: dict[str, int] = field(default_factory=dict)


def exact_node_priors(margin: float = 2.0) -> NodePriorProvider:
    """Priors from the exact ground state at each node (stand-in for accurate classical methods)."""

    def provider(k: int, x: float, psum: ProjectorSum, ctx: dict):
        return exact_priors(psum, ctx["state"], ctx["tolerance"], margin=margin)

    return provider


def propagated_node_priors(fallback: NodePriorProvider | None = None, margin: float = 2.0
                           ) -> NodePriorProvider:
    """Priors carried from the previous node's estimate plus the projector drift bound.

    The bound on group ``j``'s normalized probability at node ``k`` is
    ``(A_prev + eps_prev + sum|d beta| + sum beta_new D) / n_new`` with ``D``
    the projector drift over one node spacing.  ``mu`` covers ``margin`` times
    that bound; if no canonical prior fits, ``fallback`` is used or a
    :class:`PriorViolationError` names the node.
    """

    def provider(k: int, x: float, psum: ProjectorSum, ctx: dict):
        prev = ctx.get("previous")
        budgets = group_budgets(psum, ctx["tolerance"])
        mus = []
        try:
            if prev is None:
                raise PriorViolationError("no previous node to propagate from", node=k)
            for j, g in enumerate(psum.groups):
                if g.size == 0 or g.normalization == 0:
                    mus.append(None)
                    continue
                pg = prev["groups"][j]
                old = dict(zip(pg["labels"], pg["betas"]))
                new = dict(zip(g.labels, g.betas))
                d_beta = sum(abs(new.get(lab, 0.0) - old.get(lab, 0.0)) for lab in set(old) | set(new))
                bound = pg["estimate"] + pg["epsilon_j"] + d_beta + g.betas.sum() * ctx["drift"]
                p_bar = max(margin * bound / g.normalization, budgets[j] / g.normalization)
                if p_bar > 0.25:
                    raise PriorViolationError(
                        f"propagated prior bound {p_bar:.4g} exceeds 1/4", node=k, group=j,
                        measured=p_bar)
                mus.append(choose_mu(p_bar))
        except PriorViolationError:
            if fallback is None:
                raise
            ctx["prior_source"] = "fallback"
            return fallback(k, x, psum, ctx)
        ctx["prior_source"] = "propagated"
        return ClassicalPriorSet.empty(len(psum.groups)), GroupPriors(tuple(mus))

    return provider


def _node_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


def energy_difference(
    path: HamiltonianPath,
    e_start: float,
    epsilon: float,
    failure: float = 0.05,
    node_priors: NodePriorProvider | str = "propagate",
    start_values: Sequence[Sequence[float]] | None = None,
    budget: AnalyticityBudget | None = None,
    backend: str = "qpe",
    seed=None,
    orientation: Sequence[int] | None = None,
) -> EnergyDiffReport:
    """Estimate ``E(1)`` from ``E(-1)`` by integrating Hellmann-Feynman gradients.

    Node 0 uses ``start_values`` (exact projector expectations of the gradient
    decomposition at ``x = -1``; computed by exact diagonalization when
    omitted) and costs no queries.  Every other node prepares its ground state
    and estimates ``<G(x_k)>`` to the node tolerance with AAE, with priors
    from ``node_priors``: ``"propagate"`` (drift propagation, falling back to
    exact priors when the propagated bound exceeds 1/4), ``"exact"`` or a
    callable provider.

    Raises:
        GapError: the sampled gap closes (names the offending ``x``).
        PriorViolationError: a node's prior fails (names the node).
    """
    for x in path.samples():
        g = path.gap(x)
        if g <= MIN_PATH_GAP:
            raise GapError(f"spectral gap {g:.3g} at x={x:.6g}", x=float(x))
    if isinstance(node_priors, str):
        if node_priors == "propagate":
            node_priors = propagated_node_priors(fallback=exact_node_priors())
        elif node_priors == "exact":
            node_priors = exact_node_priors()
        else:
            raise ValueError(f"unknown node prior mode {node_priors!r}")
    if budget is None:
        budget = analyticity_budget(path)
    n, tol = select_parameters(epsilon, budget)
    rule = newton_cotes_rule(n)
    min_gap = path.min_gap()
    drift = projector_drift_bound(path.max_h_dot() * (2.0 / n), min_gap)
    node_failure = failure / n
    seeds = _node_seeds(seed, n + 1)

    psi_start = path.ground_state(-1.0)
    if orientation is None:
        orientation = small_projector_orientation(path, -1.0, psi_start)

    values: list[float] = []
    reports: list[EstimateReport] = []
    queries: dict[str, int] = {}
    previous = None
    for k, x in enumerate(rule.nodes):
        x = float(x)
        _, psum = gradient_operator(path, x, orientation)
        if k == 0:
            if start_values is None:
                start_values = [[float(np.vdot(psi_start, p @ psi_start).real) for p in g.projectors]
                                for g in psum.groups]
            details = []
            total = psum.offset
            for j, (g, q) in enumerate(zip(psum.groups, start_values)):
                if len(q) != g.size:
                    raise ShapeError(f"start values for group {j} have length {len(q)}, expected {g.size}")
                a_j = float(np.dot(g.betas, q)) if g.size else 0.0
                total += g.sign * a_j
                details.append({"group": j, "estimate": a_j, "epsilon_j": 0.0})
            rep = EstimateReport(estimate=total, target_epsilon=tol, backend="classical",
                                 groups=details)
        else:
            eig = exact_eigensolve(path.hamiltonian(x))
            if eig.gap <= MIN_PATH_GAP:
                raise GapError(f"spectral gap {eig.gap:.3g} at x={x:.6g}", x=x)
            prep, model = ground_state_prep(path.hamiltonian(x), alpha_norm=path.alpha_norm(x))
            ctx = {"state": prep.state(), "tolerance": tol, "drift": drift, "previous": previous}
            try:
                classical, priors = node_priors(k, x, psum, ctx)
                rep = estimate_with_classical_priors(psum, classical, priors, prep, tol,
                                                     node_failure, backend, seeds[k])
            except PriorViolationError as exc:
                raise exc.located(node=k) from None
            rep.metadata["state_prep"] = model.as_dict()
            rep.metadata["prior_source"] = ctx.get("prior_source", "provider")
        previous = {"groups": [
            {"labels": list(g.labels), "betas": list(g.betas),
             "estimate": rep.groups[j]["estimate"], "epsilon_j": rep.groups[j]["epsilon_j"]}
            for j, g in enumerate(psum.groups)]}
        values.append(rep.estimate)
        reports.append(rep)
        queries = merge_queries(queries, rep.queries)

    difference = integrate(rule, values)
    return EnergyDiffReport(
        estimate=e_start + difference, e_start=e_start, node_values=values, node_reports=reports,
        rule=rule, truncation_bound=truncation_bound(n, budget), node_tolerance=tol,
        gamma_cap=budget.gamma_cap, total_queries=queries)


__all__ = [
    "NewtonCotesRule", "AnalyticityBudget", "EnergyDiffReport", "newton_cotes_rule", "integrate",
    "contour_points", "gamma_from_derivative", "continued_ground_derivative",
    "analyticity_budget", "truncation_bound", "select_parameters", "gradient_operator",
    "small_projector_orientation", "hellmann_feynman_residual", "exact_node_priors",
    "propagated_node_priors", "energy_difference",
]
