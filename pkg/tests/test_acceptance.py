"""Acceptance suite: each test runs one criterion at its stated tolerance and
runtime budget and reports a single pass/fail line."""

import itertools
import math

import numpy as np
from instances import (
    group_probability,
    projector_instance,
    random_sum_with_priors,
    random_symmetric,
    second_quantized,
    split_classical_instance,
)

from aaesim.estimation import (
    Prior,
    aae_estimate,
    boost,
    estimate_projector_sum,
    estimate_with_classical_priors,
    group_budgets,
    invert_boost,
    prior_p0,
)
from aaesim.experiments import default_grid, loglog_slope, run_sweep
from aaesim.fermion import (
    OneBodyOperator,
    jordan_wigner_one_body,
    pauli_sum_matrix,
    projector_decomposition,
    projector_drift_bound,
    toy_path,
)
from aaesim.oracles import (
    ProjectorGroup,
    StatePrepOracle,
    make_boosted_walk,
    sqrt_encoding,
    success_probability_instance,
)
from aaesim.quadrature import (
    AnalyticityBudget,
    energy_difference,
    gamma_from_derivative,
    hellmann_feynman_residual,
    integrate,
    newton_cotes_rule,
    truncation_bound,
)
from aaesim.statevector import exact_eigensolve, random_projector, random_state


def test_01_boost_identity(criterion):
    c = criterion(1, "boost identity", 30)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 5))
        mu = int(rng.integers(1, 6))
        p = float(rng.uniform(0, 1))
        prep, r = projector_instance(rng, n, p)
        v = make_boosted_walk(prep, r, mu).boosted_state
        got = float(np.vdot(v, r.projector @ v).real)
        worst = max(worst, abs(got - math.sin((2 * mu + 1) * math.asin(math.sqrt(p))) ** 2))
    c.finish(worst <= 1e-10, f"max deviation {worst:.2e} over 200 instances (tol 1e-10)")


def test_02_inversion_round_trip(criterion):
    c = criterion(2, "inversion round trip", 5)
    worst = 0.0
    for mu in range(1, 11):
        p0 = prior_p0(mu)
        for frac in np.linspace(0, 1, 100):
            p = float(frac) * p0
            worst = max(worst, abs(invert_boost(boost(p, mu), mu) - p))
    c.finish(worst <= 1e-12, f"max deviation {worst:.2e} over 1000 (p, mu) pairs (tol 1e-12)")


def test_03_sqrt_encoding_identity(criterion):
    c = criterion(3, "square-root encoding identity", 60)
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        k = int(rng.integers(1, 5))
        group = ProjectorGroup(1, rng.uniform(0.05, 2, size=k),
                               [random_projector(2**n, rng, int(rng.integers(1, 2**n + 1)))
                                for _ in range(k)])
        psi = random_state(n, rng).amplitudes
        comb, marker = success_probability_instance(sqrt_encoding(group), StatePrepOracle.from_state(psi))
        v = comb.state()
        got = float(np.vdot(v, marker.projector @ v).real)
        worst = max(worst, abs(got - group_probability(group, psi)))
    c.finish(worst <= 1e-10, f"max deviation {worst:.2e} over 100 sums (tol 1e-10)")


def test_04_aae_end_to_end(criterion):
    c = criterion(4, "AAE end to end", 600)
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        mu = int(rng.integers(1, 6))
        p = float(rng.uniform(0, 0.5)) * prior_p0(mu)
        prep, r = projector_instance(rng, int(rng.integers(2, 4)), p)
        rep = aae_estimate(prep, r, Prior(mu), 1e-6, backend="exact_subspace")
        worst = max(worst, abs(rep.estimate - p))
    fails = 0
    for seed in range(200):
        mu = int(rng.integers(1, 4))
        p = float(rng.uniform(0, 0.5)) * prior_p0(mu)
        prep, r = projector_instance(rng, 2, p)
        rep = aae_estimate(prep, r, Prior(mu, 0.05), 1e-2, backend="qpe", seed=seed)
        fails += abs(rep.estimate - p) > 1e-2
    c.finish(worst <= 1e-6 and fails / 200 <= 0.05,
             f"exact backend max error {worst:.2e} (tol 1e-6); qpe failure rate {fails}/200 (max 0.05)")


def test_05_scaling_reproduction(criterion):
    c = criterion(5, "query scaling", 1200)
    rows = run_sweep(default_grid(), seed=5)
    slopes = {m: loglog_slope(rows, m) for m in ("aae", "standard_ae", "classical")}
    ok = (0.4 <= slopes["aae"] <= 0.6 and 0.9 <= slopes["standard_ae"] <= 1.1
          and 0.9 <= slopes["classical"] <= 1.1)
    c.finish(ok, "slopes " + ", ".join(f"{m} {s:.3f}" for m, s in slopes.items())
             + " (windows [0.4,0.6], [0.9,1.1], [0.9,1.1])")


def test_06_multi_group_estimation(criterion):
    c = criterion(6, "multi-group estimation", 600)
    eps = 1e-2
    rng = np.random.default_rng(6)
    ok_plain = ok_split = 0
    budget_gap = 0.0
    for seed in range(100):
        psum, psi, priors = random_sum_with_priors(rng, epsilon=eps)
        budget_gap = max(budget_gap, abs(sum(group_budgets(psum, eps)) - eps))
        rep = estimate_projector_sum(psum, priors, StatePrepOracle.from_state(psi), eps, 0.05, seed=seed)
        ok_plain += abs(rep.estimate - psum.expectation(psi)) <= eps
    for seed in range(100):
        psum, psi, classical, priors = split_classical_instance(rng, eps)
        rep = estimate_with_classical_priors(psum, classical, priors, StatePrepOracle.from_state(psi),
                                             eps, 0.05, seed=seed)
        ok_split += abs(rep.estimate - psum.expectation(psi)) <= eps
    c.finish(ok_plain >= 95 and ok_split >= 95 and budget_gap <= 1e-15,
             f"within eps in {ok_plain}/100 (quantum only) and {ok_split}/100 (classical split); "
             f"budget sum deviation {budget_gap:.1e}")


def test_07_jw_and_projector_decomposition(criterion):
    c = criterion(7, "Jordan-Wigner and projector decomposition", 60)
    rng = np.random.default_rng(7)
    worst_jw = worst_proj = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 7))
        a = random_symmetric(rng, n)
        op = OneBodyOperator(a)
        ref = second_quantized(a)
        worst_jw = max(worst_jw, np.max(np.abs(pauli_sum_matrix(jordan_wigner_one_body(op), n) - ref)))
        psi = random_state(n, rng).amplitudes
        want = float(np.vdot(psi, ref @ psi).real)
        worst_proj = max(worst_proj, abs(projector_decomposition(op).expectation(psi) - want))
    c.finish(max(worst_jw, worst_proj) <= 1e-10,
             f"matrix deviation {worst_jw:.1e}, expectation deviation {worst_proj:.1e} (tol 1e-10)")


def test_08_drift_bounds(criterion):
    c = criterion(8, "drift bounds", 120)
    violations = checks = 0
    for n in (2, 3):
        path = toy_path(n)
        rng = np.random.default_rng(80 + n)
        xs = path.samples(64)
        states = [path.ground_state(x) for x in xs]
        h_dot, gap = path.max_h_dot(), path.min_gap()
        for _ in range(20):
            proj = random_projector(2**n, rng)
            vals = [float(np.vdot(s, proj @ s).real) for s in states]
            for i, j in itertools.combinations(range(len(xs)), 2):
                checks += 1
                violations += abs(vals[i] - vals[j]) > projector_drift_bound(h_dot * (xs[j] - xs[i]), gap)
    c.finish(violations == 0, f"{violations} violations in {checks} sampled pairs")


def test_09_newton_cotes(criterion):
    c = criterion(9, "Newton-Cotes rules", 30)
    worst_mono = 0.0
    for n in (1, 3, 5, 7):
        rule = newton_cotes_rule(n)
        for d in range(n + 1):
            exact = 0.0 if d % 2 else 2.0 / (d + 1)
            worst_mono = max(worst_mono, abs(integrate(rule, np.asarray(rule.nodes) ** d) - exact))
    bound_ok = True
    for force, exact in ((np.exp, math.e - 1 / math.e),
                         (lambda z: 2 * np.cos(2 * z), 2 * math.sin(2))):
        budget = AnalyticityBudget(gamma_from_derivative(force, 256))
        for n in range(1, 14, 2):
            rule = newton_cotes_rule(n)
            bound_ok &= abs(integrate(rule, force(np.asarray(rule.nodes))) - exact) <= truncation_bound(n, budget)
    sums_ok = all(sum(newton_cotes_rule(n).weights) <= 2 * (n + 1) for n in range(1, 34, 2))
    c.finish(worst_mono <= 1e-9 and bound_ok and sums_ok,
             f"monomial error {worst_mono:.1e} (tol 1e-9); truncation bound held: {bound_ok}; "
             f"weight sums within 2(N+1): {sums_ok}")


def test_10_energy_difference(criterion):
    c = criterion(10, "energy difference pipeline", 600)
    path = toy_path(2, 0.05)
    e_start = exact_eigensolve(path.hamiltonian(-1.0)).ground_energy
    e_end = exact_eigensolve(path.hamiltonian(1.0)).ground_energy
    rep = energy_difference(path, e_start, 1e-3, node_priors="propagate", backend="qpe", seed=10)
    err = abs(rep.estimate - e_end)
    hf = hellmann_feynman_residual(path, path.samples(16), h=1e-4)
    c.finish(path.min_gap() >= 0.5 and err <= 1e-3 and hf <= 1e-6,
             f"|E(1) error| {err:.2e} (tol 1e-3, rule order {rep.rule.n}); "
             f"Hellmann-Feynman residual {hf:.1e} (tol 1e-6)")
