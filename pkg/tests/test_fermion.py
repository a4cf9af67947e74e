import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from instances import annihilators, random_symmetric, second_quantized

from aaesim.errors import DegeneracyError, OverlapError, PriorViolationError, ShapeError
from aaesim.estimation import ClassicalPriorSet, GroupPriors, classical_tolerances, exact_priors
from aaesim.fermion import (
    HamiltonianPath,
    OneBodyOperator,
    PathTerm,
    estimate_observable_on_ground_state,
    extrapolation_radius,
    ground_state_prep,
    jordan_wigner_one_body,
    pauli_sum_matrix,
    projector_decomposition,
    projector_drift_bound,
    read_one_body_matrix,
    state_motion_bound,
    toy_path,
    write_one_body_matrix,
)
from aaesim.oracles import beta_norms
from aaesim.statevector import (
    Z,
    exact_eigensolve,
    expectation_value,
    init_basis_state,
    random_hermitian,
    random_projector,
    random_state,
)


# -- Jordan-Wigner -----------------------------------------------------------


def test_jw_examples():
    strings = jordan_wigner_one_body(OneBodyOperator(np.array([[1.0]])))
    assert {(s.coefficient, s.letters) for s in strings} == {(0.5, "I"), (-0.5, "Z")}
    hop = OneBodyOperator(np.array([[0, 0.5], [0.5, 0]]))
    assert {(s.coefficient, s.letters) for s in jordan_wigner_one_body(hop)} == {
        (0.25, "XX"), (0.25, "YY")}


def test_jw_string_has_parity_tail():
    a = np.zeros((4, 4))
    a[0, 3] = a[3, 0] = 1.0
    letters = {s.letters for s in jordan_wigner_one_body(OneBodyOperator(a))}
    assert letters == {"XZZX", "YZZY"}


@pytest.mark.parametrize("n", range(1, 7))
def test_jw_matches_occupation_basis(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        a = random_symmetric(rng, n)
        got = pauli_sum_matrix(jordan_wigner_one_body(OneBodyOperator(a)), n)
        assert np.max(np.abs(got - second_quantized(a))) <= 1e-10


def test_annihilator_oracle_is_canonical():
    ops = annihilators(3)
    for p, q in itertools.product(range(3), repeat=2):
        anti = ops[p] @ ops[q].T + ops[q].T @ ops[p]
        assert np.allclose(anti, np.eye(8) * (p == q))


def test_operator_validation():
    with pytest.raises(ValueError):
        OneBodyOperator(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ShapeError):
        OneBodyOperator(np.zeros((2, 3)))
    complex_hop = OneBodyOperator(np.array([[0, 1j], [-1j, 0]]))
    with pytest.raises(ValueError, match="complex"):
        jordan_wigner_one_body(complex_hop)
    with pytest.raises(ValueError, match="complex"):
        projector_decomposition(complex_hop)


# -- projector decomposition -------------------------------------------------


def test_nonnegative_operator_has_empty_negative_group():
    a = np.array([[1.0, 0.3], [0.3, 1.0]])
    psum = projector_decomposition(OneBodyOperator(a))
    assert psum.groups[1].size == 0
    assert psum.offset == pytest.approx(-0.3)
    assert sorted(psum.groups[0].labels) == ["+X[0,1]", "+Y[0,1]", "-Z[0]", "-Z[1]"]


def test_decomposition_matrix_identity():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4):
        a = random_symmetric(rng, n)
        psum = projector_decomposition(OneBodyOperator(a))
        assert np.max(np.abs(psum.matrix() - second_quantized(a))) <= 1e-10


def test_decomposition_reconstruction_random_pairs():
    rng = np.random.default_rng(100)
    for _ in range(100):
        n = int(rng.integers(1, 7))
        a = random_symmetric(rng, n)
        psi = random_state(n, rng)
        psum = projector_decomposition(OneBodyOperator(a))
        want = expectation_value(psi, second_quantized(a))
        assert psum.expectation(psi.amplitudes) == pytest.approx(want, abs=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_beta_norm_ordering(seed, n):
    psum = projector_decomposition(OneBodyOperator(random_symmetric(np.random.default_rng(seed), n)))
    n11, n1h = beta_norms(psum)
    assert n11 <= n1h * (1 + 1e-12)


def test_matrix_file_round_trip(tmp_path):
    a = random_symmetric(np.random.default_rng(1), 3)
    path = tmp_path / "a.txt"
    write_one_body_matrix(OneBodyOperator(a), path)
    assert np.array_equal(read_one_body_matrix(path).matrix.real, a)
    (tmp_path / "bad.txt").write_text("2\n1 0 0\n")
    with pytest.raises(ShapeError):
        read_one_body_matrix(tmp_path / "bad.txt")
    (tmp_path / "empty.txt").write_text("")
    with pytest.raises(ValueError):
        read_one_body_matrix(tmp_path / "empty.txt")


# -- paths and drift bounds --------------------------------------------------


@pytest.mark.parametrize("n", [2, 3])
def test_toy_paths_are_gapped_and_consistent(n):
    path = toy_path(n)
    path.check()
    assert path.min_gap() >= 0.5
    for x in path.samples(16):
        h = path.hamiltonian(x)
        assert np.allclose(h, h.conj().T, atol=1e-10)


def test_path_check_catches_wrong_derivative():
    path = HamiltonianPath([PathTerm(lambda x: x**2, lambda x: 1.0, Z, "bad")], 1)
    with pytest.raises(ValueError):
        path.check()


def test_motion_bound_examples():
    assert state_motion_bound(0, 0.7) == 0
    assert state_motion_bound(0.7, 0.7) == 1
    assert projector_drift_bound(0, 0.7) == 0
    assert projector_drift_bound(0.4, 0.7) == 2 * projector_drift_bound(0.2, 0.7)
    with pytest.raises(ValueError):
        state_motion_bound(1, 0)


@pytest.mark.parametrize("n", [2, 3])
def test_sampled_state_motion_within_bound(n):
    path = toy_path(n)
    xs = path.samples()
    states = [path.ground_state(x) for x in xs]
    bound = state_motion_bound(path.max_h_dot() * (xs[-1] - xs[0]), path.min_gap())
    overlap = abs(np.vdot(states[0], states[-1]))
    # phase-aligned distance
    assert math.sqrt(max(0.0, 2 - 2 * overlap)) <= bound


@pytest.mark.parametrize("n", [2, 3])
def test_projector_drift_never_exceeds_bound(n):
    path = toy_path(n)
    rng = np.random.default_rng(62 + n)
    xs = path.samples()
    states = [path.ground_state(x) for x in xs]
    h_dot, gap = path.max_h_dot(), path.min_gap()
    violations = 0
    for _ in range(20):
        proj = random_projector(2**n, rng)
        vals = [float(np.vdot(s, proj @ s).real) for s in states]
        for i, j in itertools.combinations(range(len(xs)), 2):
            violations += abs(vals[i] - vals[j]) > projector_drift_bound(h_dot * (xs[j] - xs[i]), gap)
    assert violations == 0


def test_extrapolation_radius_examples():
    assert extrapolation_radius(1, 0.1, 2, 0.04) == pytest.approx(0.005)
    assert extrapolation_radius(1, 0.25, 2, 0.04) == 0
    assert extrapolation_radius(1, 0.1, 2, 1e-6) == pytest.approx(1e-6 / 8)
    with pytest.raises(ValueError):
        extrapolation_radius(1, 0.3, 2, 0.04)
    with pytest.raises(ValueError):
        extrapolation_radius(0, 0.1, 2, 0.04)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 10), st.floats(0, 0.25), st.floats(0.01, 10), st.floats(1e-6, 1),
       st.floats(1.0, 4.0))
def test_extrapolation_radius_monotone(gap, p0, beta, eps, scale):
    r = extrapolation_radius(gap, p0, beta, eps)
    assert extrapolation_radius(gap * scale, p0, beta, eps) >= r
    assert extrapolation_radius(gap, p0, beta, eps * scale) >= r
    assert extrapolation_radius(gap, p0, beta * scale, eps) <= r
    assert extrapolation_radius(gap, p0 / scale, beta, eps) >= r


# -- ground states -----------------------------------------------------------


def test_ground_state_prep_diagonal():
    prep, model = ground_state_prep(Z, init_basis_state(1, 1))
    assert np.allclose(prep.state(), [0, 1])
    assert model.overlap == pytest.approx(1) and model.gap == pytest.approx(2)
    assert prep.cost == {"O_psi": 1, "block_encoding_H": 1}
    with pytest.raises(OverlapError):
        ground_state_prep(Z, init_basis_state(1, 0))
    with pytest.raises(DegeneracyError):
        ground_state_prep(np.diag([0.0, 0.0, 1.0, 2.0]))


def test_ground_state_prep_random():
    rng = np.random.default_rng(9)
    for _ in range(10):
        h = random_hermitian(8, rng)
        prep, model = ground_state_prep(h, random_state(3, rng))
        eig = exact_eigensolve(h)
        v = prep.state()
        assert float(np.vdot(v, h @ v).real) == pytest.approx(eig.ground_energy, abs=1e-10)
        assert 0 < model.overlap <= 1
        ratio = model.alpha_norm / (model.overlap * model.gap)
        assert prep.cost["block_encoding_H"] == math.ceil(ratio)


def test_identity_one_body_fully_classical():
    h = toy_path(2).hamiltonian(0.0)
    op = OneBodyOperator(np.eye(2))
    psum = projector_decomposition(op)
    psi0 = exact_eigensolve(h).ground_state.amplitudes
    eps = 1e-2
    idx = [set(range(g.size)) for g in psum.groups]
    tol = classical_tolerances(psum, idx, eps)
    est = tuple({i: max(float(np.vdot(psi0, g.projectors[i] @ psi0).real), t) for i in s}
                for g, s, t in zip(psum.groups, idx, tol))
    rep = estimate_observable_on_ground_state(h, op, ClassicalPriorSet(est, tuple(tol)),
                                              GroupPriors((None, None)), eps)
    number = float(np.vdot(psi0, second_quantized(np.eye(2)) @ psi0).real)
    assert rep.total_queries == 0
    assert rep.estimate == pytest.approx(number, abs=eps)
    assert rep.metadata["state_prep"]["gap"] > 0


def test_two_orbital_toy_observable():
    h = toy_path(2).hamiltonian(0.3)
    psi0 = exact_eigensolve(h).ground_state.amplitudes
    rng = np.random.default_rng(4)
    eps, ok = 1e-2, 0
    for seed in range(20):
        a = random_symmetric(rng, 2)
        psum = projector_decomposition(OneBodyOperator(a))
        classical, priors = exact_priors(psum, psi0, eps)
        rep = estimate_observable_on_ground_state(h, OneBodyOperator(a), classical, priors, eps,
                                                  seed=seed)
        want = float(np.vdot(psi0, second_quantized(a) @ psi0).real)
        ok += abs(rep.estimate - want) <= eps
        assert rep.queries.get("block_encoding_H", 0) > 0 or rep.total_queries == 0
    assert ok >= 19


def test_injected_prior_violation():
    # ground state |1> is fully occupied, so the residual probability is 1 > P0
    with pytest.raises(PriorViolationError) as exc:
        estimate_observable_on_ground_state(Z, OneBodyOperator(np.array([[1.0]])),
                                            ClassicalPriorSet.empty(2), GroupPriors((1, None)),
                                            1e-2, backend="exact_subspace")
    assert exc.value.group == 0
