"""Fermionic one-body operators, their projector decompositions, Hamiltonian
paths with drift bounds, and observable estimation on ground states."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import DegeneracyError, GapError, OverlapError, ShapeError
from .estimation import (
    ClassicalPriorSet,
    EstimateReport,
    GroupPriors,
    estimate_with_classical_priors,
)
from .oracles import ProjectorGroup, ProjectorSum, StatePrepOracle, beta_norms
from .statevector import (
    OPERATOR_TOL,
    StateVector,
    as_array,
    exact_eigensolve,
    pauli_matrix,
)

PATH_SAMPLES = 64
LIPSCHITZ_SLACK = 1.1
DEGENERACY_TOL = 1e-8


@dataclass(frozen=True)
class OneBodyOperator:
    """``A = sum_pq A_pq a_p^dag a_q`` on ``n_orbitals`` spin orbitals (orbital p = qubit p)."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"one-body matrix must be square, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T), initial=0.0) > OPERATOR_TOL:
            raise ValueError("one-body matrix must be hermitian")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_orbitals(self) -> int:
        return self.matrix.shape[0]

    def require_real(self) -> np.ndarray:
        if np.max(np.abs(self.matrix.imag), initial=0.0) > OPERATOR_TOL:
            raise ValueError("complex one-body coefficients are not supported; only real-symmetric "
                             "matrices map onto the XX/YY/Z projector form (split a complex "
                             "operator into real and imaginary observables first)")
        return self.matrix.real


@dataclass(frozen=True)
class PauliString:
    coefficient: float
    letters: str

    def matrix(self) -> np.ndarray:
        return self.coefficient * pauli_matrix(self.letters)


def _hop_letters(n: int, p: int, q: int, end: str) -> str:
    letters = ["I"] * n
    letters[p] = letters[q] = end
    for r in range(p + 1, q):
        letters[r] = "Z"
    return "".join(letters)


def jordan_wigner_one_body(op: OneBodyOperator) -> list[PauliString]:
    """Pauli strings of a real-symmetric one-body operator.

    ``A_pq (a_p^dag a_q + h.c.) = A_pq/2 (X Z..Z X + Y Z..Z Y)`` for ``p < q``
    and ``A_pp a_p^dag a_p = A_pp (I - Z_p)/2``.  Identity pieces are merged
    into one leading ``I`` string.
    """
    a = op.require_real()
    n = op.n_orbitals
    identity = 0.0
    out: list[PauliString] = []
    for p in range(n):
        if a[p, p] != 0:
            identity += a[p, p] / 2
            out.append(PauliString(float(-a[p, p] / 2), _hop_letters(n, p, p, "Z")))
    for p, q in itertools.combinations(range(n), 2):
        if a[p, q] != 0:
            out.append(PauliString(float(a[p, q] / 2), _hop_letters(n, p, q, "X")))
            out.append(PauliString(float(a[p, q] / 2), _hop_letters(n, p, q, "Y")))
    if identity != 0:
        out.insert(0, PauliString(float(identity), "I" * n))
    return out


def pauli_sum_matrix(strings: Sequence[PauliString], n_qubits: int) -> np.ndarray:
    m = np.zeros((2**n_qubits, 2**n_qubits), dtype=complex)
    for s in strings:
        m += s.matrix()
    return m


def projector_decomposition(op: OneBodyOperator) -> ProjectorSum:
    """Split a real-symmetric one-body operator into two convex projector groups.

    Uses ``Pi^{+X}_pq = (I + X Z..Z X)/2``, ``Pi^{+Y}_pq`` likewise and
    ``Pi^{-Z}_p = (I - Z_p)/2``.  Positive coefficients go to group 0 (sign +1),
    magnitudes of negative ones to group 1 (sign -1); the offset is
    ``-sum_{p<q} A_pq``.
    """
    a = op.require_real()
    n = op.n_orbitals
    eye = np.eye(2**n)
    terms: list[tuple[float, np.ndarray, str]] = []
    for p, q in itertools.combinations(range(n), 2):
        if a[p, q] != 0:
            terms.append((a[p, q], (eye + pauli_matrix(_hop_letters(n, p, q, "X"))) / 2,
                          f"+X[{p},{q}]"))
            terms.append((a[p, q], (eye + pauli_matrix(_hop_letters(n, p, q, "Y"))) / 2,
                          f"+Y[{p},{q}]"))
    for p in range(n):
        if a[p, p] != 0:
            terms.append((a[p, p], (eye - pauli_matrix(_hop_letters(n, p, p, "Z"))) / 2, f"-Z[{p}]"))
    groups = []
    for sign in (1, -1):
        sel = [(abs(c), P, lab) for c, P, lab in terms if c * sign > 0]
        groups.append(ProjectorGroup(sign, [s[0] for s in sel], [s[1] for s in sel],
                                     [s[2] for s in sel]))
    offset = -float(sum(a[p, q] for p, q in itertools.combinations(range(n), 2)))
    return ProjectorSum(groups, offset, n)


# -- plain-text matrix files -------------------------------------------------


def read_one_body_matrix(path: str | Path) -> OneBodyOperator:
    """Read a one-body matrix: a header line ``N`` then ``N*N`` row-major values."""
    tokens = Path(path).read_text().split()
    if not tokens:
        raise ValueError(f"{path}: empty matrix file")
    try:
        n = int(tokens[0])
    except ValueError:
        raise ValueError(f"{path}: header must be the integer dimension N") from None
    values = tokens[1:]
    if n < 1 or len(values) != n * n:
        raise ShapeError(f"{path}: expected {n * n} entries after header N={n}, found {len(values)}")
    return OneBodyOperator(np.array([complex(v) for v in values]).reshape(n, n))


def write_one_body_matrix(op: OneBodyOperator, path: str | Path) -> None:
    a = op.require_real()
    rows = [" ".join(repr(float(x)) for x in row) for row in a]
    Path(path).write_text(f"{op.n_orbitals}\n" + "\n".join(rows) + "\n")


# -- Hamiltonian paths -------------------------------------------------------


def pauli_decompose(h: np.ndarray, tol: float = 1e-14) -> list[tuple[float, str]]:
    """Coefficients ``tr(P h) / 2^n`` of a hermitian matrix over Pauli strings."""
    h = as_array(h)
    n = h.shape[0].bit_length() - 1
    out = []
    for letters in itertools.product("IXYZ", repeat=n):
        s = "".join(letters)
        c = np.trace(pauli_matrix(s) @ h).real / 2**n
        if abs(c) > tol:
            out.append((float(c), s))
    return out


@dataclass(frozen=True)
class PathTerm:
    alpha: Callable[[complex], complex]
    alpha_dot: Callable[[complex], complex]
    unitary: np.ndarray
    label: str = ""


@dataclass(frozen=True)
class HamiltonianPath:
    """``H(x) = sum_j alpha_j(x) U_j`` on ``x in [-1, 1]`` with hermitian unitaries ``U_j``.

    The coefficient functions must accept complex arguments when the path is
    continued into the complex plane.
    """

    terms: tuple[PathTerm, ...]
    n_qubits: int

    @classmethod
    def linear(cls, h0: np.ndarray, v: np.ndarray) -> HamiltonianPath:
        """``H(x) = H0 + x V`` expanded over Pauli strings."""
        h0, v = as_array(h0), as_array(v)
        if h0.shape != v.shape:
            raise ShapeError("H0 and V shapes differ")
        c0 = dict((s, c) for c, s in pauli_decompose(h0))
        c1 = dict((s, c) for c, s in pauli_decompose(v))
        terms = []
        for s in sorted(set(c0) | set(c1)):
            a, b = c0.get(s, 0.0), c1.get(s, 0.0)
            terms.append(PathTerm(lambda x, a=a, b=b: a + b * x, lambda x, b=b: b + 0 * x,
                                  pauli_matrix(s), s))
        return cls(tuple(terms), h0.shape[0].bit_length() - 1)

    def hamiltonian(self, x: complex) -> np.ndarray:
        return sum(t.alpha(x) * t.unitary for t in self.terms)

    def derivative(self, x: complex) -> np.ndarray:
        return sum(t.alpha_dot(x) * t.unitary for t in self.terms)

    def alphas(self, x: float) -> np.ndarray:
        return np.array([t.alpha(x) for t in self.terms])

    def alpha_dots(self, x: float) -> np.ndarray:
        return np.array([t.alpha_dot(x) for t in self.terms])

    def samples(self, n: int = PATH_SAMPLES) -> np.ndarray:
        return np.linspace(-1.0, 1.0, n)

    def gap(self, x: float) -> float:
        return exact_eigensolve(self.hamiltonian(x)).gap

    def ground_state(self, x: float) -> np.ndarray:
        return exact_eigensolve(self.hamiltonian(x)).ground_state.amplitudes

    def min_gap(self, n: int = PATH_SAMPLES) -> float:
        return min(self.gap(x) for x in self.samples(n))

    def max_h_dot(self, n: int = PATH_SAMPLES, slack: float = LIPSCHITZ_SLACK) -> float:
        """Sampled ``max ||dH/dx||`` (spectral norm) times a Lipschitz slack factor."""
        return slack * max(np.linalg.norm(self.derivative(x), 2) for x in self.samples(n))

    def alpha_norm(self, x: float) -> float:
        return float(np.sum(np.abs(self.alphas(x))))

    def check(self, n: int = 16, step: float = 1e-6) -> None:
        """Validate hermiticity and the supplied coefficient derivatives at ``n`` points."""
        for x in np.linspace(-1 + step, 1 - step, n):
            h = self.hamiltonian(x)
            if np.max(np.abs(h - h.conj().T)) > OPERATOR_TOL:
                raise ValueError(f"H({x:g}) is not hermitian")
            fd = (self.alphas(x + step) - self.alphas(x - step)) / (2 * step)
            if np.max(np.abs(fd - self.alpha_dots(x))) > 1e-6:
                raise ValueError(f"coefficient derivatives disagree with finite differences at x={x:g}")


def toy_path(n_qubits: int = 2, coupling: float = 0.05, min_gap: float = 0.5) -> HamiltonianPath:
    """Gapped real-symmetric test family ``H(x) = H0 + x V``.

    ``H0`` is a transverse-field chain with distinct local fields and ``V`` a
    weak mixed perturbation scaled by ``coupling``.  The gap is checked on
    64 path samples; :class:`GapError` is raised if it drops below ``min_gap``.
    """
    if n_qubits not in (2, 3):
        raise ValueError("toy paths are defined for 2 or 3 qubits")
    n = n_qubits
    fields = [1.0, 0.7, 0.45][:n]

    def op(letter_at: dict[int, str]) -> np.ndarray:
        return pauli_matrix("".join(letter_at.get(q, "I") for q in range(n)))

    h0 = sum(-f * op({q: "Z"}) for q, f in enumerate(fields))
    h0 = h0 + sum(0.3 * op({q: "X"}) for q in range(n))
    h0 = h0 + sum(0.2 * op({q: "X", q + 1: "X"}) for q in range(n - 1))
    v = sum(op({q: "Z", q + 1: "Z"}) for q in range(n - 1)) + 0.5 * op({0: "X"})
    v = coupling * (v + 0.5 * op({n - 1: "Z"}))
    path = HamiltonianPath.linear(h0, v)
    g = path.min_gap()
    if g < min_gap:
        raise GapError(f"toy path gap {g:.3g} below required {min_gap}")
    return path


def state_motion_bound(max_h_dot: float, min_gap: float) -> float:
    """Bound on ``||psi(1) - psi(0)||`` along a gapped path: ``max||dH|| / min gap``."""
    if min_gap <= 0:
        raise ValueError("min_gap must be positive")
    return max_h_dot / min_gap


def projector_drift_bound(max_h_dot: float, min_gap: float) -> float:
    """Bound on the change of any projector expectation along the path."""
    return 2 * state_motion_bound(max_h_dot, min_gap)


def extrapolation_radius(min_gap: float, max_p0: float, beta_norm_1: float, epsilon: float) -> float:
    """Largest ``max||dH||`` for which priors stay valid: ``min(gamma eps/(4||beta||_1), gamma(1/4 - max P0))``."""
    if max_p0 > 0.25:
        raise ValueError(f"max_p0={max_p0} exceeds 1/4; canonical priors cannot hold")
    if min(min_gap, beta_norm_1, epsilon) <= 0 or max_p0 < 0:
        raise ValueError("min_gap, beta_norm_1 and epsilon must be positive")
    return min(min_gap * epsilon / (4 * beta_norm_1), min_gap * (0.25 - max_p0))


# -- ground states -----------------------------------------------------------


@dataclass(frozen=True)
class GroundStateCostModel:
    """Analytic cost attribution for filtered ground-state preparation.

    Each preparation is charged ``ceil(alpha_norm / (overlap * gap))`` queries
    to the Hamiltonian block encoding; the state itself is prepared exactly.
    """

    alpha_norm: float
    overlap: float
    gap: float
    eps_psi: float
    ancillas: int
    energy_guess: float

    def __post_init__(self) -> None:
        if min(self.alpha_norm, self.overlap, self.gap, self.eps_psi) <= 0 or self.ancillas < 1:
            raise ValueError("cost model parameters must be positive")
        if self.overlap > 1 + 1e-12:
            raise ValueError("overlap cannot exceed 1")

    @property
    def block_encoding_queries(self) -> int:
        return math.ceil(self.alpha_norm / (self.overlap * self.gap))

    def as_dict(self) -> dict:
        return {"alpha_norm": self.alpha_norm, "overlap": self.overlap, "gap": self.gap,
                "eps_psi": self.eps_psi, "ancillas": self.ancillas,
                "energy_guess": self.energy_guess,
                "block_encoding_queries_per_prep": self.block_encoding_queries}


def reference_state(h: np.ndarray) -> StateVector:
    """Computational basis state at the smallest diagonal entry of ``h``."""
    h = as_array(h)
    n = h.shape[0].bit_length() - 1
    v = np.zeros(h.shape[0], dtype=complex)
    v[int(np.argmin(np.diag(h).real))] = 1.0
    return StateVector(n, v)


def ground_state_prep(
    h: np.ndarray,
    reference: StateVector | np.ndarray | None = None,
    alpha_norm: float | None = None,
    eps_psi: float = 1e-3,
    name: str = "O_psi",
) -> tuple[StatePrepOracle, GroundStateCostModel]:
    """Exact ground-state preparation with an analytic filtering cost.

    ``alpha_norm`` defaults to the spectral norm of ``h``.

    Raises:
        DegeneracyError: gap at most 1e-8.
        OverlapError: the reference is orthogonal to the ground state.
    """
    h = as_array(h)
    eig = exact_eigensolve(h)
    if eig.gap <= DEGENERACY_TOL:
        raise DegeneracyError(f"ground space is degenerate (gap {eig.gap:.3g})")
    if reference is None:
        reference = reference_state(h)
    ref = reference.amplitudes if isinstance(reference, StateVector) else np.asarray(reference)
    overlap = float(abs(np.vdot(ref, eig.ground_state.amplitudes)))
    if overlap <= 1e-12:
        raise OverlapError("reference state has zero overlap with the ground state")
    if alpha_norm is None:
        alpha_norm = float(np.linalg.norm(h, 2))
    ratio = alpha_norm / (overlap * eig.gap)
    model = GroundStateCostModel(
        alpha_norm=alpha_norm, overlap=min(overlap, 1.0), gap=eig.gap, eps_psi=eps_psi,
        ancillas=max(1, math.ceil(math.log2(1 + ratio))), energy_guess=eig.ground_energy)
    oracle = StatePrepOracle.from_state(eig.ground_state, name=name)
    oracle.cost = {name: 1, "block_encoding_H": model.block_encoding_queries}
    return oracle, model


def estimate_observable_on_ground_state(
    h: np.ndarray,
    op: OneBodyOperator,
    classical: ClassicalPriorSet,
    priors: GroupPriors,
    epsilon: float,
    failure: float = 0.05,
    reference: StateVector | None = None,
    backend: str = "qpe",
    seed=None,
    alpha_norm: float | None = None,
) -> EstimateReport:
    """Estimate ``<psi0|A|psi0>`` for the ground state of ``h`` with classical priors."""
    prep, model = ground_state_prep(h, reference, alpha_norm)
    psum = projector_decomposition(op)
    report = estimate_with_classical_priors(psum, classical, priors, prep, epsilon, failure,
                                            backend, seed)
    report.metadata["state_prep"] = model.as_dict()
    report.metadata["beta_norms"] = beta_norms(psum)
    return report


__all__ = [
    "OneBodyOperator", "PauliString", "PathTerm", "HamiltonianPath", "GroundStateCostModel",
    "jordan_wigner_one_body", "pauli_sum_matrix", "projector_decomposition", "beta_norms",
    "read_one_body_matrix", "write_one_body_matrix", "pauli_decompose", "toy_path",
    "state_motion_bound", "projector_drift_bound", "extrapolation_radius", "reference_state",
    "ground_state_prep", "estimate_observable_on_ground_state",
]
