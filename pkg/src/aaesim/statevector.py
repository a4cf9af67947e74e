"""Dense statevector engine.

Register convention is little-endian: qubit 0 is the least significant bit of
the basis index.  Ket labels and outcome bitstrings are written the usual way,
most significant qubit first, so ``|10>`` is basis index 2 (qubit 1 set) and an
outcome ``"01"`` on register ``[0, 1]`` means qubit 0 reads 1 and qubit 1 reads 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Sequence, Union

import numpy as np

from .errors import ResourceLimitError, ShapeError

logger = logging.getLogger(__name__)

MAX_QUBITS = 20
EIGENSOLVE_CAP = 2**10
NORM_TOL = 1e-12
OPERATOR_TOL = 1e-10

Kind = Literal["hermitian", "unitary", "general"]

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
PAULI = {"I": I2, "X": X, "Y": Y, "Z": Z}


@dataclass(frozen=True)
class DenseOperator:
    """A dense complex matrix of power-of-two dimension tagged with its kind.

    Construction validates the tag: unitaries must satisfy ``U^dag U = I`` and
    hermitian operators ``M = M^dag`` to within ``OPERATOR_TOL`` (max-norm).
    """

    entries: np.ndarray
    kind: Kind = "general"

    def __post_init__(self) -> None:
        m = np.asarray(self.entries, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ShapeError(f"operator must be square, got shape {m.shape}")
        dim = m.shape[0]
        if dim < 1 or dim & (dim - 1):
            raise ShapeError(f"operator dimension {dim} is not a power of two")
        if self.kind == "unitary":
            err = np.max(np.abs(m.conj().T @ m - np.eye(dim)))
            if err > OPERATOR_TOL:
                raise ValueError(f"matrix is not unitary (max deviation {err:.2e})")
        elif self.kind == "hermitian":
            err = np.max(np.abs(m - m.conj().T))
            if err > OPERATOR_TOL:
                raise ValueError(f"matrix is not hermitian (max deviation {err:.2e})")
        elif self.kind != "general":
            raise ValueError(f"unknown operator kind {self.kind!r}")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    @property
    def dagger(self) -> DenseOperator:
        return DenseOperator(self.entries.conj().T, self.kind)

    def __matmul__(self, other: DenseOperator) -> DenseOperator:
        kind: Kind = "unitary" if self.kind == other.kind == "unitary" else "general"
        return DenseOperator(self.entries @ other.entries, kind)


OperatorLike = Union[DenseOperator, np.ndarray]


def as_array(op: OperatorLike) -> np.ndarray:
    if isinstance(op, DenseOperator):
        return op.entries
    return np.asarray(op, dtype=complex)


@dataclass(frozen=True)
class StateVector:
    """Normalized amplitudes over ``n_qubits`` qubits.

    ``renormalizations`` counts how many times numerical drift beyond
    ``NORM_TOL`` was corrected while producing this state.
    """

    n_qubits: int
    amplitudes: np.ndarray
    renormalizations: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError("n_qubits must be positive")
        if self.n_qubits > MAX_QUBITS:
            raise ResourceLimitError(f"{self.n_qubits} qubits exceeds the cap of {MAX_QUBITS}")
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != (2**self.n_qubits,):
            raise ShapeError(f"expected {2**self.n_qubits} amplitudes, got shape {a.shape}")
        norm2 = float(np.vdot(a, a).real)
        if abs(norm2 - 1.0) > 1e-8:
            raise ValueError(f"state is not normalized (squared norm {norm2})")
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_vector(cls, vector: Sequence[complex] | np.ndarray, normalize: bool = False) -> StateVector:
        v = np.asarray(vector, dtype=complex)
        dim = v.shape[0]
        if dim < 2 or dim & (dim - 1):
            raise ShapeError(f"vector length {dim} is not a power of two >= 2")
        if normalize:
            v = v / np.linalg.norm(v)
        return cls(dim.bit_length() - 1, v)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def overlap(self, other: StateVector) -> complex:
        """Return ``<self|other>``."""
        return complex(np.vdot(self.amplitudes, other.amplitudes))


def init_basis_state(n_qubits: int, index: int) -> StateVector:
    if not 0 <= index < 2**n_qubits:
        raise IndexError(f"basis index {index} out of range for {n_qubits} qubits")
    a = np.zeros(2**n_qubits, dtype=complex)
    a[index] = 1.0
    return StateVector(n_qubits, a)


def _check_qubits(n: int, qubits: Sequence[int], what: str) -> None:
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"repeated qubit in {what}: {list(qubits)}")
    for q in qubits:
        if not 0 <= q < n:
            raise IndexError(f"{what} qubit {q} out of range for {n} qubits")


def _apply_to_array(
    amplitudes: np.ndarray, n: int, u: np.ndarray, targets: Sequence[int], controls: Sequence[int]
) -> np.ndarray:
    m, nc = len(targets), len(controls)
    psi = np.array(amplitudes, dtype=complex).reshape((2,) * n)
    # tensor axis 0 holds the most significant qubit
    axes = [n - 1 - c for c in controls] + [n - 1 - t for t in reversed(targets)]
    psi = np.moveaxis(psi, axes, list(range(nc + m)))
    sub = psi[(1,) * nc]
    shape = sub.shape
    sub_new = (u @ sub.reshape(2**m, -1)).reshape(shape)
    psi[(1,) * nc] = sub_new
    psi = np.moveaxis(psi, list(range(nc + m)), axes)
    return psi.reshape(-1)


def apply_unitary(
    state: StateVector,
    U: OperatorLike,
    targets: Sequence[int],
    controls: Sequence[int] | None = None,
) -> StateVector:
    """Apply ``U`` to ``targets`` (``targets[0]`` is U's least significant qubit).

    With ``controls`` the gate fires only on basis states where every control
    qubit is 1.
    """
    controls = list(controls or [])
    targets = list(targets)
    u = as_array(U)
    if isinstance(U, DenseOperator) and U.kind not in ("unitary",):
        raise ValueError("apply_unitary requires an operator tagged unitary")
    if u.shape != (2 ** len(targets), 2 ** len(targets)):
        raise ShapeError(f"operator of shape {u.shape} does not act on {len(targets)} target qubits")
    if set(targets) & set(controls):
        raise ValueError(f"targets {targets} overlap controls {controls}")
    _check_qubits(state.n_qubits, targets, "target")
    _check_qubits(state.n_qubits, controls, "control")

    out = _apply_to_array(state.amplitudes, state.n_qubits, u, targets, controls)
    renorm = state.renormalizations
    norm = np.linalg.norm(out)
    if abs(norm - 1.0) > NORM_TOL:
        logger.debug("renormalizing state after norm drift %.3e", norm - 1.0)
        out = out / norm
        renorm += 1
    return StateVector(state.n_qubits, out, renorm)


def _outcome_index(outcome: str, width: int) -> int:
    if len(outcome) != width or set(outcome) - {"0", "1"}:
        raise ShapeError(f"outcome {outcome!r} is not a bitstring of length {width}")
    return int(outcome, 2)


def register_probabilities(state: StateVector, register: Sequence[int]) -> np.ndarray:
    """Born distribution over ``register``; entry ``i`` has ``register[b]`` = bit ``b`` of ``i``."""
    register = list(register)
    _check_qubits(state.n_qubits, register, "register")
    n = state.n_qubits
    probs = np.abs(state.amplitudes.reshape((2,) * n)) ** 2
    axes = [n - 1 - q for q in reversed(register)]
    rest = tuple(a for a in range(n) if a not in axes)
    probs = probs.sum(axis=rest) if rest else probs
    # remaining axes are in increasing tensor-axis order; reorder to MSB-first over register
    kept = sorted(axes)
    probs = np.transpose(probs, [kept.index(a) for a in axes])
    return probs.reshape(-1)


def measurement_probability(state: StateVector, register: Sequence[int], outcome: str) -> float:
    """Probability that ``register`` reads ``outcome`` (written MSB-first, i.e. the
    last character belongs to ``register[0]``)."""
    register = list(register)
    idx = _outcome_index(outcome, len(register))
    p = float(register_probabilities(state, register)[idx])
    return min(max(p, 0.0), 1.0)


def expectation_value(state: StateVector, M: OperatorLike) -> float:
    """Return ``<psi|M|psi>`` for hermitian ``M``."""
    if isinstance(M, DenseOperator):
        if M.kind != "hermitian":
            raise ValueError("expectation_value requires an operator tagged hermitian")
        m = M.entries
    else:
        m = np.asarray(M, dtype=complex)
        if np.max(np.abs(m - m.conj().T)) > OPERATOR_TOL:
            raise ValueError("expectation_value requires a hermitian matrix")
    if m.shape != (state.dim, state.dim):
        raise ShapeError(f"operator shape {m.shape} does not match state dimension {state.dim}")
    val = np.vdot(state.amplitudes, m @ state.amplitudes)
    scale = max(1.0, float(np.max(np.abs(m))))
    if abs(val.imag) > 1e-10 * scale:
        raise ValueError(f"expectation value has imaginary part {val.imag:.2e}")
    return float(val.real)


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ground_energy: float
    gap: float

    @property
    def ground_state(self) -> StateVector:
        return StateVector.from_vector(self.eigenvectors[:, 0])

    def residual(self, H: OperatorLike, index: int = 0) -> float:
        v = self.eigenvectors[:, index]
        return float(np.linalg.norm(as_array(H) @ v - self.eigenvalues[index] * v))


def exact_eigensolve(H: OperatorLike, cap: int = EIGENSOLVE_CAP) -> SpectralData:
    """Full spectrum of a hermitian matrix by dense diagonalization.

    Eigenvector phases are fixed so the largest-magnitude component of each
    vector is real and positive, which keeps ground states continuous along
    smooth real paths.
    """
    h = as_array(H)
    if h.shape[0] > cap:
        raise ResourceLimitError(f"dimension {h.shape[0]} exceeds eigensolve cap {cap}")
    if np.max(np.abs(h - h.conj().T)) > OPERATOR_TOL * max(1.0, float(np.max(np.abs(h)))):
        raise ValueError("exact_eigensolve requires a hermitian matrix")
    h = (h + h.conj().T) / 2
    evals, evecs = np.linalg.eigh(h)
    pivots = np.argmax(np.abs(evecs), axis=0)
    phases = evecs[pivots, np.arange(evecs.shape[1])]
    evecs = evecs * (np.abs(phases) / phases)[None, :]
    gap = float(evals[1] - evals[0]) if len(evals) > 1 else float("inf")
    return SpectralData(evals, evecs, float(evals[0]), gap)


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    """Kronecker product with ``mats[0]`` acting on qubit 0 (the least significant)."""
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(m, out)
    return out


def pauli_matrix(letters: str) -> np.ndarray:
    """Matrix of a Pauli string; ``letters[q]`` acts on qubit ``q``."""
    return kron_all([PAULI[c] for c in letters])


def random_state(n_qubits: int, rng: np.random.Generator) -> StateVector:
    v = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
    return StateVector.from_vector(v, normalize=True)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (z + z.conj().T) / 2


def random_projector(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    if rank is None:
        rank = int(rng.integers(1, dim))
    q = random_unitary(dim, rng)[:, :rank]
    return q @ q.conj().T
