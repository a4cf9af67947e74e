"""Query-counted oracles, Grover-type walks and square-root LCU encodings.

Every oracle keeps a call counter.  One forward, inverse or controlled
application costs one query.  An oracle may stand for a composite circuit, in
which case ``cost`` maps the underlying primitive names to the number of
primitive queries spent per call and :meth:`queries` expands the counter.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError
from .statevector import OPERATOR_TOL, DenseOperator, OperatorLike, StateVector, as_array

# Eigenphases of the walk -R_psi R_Pi on its invariant plane are
# +-EIGENPHASE_FACTOR * arcsin(sqrt(P)), P = <psi|Pi|psi>.  Measured by
# diagonalizing the simulated walk (see tests/test_oracles.py).
EIGENPHASE_FACTOR = 2.0


def merge_queries(*maps: dict[str, int]) -> dict[str, int]:
    total: Counter[str] = Counter()
    for m in maps:
        total.update(m)
    return dict(sorted(total.items()))


@dataclass(eq=False)
class StatePrepOracle:
    """Unitary ``O`` with ``O|0...0> = |psi>``."""

    unitary: np.ndarray
    name: str = "O_psi"
    cost: dict[str, int] | None = None
    calls: int = 0

    def __post_init__(self) -> None:
        u = as_array(self.unitary)
        if u.ndim != 2 or u.shape[0] != u.shape[1] or u.shape[0] & (u.shape[0] - 1):
            raise ShapeError(f"state preparation unitary has bad shape {u.shape}")
        if u.shape[0] <= 64:
            err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
            if err > OPERATOR_TOL:
                raise ValueError(f"state preparation matrix is not unitary ({err:.2e})")
        self.unitary = u
        if self.cost is None:
            self.cost = {self.name: 1}

    @classmethod
    def from_state(cls, state: StateVector | np.ndarray, name: str = "O_psi") -> StatePrepOracle:
        """Complete ``state`` to a unitary whose first column is ``state``."""
        v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state, dtype=complex)
        return cls(householder_completion(v), name=name)

    @property
    def dim(self) -> int:
        return self.unitary.shape[0]

    @property
    def n_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def state(self) -> np.ndarray:
        """Prepared amplitudes, without charging a query (simulation bookkeeping)."""
        return self.unitary[:, 0]

    def prepare(self) -> StateVector:
        self.calls += 1
        return StateVector.from_vector(self.unitary[:, 0])

    def apply(self, vec: np.ndarray) -> np.ndarray:
        self.calls += 1
        return self.unitary @ vec

    def apply_inverse(self, vec: np.ndarray) -> np.ndarray:
        self.calls += 1
        return self.unitary.conj().T @ vec

    def charge(self, n: int) -> None:
        self.calls += int(n)

    def queries(self) -> dict[str, int]:
        return {k: v * self.calls for k, v in self.cost.items()}


@dataclass(eq=False)
class ReflectionOracle:
    """Reflection ``R = I - 2 Pi`` about the range of a projector.

    When ``backing`` is set the reflection is synthesized from that state
    preparation and each application charges ``backing_calls`` queries to it
    instead of counting itself.
    """

    projector: np.ndarray
    name: str = "R_Pi"
    cost: dict[str, int] | None = None
    calls: int = 0
    backing: StatePrepOracle | None = None
    backing_calls: int = 2
    check: bool = True

    def __post_init__(self) -> None:
        p = as_array(self.projector)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ShapeError(f"projector has bad shape {p.shape}")
        if self.check:
            if np.max(np.abs(p - p.conj().T)) > OPERATOR_TOL:
                raise ValueError("projector is not hermitian")
            if np.max(np.abs(p @ p - p)) > OPERATOR_TOL:
                raise ValueError("projector is not idempotent")
        self.projector = p
        if self.cost is None:
            self.cost = {self.name: 1}

    @classmethod
    def diagonal(cls, mask: np.ndarray, name: str = "R_Pi") -> ReflectionOracle:
        return cls(np.diag(np.asarray(mask, dtype=complex)), name=name, check=False)

    @property
    def dim(self) -> int:
        return self.projector.shape[0]

    @property
    def reflection(self) -> np.ndarray:
        return np.eye(self.dim) - 2 * self.projector

    def reflect(self, vec: np.ndarray) -> np.ndarray:
        """Uncharged application."""
        return vec - 2 * (self.projector @ vec)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        self.charge(1)
        return self.reflect(vec)

    def charge(self, n: int) -> None:
        if self.backing is not None:
            self.backing.charge(self.backing_calls * int(n))
        else:
            self.calls += int(n)

    def queries(self) -> dict[str, int]:
        if self.backing is not None:
            return {}
        return {k: v * self.calls for k, v in self.cost.items()}


def householder_completion(v: np.ndarray) -> np.ndarray:
    """Unitary whose first column is the unit vector ``v``."""
    v = np.asarray(v, dtype=complex)
    norm = np.linalg.norm(v)
    if abs(norm - 1.0) > 1e-10:
        raise ValueError(f"vector must be normalized (norm {norm})")
    dim = v.shape[0]
    phase = v[0] / abs(v[0]) if abs(v[0]) > 1e-15 else 1.0
    # reflect e0 onto v / phase, then restore the phase on the first column only
    w = v / phase
    e0 = np.zeros(dim, dtype=complex)
    e0[0] = 1.0
    u = w - e0
    un = np.vdot(u, u).real
    if un < 1e-30:
        h = np.eye(dim, dtype=complex)
    else:
        h = np.eye(dim, dtype=complex) - 2.0 * np.outer(u, u.conj()) / un
    h[:, 0] *= phase
    return h


def reflection_from_prep(prep: StatePrepOracle) -> ReflectionOracle:
    """``R_psi = I - 2 O|0><0|O^dag``; each use costs two queries to ``prep``."""
    psi = prep.state()
    return ReflectionOracle(np.outer(psi, psi.conj()), name=f"R[{prep.name}]", backing=prep,
                            backing_calls=2, check=False)


class WalkOperator:
    """The (boosted) walk ``W' = -(I - 2 W^mu O|0><0|O^dag W^mu^dag)(I - 2 Pi)``.

    ``mu = 0`` gives the plain walk ``W = -R_psi R_Pi``.  The boosted state
    ``W^mu O|0>`` is cached once per instance; query charges follow the
    counting rule (2 mu + 2) prep and (mu + 1) reflection queries per ``W'``
    application, and (2 mu + 1) prep plus mu reflection queries to prepare the
    boosted initial state.
    """

    def __init__(self, prep: StatePrepOracle, r_pi: ReflectionOracle, mu: int = 0) -> None:
        if prep.dim != r_pi.dim:
            raise ShapeError(f"prep dimension {prep.dim} != reflection dimension {r_pi.dim}")
        if mu < 0:
            raise ValueError("mu must be non-negative")
        self.prep = prep
        self.r_pi = r_pi
        self.mu = int(mu)
        psi = prep.state()
        for _ in range(self.mu):
            psi = self._plain_walk(psi)
        self._boosted = psi

    @property
    def dim(self) -> int:
        return self.prep.dim

    @property
    def boosted_state(self) -> np.ndarray:
        return self._boosted

    @property
    def charge_rule(self) -> dict[str, int]:
        return {"prep": 2 * self.mu + 2, "reflection": self.mu + 1}

    def _plain_walk(self, vec: np.ndarray) -> np.ndarray:
        psi = self.prep.state()
        v = self.r_pi.reflect(vec)
        return -(v - 2 * psi * np.vdot(psi, v))

    def apply_uncharged(self, vec: np.ndarray) -> np.ndarray:
        b = self._boosted
        v = self.r_pi.reflect(vec)
        return -(v - 2 * b * np.vdot(b, v))

    def apply(self, vec: np.ndarray, times: int = 1) -> np.ndarray:
        for _ in range(times):
            vec = self.apply_uncharged(vec)
        self.charge(times)
        return vec

    def charge(self, applications: int) -> None:
        self.prep.charge((2 * self.mu + 2) * applications)
        self.r_pi.charge((self.mu + 1) * applications)

    def prepare_initial(self) -> np.ndarray:
        self.prep.charge(2 * self.mu + 1)
        self.r_pi.charge(self.mu)
        return self._boosted

    def matrix(self) -> np.ndarray:
        b = self._boosted
        refl_b = np.eye(self.dim) - 2 * np.outer(b, b.conj())
        return -refl_b @ self.r_pi.reflection

    def queries(self) -> dict[str, int]:
        return merge_queries(self.prep.queries(), self.r_pi.queries())


def make_walk(prep: StatePrepOracle, r_pi: ReflectionOracle) -> WalkOperator:
    return WalkOperator(prep, r_pi, 0)


def make_boosted_walk(prep: StatePrepOracle, r_pi: ReflectionOracle, mu: int) -> WalkOperator:
    return WalkOperator(prep, r_pi, mu)


def invariant_plane(walk: WalkOperator | OperatorLike, initial: np.ndarray, tol: float = 1e-8
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis of the smallest walk-invariant subspace containing ``initial``
    and the walk restricted to it.

    Returns ``(basis, restriction)`` with ``basis`` of shape ``(dim, 2)`` and
    ``restriction`` a 2x2 matrix.  If ``initial`` is an eigenvector the second
    basis direction is a dummy with trivial action.  Raises ``ContractError``
    when the orbit of ``initial`` is not two-dimensional.
    """
    from .errors import ContractError

    if isinstance(walk, WalkOperator):
        act = walk.apply_uncharged
    else:
        m = as_array(walk)
        act = lambda v: m @ v  # noqa: E731
    v0 = np.asarray(initial, dtype=complex)
    v0 = v0 / np.linalg.norm(v0)
    w0 = act(v0)
    a00 = np.vdot(v0, w0)
    r = w0 - a00 * v0
    nr = np.linalg.norm(r)
    if nr < 1e-12:
        if abs(abs(a00) - 1.0) > tol:
            raise ContractError("initial state is not an eigenvector of the walk")
        basis = np.stack([v0, np.zeros_like(v0)], axis=1)
        return basis, np.array([[a00, 0.0], [0.0, 1.0]], dtype=complex)
    v1 = r / nr
    w1 = act(v1)
    a01 = np.vdot(v0, w1)
    a11 = np.vdot(v1, w1)
    leak = np.linalg.norm(w1 - a01 * v0 - a11 * v1)
    if leak > tol:
        raise ContractError(f"initial state does not span an invariant plane (leakage {leak:.2e})")
    restriction = np.array([[a00, a01], [nr, a11]], dtype=complex)
    return np.stack([v0, v1], axis=1), restriction


# -- block encodings --------------------------------------------------------


def register_width(n_states: int) -> int:
    return max(1, math.ceil(math.log2(n_states)))


@dataclass(eq=False)
class BlockEncodedOperator:
    """``PREPARE``/``SELECT`` pair for ``A = sum_j alpha_j U_j`` with ``alpha_j >= 0``.

    Layout: system qubits first (least significant), then the index register.
    """

    prepare: np.ndarray
    select: np.ndarray
    alpha: float
    n_system: int
    index_width: int
    prepare_calls: int = 0
    select_calls: int = 0

    @property
    def unitary(self) -> np.ndarray:
        prep = np.kron(self.prepare, np.eye(2**self.n_system))
        return prep.conj().T @ self.select @ prep

    def block(self) -> np.ndarray:
        """Top-left system block of ``PREPARE^dag SELECT PREPARE``, i.e. ``A / alpha``."""
        d = 2**self.n_system
        self.prepare_calls += 2
        self.select_calls += 1
        return self.unitary[:d, :d]

    def queries(self) -> dict[str, int]:
        return {"PREPARE_A": self.prepare_calls, "SELECT_A": self.select_calls}


def block_encode(alphas: Sequence[float], unitaries: Sequence[OperatorLike]) -> BlockEncodedOperator:
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < 0) or alphas.sum() <= 0:
        raise ValueError("coefficients must be non-negative with positive sum")
    if len(alphas) != len(unitaries):
        raise ShapeError("one coefficient per unitary is required")
    us = [as_array(u) for u in unitaries]
    d = us[0].shape[0]
    n_system = d.bit_length() - 1
    w = register_width(len(alphas)) if len(alphas) > 1 else 1
    amp = np.zeros(2**w, dtype=complex)
    amp[: len(alphas)] = np.sqrt(alphas / alphas.sum())
    prepare = householder_completion(amp)
    select = np.zeros((2**w * d, 2**w * d), dtype=complex)
    for j in range(2**w):
        block = us[j] if j < len(us) else np.eye(d)
        if block.shape != (d, d):
            raise ShapeError("all unitaries must share one dimension")
        select[j * d:(j + 1) * d, j * d:(j + 1) * d] = block
    return BlockEncodedOperator(prepare, select, float(alphas.sum()), n_system, w)


# -- projector sums and the square-root encoding ----------------------------


@dataclass
class ProjectorGroup:
    """A convex block ``sign * sum_k beta_k Pi_k`` with ``beta_k >= 0``."""

    sign: int
    betas: np.ndarray
    projectors: list[np.ndarray]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.betas = np.asarray(self.betas, dtype=float)
        if self.sign not in (1, -1):
            raise ValueError(f"group sign must be +1 or -1, got {self.sign}")
        if np.any(self.betas < 0):
            raise ValueError("group coefficients must be non-negative")
        if len(self.betas) != len(self.projectors):
            raise ShapeError("one coefficient per projector is required")
        if not self.labels:
            self.labels = [f"P{k}" for k in range(len(self.betas))]

    @property
    def size(self) -> int:
        return len(self.betas)

    @property
    def normalization(self) -> float:
        """``(sum_k sqrt(beta_k))**2``."""
        return float(np.sum(np.sqrt(self.betas)) ** 2)

    def matrix(self) -> np.ndarray:
        return sum(b * p for b, p in zip(self.betas, self.projectors))

    def subgroup(self, keep: Sequence[int]) -> ProjectorGroup:
        keep = list(keep)
        return ProjectorGroup(self.sign, self.betas[keep], [self.projectors[k] for k in keep],
                              [self.labels[k] for k in keep])


@dataclass
class ProjectorSum:
    """``A = sum_j s_j sum_k beta_jk Pi_jk + offset * I``."""

    groups: list[ProjectorGroup]
    offset: float = 0.0
    n_qubits: int | None = None

    def __post_init__(self) -> None:
        dims = {p.shape[0] for g in self.groups for p in g.projectors}
        if len(dims) > 1:
            raise ShapeError(f"projectors of mixed dimensions {sorted(dims)}")
        if self.n_qubits is None:
            if not dims:
                raise ValueError("n_qubits is required for a sum without projectors")
            self.n_qubits = dims.pop().bit_length() - 1

    @property
    def dim(self) -> int:
        return 2**self.n_qubits

    def matrix(self) -> np.ndarray:
        m = self.offset * np.eye(self.dim, dtype=complex)
        for g in self.groups:
            if g.size:
                m = m + g.sign * g.matrix()
        return m

    def expectation(self, state: StateVector | np.ndarray) -> float:
        v = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
        return float(np.vdot(v, self.matrix() @ v).real)


def beta_norms(psum: ProjectorSum) -> tuple[float, float]:
    """``(||beta||_{1,1}, ||beta||_{1,1/2})``."""
    n11 = float(sum(g.betas.sum() for g in psum.groups))
    n1h = float(sum(g.normalization for g in psum.groups))
    return n11, n1h


@dataclass(frozen=True)
class PreparePi:
    """``PREPARE_pi`` on the (k, y) ancillas: y is local qubit 0, k the qubits above."""

    operator: DenseOperator
    betas: np.ndarray
    k_width: int

    @property
    def amplitudes(self) -> np.ndarray:
        return self.operator.entries[:, 0]


@dataclass(frozen=True)
class SelectPi:
    """``SELECT_pi`` over system, mirror, y and k registers (in that bit order)."""

    operator: DenseOperator
    n_system: int
    mirror_width: int
    k_width: int
    n_terms: int


@dataclass(frozen=True)
class SqrtEncoding:
    u_pi: np.ndarray
    n_system: int
    k_width: int
    mirror_width: int
    normalization: float
    betas: np.ndarray

    @property
    def n_qubits(self) -> int:
        return self.n_system + self.mirror_width + 1 + self.k_width

    def flag_mask(self) -> np.ndarray:
        """Boolean mask over basis states with the k and y registers all zero."""
        idx = np.arange(2**self.n_qubits)
        return (idx >> (self.n_system + self.mirror_width)) == 0


def build_prepare_pi(betas: Sequence[float], k_width: int | None = None) -> PreparePi:
    betas = np.asarray(betas, dtype=float)
    if betas.ndim != 1 or len(betas) == 0:
        raise ShapeError("betas must be a non-empty vector")
    if np.any(betas < 0):
        raise ValueError("betas must be non-negative")
    if not np.any(betas > 0):
        raise ValueError("at least one beta must be positive")
    K = len(betas)
    w = register_width(K + 1) if k_width is None else k_width
    if 2**w < K + 1:
        raise ShapeError(f"k register of width {w} cannot index {K} terms")
    norm = np.sqrt(np.sum(np.sqrt(betas)))
    amp = np.zeros(2 ** (w + 1), dtype=complex)
    for k in range(1, K + 1):
        a = betas[k - 1] ** 0.25 / (np.sqrt(2) * norm)
        amp[2 * k] = a      # |k>|y=0>
        amp[2 * k + 1] = a  # |k>|y=1>
    return PreparePi(DenseOperator(householder_completion(amp), "unitary"), betas, w)


def _mirror_swap(k: int, width: int) -> np.ndarray:
    m = np.eye(2**width, dtype=complex)
    m[[0, k]] = m[[k, 0]]
    return m


def build_select_pi(reflections: Sequence[ReflectionOracle | OperatorLike],
                    mirror_width: int | None = None) -> SelectPi:
    """``|k>|y>|psi>|phi> -> |k> Z|y> (R_k^y (x) (|0><k| + |k><0|)) |psi>|phi>``.

    ``reflections`` holds the reflection oracles (or projector matrices) for
    k = 1..K.  Unused k values act as the identity.
    """
    projs = [r.projector if isinstance(r, ReflectionOracle) else as_array(r) for r in reflections]
    if not projs:
        raise ShapeError("need at least one reflection")
    K = len(projs)
    d = projs[0].shape[0]
    n = d.bit_length() - 1
    w = register_width(K + 1) if mirror_width is None else mirror_width
    if 2**w < K + 1:
        raise ShapeError(f"mirror register of width {w} has fewer than K+1={K + 1} states")
    inner = d * 2**w
    total = inner * 2 ** (w + 1)
    sel = np.zeros((total, total), dtype=complex)
    eye_inner = np.eye(inner, dtype=complex)
    for k in range(2**w):
        for y in (0, 1):
            off = (2 * k + y) * inner
            if 1 <= k <= K:
                refl = np.eye(d) - 2 * projs[k - 1] if y else np.eye(d)
                block = np.kron(_mirror_swap(k, w), refl)
                if y:
                    block = -block
            else:
                block = eye_inner
            sel[off:off + inner, off:off + inner] = block
    return SelectPi(DenseOperator(sel, "general"), n, w, w, K)


def build_u_pi(prepare_pi: PreparePi, select_pi: SelectPi) -> SqrtEncoding:
    """``U_pi = (PREPARE^dag (x) 1) SELECT (PREPARE (x) 1)``."""
    if prepare_pi.k_width != select_pi.k_width or len(prepare_pi.betas) != select_pi.n_terms:
        raise ShapeError("PREPARE_pi and SELECT_pi disagree on the k register")
    low = 2 ** (select_pi.n_system + select_pi.mirror_width)
    prep = np.kron(prepare_pi.operator.entries, np.eye(low))
    u = prep.conj().T @ select_pi.operator.entries @ prep
    norm = float(np.sum(np.sqrt(prepare_pi.betas)) ** 2)
    return SqrtEncoding(u, select_pi.n_system, prepare_pi.k_width, select_pi.mirror_width, norm,
                        prepare_pi.betas)


def sqrt_encoding(group: ProjectorGroup) -> SqrtEncoding:
    return build_u_pi(build_prepare_pi(group.betas), build_select_pi(group.projectors))


def success_probability_instance(enc: SqrtEncoding, prep: StatePrepOracle
                                 ) -> tuple[StatePrepOracle, ReflectionOracle]:
    """Combine ``U_pi`` with the state preparation into an AAE instance.

    The marked subspace is the one where the k and y ancillas read zero; its
    Born probability equals ``<psi|A_j|psi> / (sum_k sqrt(beta_k))**2``.  The
    mirror register is left unconstrained since it ends in ``|k>``.
    """
    if prep.n_qubits != enc.n_system:
        raise ShapeError(f"state preparation acts on {prep.n_qubits} qubits, "
                         f"encoding expects {enc.n_system}")
    anc = 2 ** (enc.n_qubits - enc.n_system)
    combined = enc.u_pi @ np.kron(np.eye(anc), prep.unitary)
    cost = merge_queries({"PREPARE_pi": 2, "SELECT_pi": 1}, prep.cost)
    oracle = StatePrepOracle(combined, name=f"U_pi.{prep.name}", cost=cost)
    marker = ReflectionOracle.diagonal(enc.flag_mask().astype(float), name="R_flag")
    return oracle, marker
