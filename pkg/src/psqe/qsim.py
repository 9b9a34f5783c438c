"""Dense state-vector engine.

Qubit ordering: qubit 0 is the leftmost label in ket notation. For a basis
index ``i`` over ``q`` qubits, qubit ``j`` holds bit ``(i >> (q - 1 - j)) & 1``,
so ``|q_0 q_1 ... q_{q-1}>`` reads as a big-endian binary number. This is the
same convention numpy uses when an amplitude vector is reshaped to ``(2,) * q``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

# Tolerances shared by every module.
ATOL_STATE = 1e-10
ATOL_UNITARY = 1e-9
ATOL_RECONSTRUCT = 1e-8

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
HADAMARD = np.array([[1, 1], [1, -1]], dtype=complex) * _INV_SQRT2
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)


class QuantumStateError(ValueError):
    """Invalid state, gate, or qubit selection."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalized pure state over ``num_qubits`` qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        q = int(amps.size).bit_length() - 1
        if amps.size == 0 or 1 << q != amps.size:
            raise QuantumStateError(f"amplitude count {amps.size} is not a power of two")
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > ATOL_STATE:
            raise QuantumStateError(f"state norm^2 is {norm!r}, expected 1")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @classmethod
    def _trusted(cls, amps: np.ndarray) -> "StateVector":
        # Skips validation; only for results of norm-preserving operations.
        obj = object.__new__(cls)
        object.__setattr__(obj, "amplitudes", _frozen(amps.reshape(-1)))
        return obj

    @classmethod
    def zero(cls, num_qubits: int) -> "StateVector":
        amps = np.zeros(1 << num_qubits, dtype=complex)
        amps[0] = 1.0
        return cls._trusted(amps)

    @classmethod
    def basis(cls, bits: Sequence[int]) -> "StateVector":
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[bits_to_index(bits)] = 1.0
        return cls._trusted(amps)

    @property
    def num_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def kron(self, other: "StateVector") -> "StateVector":
        return StateVector._trusted(np.kron(self.amplitudes, other.amplitudes))

    def allclose(self, other: "StateVector", atol: float = ATOL_STATE) -> bool:
        return self.num_qubits == other.num_qubits and np.allclose(
            self.amplitudes, other.amplitudes, rtol=0.0, atol=atol
        )

    def __repr__(self) -> str:
        return f"StateVector(num_qubits={self.num_qubits})"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise QuantumStateError(f"density matrix must be square, got {m.shape}")
        dim = m.shape[0]
        if dim == 0 or dim & (dim - 1):
            raise QuantumStateError(f"dimension {dim} is not a power of two")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=ATOL_STATE):
            raise QuantumStateError("density matrix is not Hermitian")
        tr = np.trace(m)
        if abs(tr - 1.0) > ATOL_STATE:
            raise QuantumStateError(f"density matrix trace is {tr!r}")
        if np.linalg.eigvalsh(m)[0] < -ATOL_STATE:
            raise QuantumStateError("density matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def num_qubits(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_state(cls, state: StateVector) -> "DensityMatrix":
        a = state.amplitudes
        return cls(np.outer(a, a.conj()))

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityMatrix":
        dim = 1 << num_qubits
        return cls(np.eye(dim, dtype=complex) / dim)

    def max_deviation(self, other: "DensityMatrix | np.ndarray") -> float:
        o = other.matrix if isinstance(other, DensityMatrix) else np.asarray(other)
        return float(np.max(np.abs(self.matrix - o)))

    def __repr__(self) -> str:
        return f"DensityMatrix(num_qubits={self.num_qubits})"


@dataclass(frozen=True, eq=False)
class Unitary:
    """Square unitary acting on ``num_qubits`` qubits."""

    matrix: np.ndarray

    def __post_init__(self):
        u = np.array(self.matrix, dtype=complex)
        if u.ndim != 2 or u.shape[0] != u.shape[1]:
            raise QuantumStateError(f"unitary must be square, got {u.shape}")
        dim = u.shape[0]
        if dim == 0 or dim & (dim - 1):
            raise QuantumStateError(f"dimension {dim} is not a power of two")
        err = np.max(np.abs(u @ u.conj().T - np.eye(dim)))
        if err > ATOL_UNITARY:
            raise QuantumStateError(f"matrix is not unitary (max |UU^dag - I| = {err:.3g})")
        object.__setattr__(self, "matrix", _frozen(u))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    def dagger(self) -> "Unitary":
        return Unitary(self.matrix.conj().T)

    @classmethod
    def identity(cls, num_qubits: int) -> "Unitary":
        return cls(np.eye(1 << num_qubits, dtype=complex))


@dataclass(frozen=True)
class GateOp:
    kind: str  # "H", "X" or "CNOT"
    qubits: tuple[int, ...]

    def __post_init__(self):
        arity = {"H": 1, "X": 1, "CNOT": 2}.get(self.kind)
        if arity is None:
            raise QuantumStateError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != arity:
            raise QuantumStateError(f"{self.kind} takes {arity} qubit(s), got {self.qubits}")
        if arity == 2 and self.qubits[0] == self.qubits[1]:
            raise QuantumStateError("CNOT control equals target")

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(map(str, self.qubits))})"


def H(target: int) -> GateOp:
    return GateOp("H", (target,))


def X(target: int) -> GateOp:
    return GateOp("X", (target,))


def CNOT(control: int, target: int) -> GateOp:
    return GateOp("CNOT", (control, target))


def bits_to_index(bits: Sequence[int]) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def index_to_bits(index: int, num_qubits: int) -> tuple[int, ...]:
    return tuple((index >> (num_qubits - 1 - j)) & 1 for j in range(num_qubits))


def _check_indices(indices: Sequence[int], num_qubits: int) -> None:
    for i in indices:
        if not 0 <= i < num_qubits:
            raise QuantumStateError(f"qubit index {i} out of range for {num_qubits} qubits")
    if len(set(indices)) != len(indices):
        raise QuantumStateError(f"duplicate qubit indices in {tuple(indices)}")


@lru_cache(maxsize=4096)
def _front_perm(num_qubits: int, indices: tuple[int, ...]) -> np.ndarray:
    # amps[perm].reshape(2**m, -1) puts the listed qubits on the row axis.
    grid = np.arange(1 << num_qubits).reshape((2,) * num_qubits)
    m = len(indices)
    perm = np.ascontiguousarray(np.moveaxis(grid, indices, range(m)).reshape(-1))
    perm.setflags(write=False)
    return perm


@lru_cache(maxsize=4096)
def _gate_perm(num_qubits: int, gate: GateOp) -> np.ndarray:
    # Basis permutation realised by an X or CNOT gate.
    idx = np.arange(1 << num_qubits)
    if gate.kind == "X":
        (t,) = gate.qubits
        perm = idx ^ (1 << (num_qubits - 1 - t))
    else:
        c, t = gate.qubits
        ctrl = (idx >> (num_qubits - 1 - c)) & 1
        perm = idx ^ (ctrl << (num_qubits - 1 - t))
    perm.setflags(write=False)
    return perm


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    q = state.num_qubits
    _check_indices(gate.qubits, q)
    amps = state.amplitudes
    if gate.kind == "H":
        t = gate.qubits[0]
        psi = amps.reshape(1 << t, 2, -1)
        a = psi[:, 0]
        b = psi[:, 1]
        out = np.empty_like(psi)
        np.add(a, b, out=out[:, 0])
        np.subtract(a, b, out=out[:, 1])
        out *= _INV_SQRT2
    else:
        out = amps[_gate_perm(q, gate)]
    return StateVector._trusted(out)


def apply_circuit(state: StateVector, gates: Sequence[GateOp]) -> StateVector:
    for g in gates:
        state = apply_gate(state, g)
    return state


def apply_unitary_on_subset(
    state: StateVector, u: Unitary | np.ndarray, targets: Sequence[int]
) -> StateVector:
    """Apply ``u`` to ``targets`` (first target = most significant qubit of ``u``)."""
    mat = u.matrix if isinstance(u, Unitary) else np.asarray(u, dtype=complex)
    targets = tuple(targets)
    q = state.num_qubits
    _check_indices(targets, q)
    m = len(targets)
    if mat.shape != (1 << m, 1 << m):
        raise QuantumStateError(
            f"unitary of shape {mat.shape} does not act on {m} qubit(s)"
        )
    perm = _front_perm(q, targets)
    out = np.empty_like(state.amplitudes)
    out[perm] = (mat @ state.amplitudes[perm].reshape(1 << m, -1)).reshape(-1)
    return StateVector._trusted(out)


def marginal_probabilities(state: StateVector, indices: Sequence[int]) -> np.ndarray:
    """Born distribution of the listed qubits, indexed big-endian in list order."""
    indices = tuple(indices)
    _check_indices(indices, state.num_qubits)
    rows = state.amplitudes[_front_perm(state.num_qubits, indices)].reshape(1 << len(indices), -1)
    return (rows.real**2 + rows.imag**2).sum(axis=1)


def measure_qubits(
    state: StateVector,
    indices: Sequence[int],
    rng: np.random.Generator,
    outcome: Sequence[int] | None = None,
) -> tuple[tuple[int, ...], StateVector]:
    """Jointly measure ``indices`` in the computational basis and collapse.

    ``outcome`` forces the result (used for deterministic replays); forcing
    a branch of zero probability raises ``QuantumStateError``.
    """
    indices = tuple(indices)
    q = state.num_qubits
    _check_indices(indices, q)
    m = len(indices)
    start = indices[0]
    contiguous = indices == tuple(range(start, start + m))
    if contiguous:
        # View as (before, block, after); no gather needed.
        block = state.amplitudes.reshape(1 << start, 1 << m, -1)
        probs = (block.real**2 + block.imag**2).sum(axis=(0, 2))
    else:
        perm = _front_perm(q, indices).reshape(1 << m, -1)
        rows = state.amplitudes[perm]
        probs = (rows.real**2 + rows.imag**2).sum(axis=1)
    if outcome is None:
        cdf = np.cumsum(probs)
        k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        k = min(k, (1 << m) - 1)
    else:
        if len(outcome) != m:
            raise QuantumStateError(f"forced outcome has {len(outcome)} bits, expected {m}")
        k = bits_to_index(outcome)
    p = probs[k]
    if p <= 1e-14:
        raise QuantumStateError(f"measurement branch {index_to_bits(k, m)} has zero probability")
    out = np.zeros_like(state.amplitudes)
    if contiguous:
        out.reshape(block.shape)[:, k, :] = block[:, k, :] / np.sqrt(p)
    else:
        out[perm[k]] = rows[k] / np.sqrt(p)
    return index_to_bits(k, m), StateVector._trusted(out)


def measure_qubit(
    state: StateVector,
    index: int,
    rng: np.random.Generator,
    outcome: int | None = None,
) -> tuple[int, StateVector]:
    bits, collapsed = measure_qubits(
        state, [index], rng, None if outcome is None else [outcome]
    )
    return bits[0], collapsed


def sample_bitstrings(state: StateVector, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``shots`` full computational-basis samples without collapsing; rows are bit arrays."""
    p = state.probabilities()
    idx = rng.choice(p.size, size=shots, p=p / p.sum())
    q = state.num_qubits
    shifts = np.arange(q - 1, -1, -1)
    return (idx[:, None] >> shifts) & 1


def partial_trace(state: StateVector, keep: Sequence[int]) -> DensityMatrix:
    """Reduced density matrix on ``keep``, ordered as listed."""
    keep = list(keep)
    if not keep:
        raise QuantumStateError("keep set is empty")
    _check_indices(keep, state.num_qubits)
    k = len(keep)
    psi = np.moveaxis(state.tensor(), keep, range(k)).reshape(1 << k, -1)
    rho = psi @ psi.conj().T
    return DensityMatrix(0.5 * (rho + rho.conj().T))


def eigensystem(m: DensityMatrix | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (columns) of a Hermitian matrix."""
    mat = m.matrix if isinstance(m, DensityMatrix) else np.asarray(m, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise QuantumStateError(f"matrix must be square, got {mat.shape}")
    scale = max(1.0, float(np.max(np.abs(mat))))
    if not np.allclose(mat, mat.conj().T, rtol=0.0, atol=ATOL_STATE * scale):
        raise QuantumStateError("matrix is not Hermitian")
    vals, vecs = np.linalg.eigh(mat)
    return vals, vecs


def haar_unitary(dim: int, rng: np.random.Generator) -> Unitary:
    """Haar-distributed unitary via QR of a complex Ginibre matrix with phase fix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    qm, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return Unitary(qm * (d / np.abs(d)))


def kron_all(mats: Sequence[np.ndarray]) -> np.ndarray:
    out = np.ones((1,) * np.asarray(mats[0]).ndim, dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out
