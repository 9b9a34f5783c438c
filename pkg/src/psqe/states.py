"""GHZ and dormant-entanglement state family used by the protocol.

Protocol qubits are labelled q_1..q_n. In the (2n-1)-qubit layout produced by
:func:`psi_d` the register is::

    [0 .. n-2]      cipher qubits q_1 .. q_{n-1}
    [n-1 .. 2n-3]   duplicates    q_1D .. q_{(n-1)D}
    [2n-2]          q_n (kept by Alice)

States are built by running their circuits on |0...0>; the circuit builders are
public so callers can count gates.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .qsim import (
    ATOL_STATE,
    CNOT,
    GateOp,
    H,
    StateVector,
    X,
    apply_circuit,
    apply_gate,
    index_to_bits,
)


class StateKind(enum.Enum):
    GHZ = "ghz"
    PSI = "psi"
    PSI_TILDE = "psi_tilde"
    PSI_D = "psi_d"
    PHI_D = "phi_d"


@dataclass(frozen=True)
class StateFamilyLabel:
    kind: StateKind
    n: int

    def __post_init__(self):
        lo = 3 if self.kind is StateKind.PSI_D else 2
        if self.n < lo:
            raise ValueError(f"{self.kind.value} requires n >= {lo}, got {self.n}")

    def build(self) -> StateVector:
        return {
            StateKind.GHZ: ghz,
            StateKind.PSI: psi,
            StateKind.PSI_TILDE: psi_tilde,
            StateKind.PSI_D: psi_d,
            StateKind.PHI_D: phi_d,
        }[self.kind](self.n)


def _require(n: int, lo: int, what: str) -> None:
    if n < lo:
        raise ValueError(f"{what} requires n >= {lo}, got {n}")


def cipher_positions(n: int) -> list[int]:
    return list(range(n - 1))


def duplicate_positions(n: int) -> list[int]:
    return list(range(n - 1, 2 * n - 2))


def last_position(n: int) -> int:
    """Register index of q_n in the psi_d layout."""
    return 2 * n - 2


def protocol_positions(n: int) -> list[int]:
    """Register indices of q_1..q_n in the psi_d layout."""
    return cipher_positions(n) + [last_position(n)]


def ghz_circuit(positions: Sequence[int]) -> list[GateOp]:
    positions = list(positions)
    gates = [H(positions[0])]
    gates += [CNOT(a, b) for a, b in zip(positions, positions[1:])]
    return gates


def psi_circuit(positions: Sequence[int]) -> list[GateOp]:
    return ghz_circuit(positions) + [H(p) for p in positions]


def psi_d_circuit(n: int) -> list[GateOp]:
    _require(n, 3, "psi_d")
    copies = [CNOT(c, d) for c, d in zip(cipher_positions(n), duplicate_positions(n))]
    return psi_circuit(protocol_positions(n)) + copies


@lru_cache(maxsize=None)
def ghz(n: int) -> StateVector:
    _require(n, 2, "ghz")
    return apply_circuit(StateVector.zero(n), ghz_circuit(range(n)))


@lru_cache(maxsize=None)
def psi(n: int) -> StateVector:
    """H on every qubit of GHZ(n): uniform superposition of even-parity strings."""
    _require(n, 2, "psi")
    return apply_circuit(StateVector.zero(n), psi_circuit(range(n)))


@lru_cache(maxsize=None)
def psi_tilde(n: int) -> StateVector:
    """psi(n) with the last qubit negated; the odd-parity partner."""
    return apply_gate(psi(n), X(n - 1))


@lru_cache(maxsize=None)
def psi_d(n: int) -> StateVector:
    return apply_circuit(StateVector.zero(2 * n - 1), psi_d_circuit(n))


@lru_cache(maxsize=None)
def phi_d(n: int) -> StateVector:
    """psi(n) with a duplicate for every qubit, q_n included.

    Layout: [0..n-1] = q_1..q_n, [n..2n-1] = q_1D..q_nD.
    """
    _require(n, 2, "phi_d")
    gates = psi_circuit(range(n)) + [CNOT(i, n + i) for i in range(n)]
    return apply_circuit(StateVector.zero(2 * n), gates)


def parity(bits: Sequence[int]) -> int:
    bits = list(bits)
    if not bits:
        raise ValueError("parity of an empty bit sequence")
    p = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"not a bit: {b!r}")
        p ^= b
    return p


def check_property1(n: int, candidate: StateVector | None = None) -> tuple[bool, float]:
    """Compare psi(n+1) against (psi(n)|0> + psi_tilde(n)|1>)/sqrt(2).

    ``candidate`` replaces psi(n+1) on the left-hand side (negative controls).
    Returns ``(holds, max entrywise deviation)``.
    """
    lhs = psi(n + 1) if candidate is None else candidate
    zero = np.array([1, 0], dtype=complex)
    one = np.array([0, 1], dtype=complex)
    rhs = (np.kron(psi(n).amplitudes, zero) + np.kron(psi_tilde(n).amplitudes, one)) / np.sqrt(2)
    if lhs.amplitudes.shape != rhs.shape:
        return False, float("inf")
    dev = float(np.max(np.abs(lhs.amplitudes - rhs)))
    return dev <= ATOL_STATE, dev


def check_property2(n: int, candidate: StateVector | None = None) -> bool:
    """Supports of a state and its X_n partner tile all 2^n strings with equal weight."""
    base = psi(n) if candidate is None else candidate
    partner = apply_gate(base, X(base.num_qubits - 1))
    a = np.abs(base.amplitudes)
    b = np.abs(partner.amplitudes)
    in_a = a > ATOL_STATE
    in_b = b > ATOL_STATE
    if np.any(in_a & in_b) or not np.all(in_a | in_b):
        return False
    mags = np.where(in_a, a, b)
    return bool(np.ptp(mags) <= ATOL_STATE)


def support(state: StateVector, atol: float = ATOL_STATE) -> list[tuple[int, ...]]:
    q = state.num_qubits
    return [index_to_bits(int(i), q) for i in np.flatnonzero(np.abs(state.amplitudes) > atol)]


def check_psi_d_decomposition(n: int) -> tuple[bool, float]:
    """psi_d(n) = (Phi_D(n-1)|0>_n + X_{n-1} X_{(n-1)D} Phi_D(n-1)|1>_n) / sqrt(2).

    Phi_D(n-1) uses its own layout (protocol block, then duplicates), which
    matches the cipher/duplicate blocks of psi_d(n) exactly.
    """
    _require(n, 3, "psi_d decomposition")
    m = n - 1
    phi = phi_d(m)
    phi_t = apply_gate(apply_gate(phi, X(m - 1)), X(2 * m - 1))
    zero = np.array([1, 0], dtype=complex)
    one = np.array([0, 1], dtype=complex)
    rhs = (np.kron(phi.amplitudes, zero) + np.kron(phi_t.amplitudes, one)) / np.sqrt(2)
    dev = float(np.max(np.abs(psi_d(n).amplitudes - rhs)))
    return dev <= ATOL_STATE, dev
