"""Eavesdropper strategies and the key-averaged success analysis.

Every active strategy has the same shape: rotate the intercepted cipher
qubits by some unitary R, measure them in the computational basis, guess
q_n as the parity of the outcomes, rotate back by R^dagger and forward the
qubits to Bob. The strategies differ only in R.

The analytic side works with the cipher state an adversary sees once q_n is
fixed to 0 and the key is averaged out: an equal mixture, over even-parity
strings, of every Hadamard "key-variant" of the string. Its eigenvalues fix
the best and worst achievable success probabilities.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .protocol import AttackHook, EveAction, KeyBits, apply_key_rotation, run_round
from .qsim import (
    ATOL_UNITARY,
    HADAMARD,
    DensityMatrix,
    StateVector,
    Unitary,
    apply_unitary_on_subset,
    eigensystem,
    haar_unitary,
    index_to_bits,
    kron_all,
    marginal_probabilities,
    measure_qubits,
    partial_trace,
)
from .states import cipher_positions, parity, protocol_positions, psi, psi_d

SQRT2_OVER_2 = math.sqrt(2.0) / 2.0

_KET0 = np.array([1.0, 0.0])
_KET1 = np.array([0.0, 1.0])
_PLUS = np.array([1.0, 1.0]) / math.sqrt(2.0)
_MINUS = np.array([1.0, -1.0]) / math.sqrt(2.0)

# Single-qubit key-averaged states and their shared eigenbasis.
RHO0 = 0.5 * (np.outer(_KET0, _KET0) + np.outer(_PLUS, _PLUS))
RHO1 = 0.5 * (np.outer(_KET1, _KET1) + np.outer(_MINUS, _MINUS))
PHI1 = np.array([math.sqrt(2 + math.sqrt(2)) / 2, math.sqrt(2 - math.sqrt(2)) / 2])
PHI2 = np.array([math.sqrt(2 - math.sqrt(2)) / 2, -math.sqrt(2 + math.sqrt(2)) / 2])
MU1 = (2 + math.sqrt(2)) / 4
MU2 = (2 - math.sqrt(2)) / 4


class StrategyKind(enum.Enum):
    PASSIVE = "passive"
    GUESS_KEY = "guess-key"
    INTERCEPT_RESEND = "intercept-resend"
    OPTIMAL = "optimal"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class AttackStrategy:
    kind: StrategyKind
    key_guess: KeyBits | None = None
    unitary: Unitary | None = None

    @classmethod
    def passive(cls) -> "AttackStrategy":
        return cls(StrategyKind.PASSIVE)

    @classmethod
    def guess_key(cls, guess: KeyBits) -> "AttackStrategy":
        return cls(StrategyKind.GUESS_KEY, key_guess=guess)

    @classmethod
    def intercept_resend(cls) -> "AttackStrategy":
        return cls(StrategyKind.INTERCEPT_RESEND)

    @classmethod
    def optimal(cls) -> "AttackStrategy":
        return cls(StrategyKind.OPTIMAL)

    @classmethod
    def custom(cls, u: Unitary | np.ndarray) -> "AttackStrategy":
        return cls(StrategyKind.CUSTOM, unitary=u if isinstance(u, Unitary) else Unitary(u))

    @property
    def name(self) -> str:
        return self.kind.value

    def validate(self, n: int) -> None:
        if self.kind is StrategyKind.GUESS_KEY:
            if self.key_guess is None or len(self.key_guess) != n - 1:
                raise ValueError(f"guess-key strategy needs an {n - 1}-bit guess")
        if self.kind is StrategyKind.CUSTOM:
            if self.unitary is None or self.unitary.dim != 1 << (n - 1):
                raise ValueError(f"custom strategy needs a {1 << (n - 1)}-dim unitary")

    def rotation(self, n: int) -> np.ndarray | None:
        """Matrix Eve applies before measuring; None means no measurement at all."""
        self.validate(n)
        m = n - 1
        if self.kind is StrategyKind.PASSIVE:
            return None
        if self.kind is StrategyKind.INTERCEPT_RESEND:
            return np.eye(1 << m, dtype=complex)
        if self.kind is StrategyKind.GUESS_KEY:
            return kron_all([HADAMARD if k else np.eye(2) for k in self.key_guess.bits])
        if self.kind is StrategyKind.OPTIMAL:
            return optimal_attack_unitary(n).matrix
        return self.unitary.matrix

    def describe(self) -> dict:
        d = {"kind": self.name}
        if self.key_guess is not None:
            d["key_guess"] = str(self.key_guess)
        return d

    def hook(self, n: int) -> AttackHook:
        self.validate(n)
        name = self.name
        if self.kind is StrategyKind.PASSIVE:

            def passive(state, cipher, rng):
                return state, EveAction(name, None, int(rng.integers(2)))

            return passive

        if self.kind is StrategyKind.GUESS_KEY:
            guess = self.key_guess

            def rotate(state, cipher):
                return apply_key_rotation(state, guess, cipher)

            unrotate = rotate
        elif self.kind is StrategyKind.INTERCEPT_RESEND:

            def rotate(state, cipher):
                return state

            unrotate = rotate
        else:
            r = self.rotation(n)
            r_dag = r.conj().T

            def rotate(state, cipher):
                return apply_unitary_on_subset(state, r, cipher)

            def unrotate(state, cipher):
                return apply_unitary_on_subset(state, r_dag, cipher)

        def measure_and_resend(state, cipher, rng):
            bits, state = measure_qubits(rotate(state, cipher), cipher, rng)
            return unrotate(state, cipher), EveAction(name, bits, parity(bits))

        return measure_and_resend


STRATEGY_NAMES = tuple(k.value for k in StrategyKind if k is not StrategyKind.CUSTOM)


def strategy_from_name(name: str, n: int, key_guess: KeyBits | None = None) -> AttackStrategy:
    kind = StrategyKind(name)
    if kind is StrategyKind.GUESS_KEY:
        if key_guess is None:
            raise ValueError("guess-key needs a key guess")
        return AttackStrategy.guess_key(key_guess)
    if kind is StrategyKind.CUSTOM:
        raise ValueError("custom strategies are built from a unitary, not a name")
    return AttackStrategy(kind)


@dataclass(frozen=True)
class PsBounds:
    n: int
    p_min: float
    p_max: float


def ps_bounds(n: int) -> PsBounds:
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    delta = SQRT2_OVER_2 ** (n + 1)
    return PsBounds(n, 0.5 - delta, 0.5 + delta)


def binomial_sigma(p: float, trials: int) -> float:
    return math.sqrt(p * (1.0 - p) / trials)


@dataclass(frozen=True)
class AttackReport:
    strategy: str
    n: int
    rounds: int
    successes: int
    empirical_ps: float
    bound: PsBounds
    std_error: float
    agreements: int
    mismatch_rate: float

    CSV_FIELDS = (
        "strategy", "n", "rounds", "successes", "empirical_ps",
        "p_min", "p_max", "std_error", "mismatch_rate",
    )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "AttackReport":
        d = dict(d)
        d["bound"] = PsBounds(**d["bound"])
        return cls(**d)

    def csv_row(self) -> dict:
        return {
            "strategy": self.strategy,
            "n": self.n,
            "rounds": self.rounds,
            "successes": self.successes,
            "empirical_ps": repr(self.empirical_ps),
            "p_min": repr(self.bound.p_min),
            "p_max": repr(self.bound.p_max),
            "std_error": repr(self.std_error),
            "mismatch_rate": repr(self.mismatch_rate),
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=self.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerow(self.csv_row())
        return buf.getvalue()


def _report(strategy: str, n: int, rounds: int, successes: int, agreements: int) -> AttackReport:
    ps = successes / rounds
    return AttackReport(
        strategy=strategy,
        n=n,
        rounds=rounds,
        successes=successes,
        empirical_ps=ps,
        bound=ps_bounds(n),
        std_error=binomial_sigma(ps, rounds),
        agreements=agreements,
        mismatch_rate=1.0 - agreements / rounds,
    )


# ---------------------------------------------------------------- reduced states


def reduced_cipher_state(n: int, key: KeyBits, duplicates: bool = True) -> DensityMatrix:
    """State of q_1..q_{n-1} after the key rotation, everything else traced out.

    ``duplicates=False`` starts from psi(n) instead of psi_d(n), i.e. skips
    the CNOT copies.
    """
    if len(key) != n - 1:
        raise ValueError(f"key has {len(key)} bits, expected {n - 1}")
    cipher = cipher_positions(n)
    state = psi_d(n) if duplicates else psi(n)
    return partial_trace(apply_key_rotation(state, key, cipher), cipher)


def all_keys(n: int):
    for bits in itertools.product((0, 1), repeat=n - 1):
        yield KeyBits(bits)


def _even_strings(m: int):
    return [s for s in itertools.product((0, 1), repeat=m) if sum(s) % 2 == 0]


def rho_e_explicit(n: int) -> DensityMatrix:
    """Equal mixture of every key-variant projector of every even-parity string.

    Brute-force enumeration of 2^(n-2) * 2^(n-1) pure states.
    """
    if not 3 <= n <= 8:
        raise ValueError(f"explicit enumeration supports 3 <= n <= 8, got {n}")
    m = n - 1
    options = {0: (_KET0, _PLUS), 1: (_KET1, _MINUS)}
    vecs = []
    for s in _even_strings(m):
        for rotated in itertools.product((0, 1), repeat=m):
            vecs.append(kron_all([options[b][h] for b, h in zip(s, rotated)]))
    v = np.array(vecs)
    return DensityMatrix((v.T @ v.conj()) / len(vecs))


def rho_e_factorized(n: int) -> DensityMatrix:
    """Same state written as a sum of single-qubit tensor products."""
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    m = n - 1
    acc = np.zeros((1 << m, 1 << m), dtype=complex)
    for s in _even_strings(m):
        acc += kron_all([RHO1 if b else RHO0 for b in s])
    return DensityMatrix(acc / 2 ** (m - 1))


@dataclass(frozen=True)
class ClosedFormEigensystem:
    n: int
    lambda_low: float
    lambda_high: float
    multiplicity: int

    @property
    def dim(self) -> int:
        return 1 << (self.n - 1)

    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues, ascending."""
        return np.array([self.lambda_low] * self.multiplicity + [self.lambda_high] * self.multiplicity)

    def label_eigenvalue(self, label: Sequence[int]) -> float:
        """Eigenvalue of the product vector picking PHI2 wherever ``label`` is 1."""
        return self.lambda_high if sum(label) % 2 == 0 else self.lambda_low

    def vector(self, label: Sequence[int]) -> np.ndarray:
        return kron_all([PHI2 if b else PHI1 for b in label])

    def eigenvectors(self) -> np.ndarray:
        """Columns are product eigenvectors, ordered by their big-endian label."""
        m = self.n - 1
        return np.array([self.vector(index_to_bits(i, m)) for i in range(self.dim)]).T

    def matrix(self) -> np.ndarray:
        v = self.eigenvectors()
        m = self.n - 1
        vals = [self.label_eigenvalue(index_to_bits(i, m)) for i in range(self.dim)]
        return (v * vals) @ v.T


def rho_e_eigensystem_closed(n: int) -> ClosedFormEigensystem:
    """Two eigenvalues, 2^(n-2) each: (1 +/- (sqrt2/2)^(n-1)) / 2^(n-1).

    The prefactor 1/2^(n-1) is the one that makes the trace 1.
    """
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    m = n - 1
    c = 1.0 / 2**m
    # (MU1 - MU2) == sqrt(2)/2 and MU1 + MU2 == 1.
    spread = (MU1 - MU2) ** m
    return ClosedFormEigensystem(
        n=n,
        lambda_low=c * (1.0 - spread),
        lambda_high=c * (1.0 + spread),
        multiplicity=1 << (m - 1),
    )


def half_sums(eigenvalues: np.ndarray) -> tuple[float, float]:
    """Sums of the smaller and larger halves of an ascending spectrum."""
    vals = np.sort(np.asarray(eigenvalues, dtype=float))
    half = vals.size // 2
    return float(vals[:half].sum()), float(vals[half:].sum())


# ---------------------------------------------------------------- eigenvalue-sum bound


def lemma1_bounds(h: np.ndarray, subset: np.ndarray) -> tuple[float, float, float]:
    """(sum of k smallest eigenvalues, sum of <phi|h|phi>, sum of k largest).

    ``subset`` holds k orthonormal vectors as columns.
    """
    h = np.asarray(h, dtype=complex)
    phis = np.asarray(subset, dtype=complex)
    if phis.ndim == 1:
        phis = phis[:, None]
    n_dim, k = phis.shape
    if h.shape != (n_dim, n_dim):
        raise ValueError(f"matrix {h.shape} does not match vectors of length {n_dim}")
    if not 1 <= k <= n_dim:
        raise ValueError(f"subset size {k} outside [1, {n_dim}]")
    gram = phis.conj().T @ phis
    if np.max(np.abs(gram - np.eye(k))) > ATOL_UNITARY:
        raise ValueError("subset vectors are not orthonormal")
    vals, _ = eigensystem(h)
    value = float(np.real(np.einsum("ik,ij,jk->", phis.conj(), h, phis)))
    return float(vals[:k].sum()), value, float(vals[n_dim - k:].sum())


def lemma1_check(h: np.ndarray, subset: np.ndarray, atol: float = 1e-9) -> bool:
    lower, value, upper = lemma1_bounds(h, subset)
    scale = max(1.0, float(np.max(np.abs(h))))
    return lower - atol * scale <= value <= upper + atol * scale


# ---------------------------------------------------------------- optimal attack


@lru_cache(maxsize=None)
def optimal_attack_unitary(n: int) -> Unitary:
    """Unitary sending each top-half eigenvector of the key-averaged state to an
    even-parity basis string (and each bottom-half one to an odd string).

    Eve applies this matrix as-is to the cipher qubits before measuring. The
    product eigenvector labelled t maps to |t>, so the matrix is the tensor
    power of the single-qubit reflection with rows PHI1, PHI2; it is its own
    adjoint, so the choice between U and U^dagger cannot matter here.
    """
    if n < 3:
        raise ValueError(f"n must be >= 3, got {n}")
    w = np.array([PHI1, PHI2])
    return Unitary(kron_all([w] * (n - 1)))


def _parity_mask(m: int) -> np.ndarray:
    return np.array([sum(index_to_bits(i, m)) % 2 == 0 for i in range(1 << m)])


def predicted_success(n: int, u: Unitary | np.ndarray, rho: np.ndarray | None = None) -> float:
    """Probability of an even-parity outcome after rotating the key-averaged state by u."""
    mat = u.matrix if isinstance(u, Unitary) else np.asarray(u)
    if rho is None:
        rho = rho_e_eigensystem_closed(n).matrix()
    rotated = mat @ rho @ mat.conj().T
    return float(np.real(np.diagonal(rotated))[_parity_mask(n - 1)].sum())


# ---------------------------------------------------------------- simulation


def round_outcome_table(
    strategy: AttackStrategy,
    n: int,
    key: KeyBits,
    bob_key: KeyBits | None = None,
) -> np.ndarray:
    """Exact joint law of (Eve's guess, Alice's bit, Bob's bit) for one round.

    Built by branching the state vector over Eve's measurement outcomes
    instead of sampling them; ``table[g, a, b]`` sums to 1.
    """
    strategy.validate(n)
    cipher = cipher_positions(n)
    proto = protocol_positions(n)
    m = n - 1
    table = np.zeros((2, 2, 2))

    def alice_bob_law(state: StateVector) -> np.ndarray:
        state = apply_key_rotation(state, bob_key or key, cipher)
        probs = marginal_probabilities(state, proto)
        law = np.zeros((2, 2))
        for idx, p in enumerate(probs):
            bits = index_to_bits(idx, n)
            law[bits[-1], sum(bits[:-1]) % 2] += p
        return law

    state = apply_key_rotation(psi_d(n), key, cipher)
    r = strategy.rotation(n)
    if r is None:
        law = alice_bob_law(state)
        table[0] = table[1] = 0.5 * law
        return table

    rotated = apply_unitary_on_subset(state, r, cipher)
    r_dag = r.conj().T
    for idx, p in enumerate(marginal_probabilities(rotated, cipher)):
        if p <= 1e-14:
            continue
        bits = index_to_bits(idx, m)
        _, collapsed = measure_qubits(rotated, cipher, None, outcome=bits)
        forwarded = apply_unitary_on_subset(collapsed, r_dag, cipher)
        table[sum(bits) % 2] += p * alice_bob_law(forwarded)
    return table


def _validate_rounds(rounds: int) -> None:
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")


def simulate_attack(
    strategy: AttackStrategy,
    n: int,
    rounds: int,
    rng: np.random.Generator,
    *,
    key: KeyBits | None = None,
    method: str = "trajectory",
) -> AttackReport:
    """Run ``rounds`` pad-generation rounds with Eve on the channel.

    A fresh uniform key is drawn for every round unless ``key`` pins one.
    ``method="trajectory"`` executes each round on the state vector;
    ``method="branching"`` computes each key's exact outcome law with
    :func:`round_outcome_table` and samples round counts from it.
    """
    _validate_rounds(rounds)
    strategy.validate(n)
    if key is not None and len(key) != n - 1:
        raise ValueError(f"key has {len(key)} bits, expected {n - 1}")
    if method == "trajectory":
        hook = strategy.hook(n)
        successes = agreements = 0
        for j in range(rounds):
            k = key if key is not None else KeyBits.random(n - 1, rng)
            t = run_round(n, k, hook, rng, round_index=j)
            successes += t.eve_action.guess == t.alice_bit
            agreements += t.bob_bit == t.alice_bit
        return _report(strategy.name, n, rounds, successes, agreements)
    if method == "branching":
        return _simulate_branching(strategy, n, rounds, rng, key)
    raise ValueError(f"unknown method {method!r}")


def _simulate_branching(strategy, n, rounds, rng, key) -> AttackReport:
    if key is not None:
        keys = [key]
        counts = [rounds]
    else:
        keys = list(all_keys(n))
        counts = rng.multinomial(rounds, [1.0 / len(keys)] * len(keys))
    successes = agreements = 0
    for k, c in zip(keys, counts):
        if c == 0:
            continue
        table = round_outcome_table(strategy, n, k)
        cells = rng.multinomial(c, np.clip(table.reshape(-1), 0.0, None) / table.sum())
        cells = cells.reshape(2, 2, 2)
        successes += int(cells[0, 0].sum() + cells[1, 1].sum())
        agreements += int(cells[:, 0, 0].sum() + cells[:, 1, 1].sum())
    return _report(strategy.name, n, rounds, successes, agreements)


@dataclass(frozen=True)
class SearchResult:
    n: int
    max_ps: float
    best_index: int
    values: tuple[float, ...]
    rounds_each: int
    includes_optimal: bool


def brute_force_ps_search(
    n: int,
    num_unitaries: int,
    rounds_each: int,
    rng: np.random.Generator,
    *,
    include_optimal: bool = True,
    method: str = "branching",
) -> SearchResult:
    """Empirical success of Haar-random attack unitaries, plus the optimal one.

    Entry 0 of ``values`` is the optimal unitary when ``include_optimal``.
    """
    if n not in (3, 4):
        raise ValueError(f"search supports n in {{3, 4}}, got {n}")
    if num_unitaries < 1:
        raise ValueError("num_unitaries must be >= 1")
    strategies = [AttackStrategy.optimal()] if include_optimal else []
    strategies += [
        AttackStrategy.custom(haar_unitary(1 << (n - 1), rng)) for _ in range(num_unitaries)
    ]
    values = tuple(
        simulate_attack(s, n, rounds_each, rng, method=method).empirical_ps for s in strategies
    )
    best = int(np.argmax(values))
    return SearchResult(n, values[best], best, values, rounds_each, include_optimal)


# ---------------------------------------------------------------- information


def binary_entropy(p: float) -> float:
    if p in (0.0, 1.0):
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def entropy_gain(n: int) -> float:
    """Bits of information on q_n an optimal adversary gains per round."""
    return 1.0 - binary_entropy(ps_bounds(n).p_max)


def entropy_gain_estimate(n: int) -> float:
    """Second-order expansion of :func:`entropy_gain` around p = 1/2."""
    return 2.0**-n / math.log(2.0)


@dataclass(frozen=True)
class BayesSymmetryResult:
    n: int
    rounds: int
    p_qn0_given_even: float
    p_qn1_given_odd: float
    p_even: float
    p_qn0: float
    conditional_z: float
    even_z: float
    qn0_z: float
    ok: bool


def bayes_symmetry_check(
    n: int,
    rounds: int,
    rng: np.random.Generator,
    unitary: Unitary | np.ndarray | None = None,
    z_max: float = 5.0,
) -> BayesSymmetryResult:
    """Estimate P(q_n=0 | even parity) and P(q_n=1 | odd parity) for a fixed attack.

    Keys are drawn uniformly per round. The two conditionals must agree, and
    both marginals must sit at 1/2, each within ``z_max`` standard errors.
    """
    if rounds < 10_000:
        raise ValueError("need at least 10^4 rounds")
    strategy = AttackStrategy.custom(unitary if unitary is not None else np.eye(1 << (n - 1)))
    hook = strategy.hook(n)
    counts = np.zeros((2, 2), dtype=int)  # [eve parity, q_n]
    for j in range(rounds):
        t = run_round(n, KeyBits.random(n - 1, rng), hook, rng, round_index=j)
        counts[t.eve_action.guess, t.alice_bit] += 1
    n_even, n_odd = counts[0].sum(), counts[1].sum()
    p0 = counts[0, 0] / n_even
    p1 = counts[1, 1] / n_odd
    sd = math.sqrt(p0 * (1 - p0) / n_even + p1 * (1 - p1) / n_odd)
    cond_z = abs(p0 - p1) / sd if sd > 0 else (0.0 if p0 == p1 else math.inf)
    p_even = n_even / rounds
    p_qn0 = counts[:, 0].sum() / rounds
    half_sd = math.sqrt(0.25 / rounds)
    even_z = abs(p_even - 0.5) / half_sd
    qn0_z = abs(p_qn0 - 0.5) / half_sd
    return BayesSymmetryResult(
        n=n,
        rounds=rounds,
        p_qn0_given_even=float(p0),
        p_qn1_given_odd=float(p1),
        p_even=float(p_even),
        p_qn0=float(p_qn0),
        conditional_z=float(cond_z),
        even_z=float(even_z),
        qn0_z=float(qn0_z),
        ok=bool(cond_z <= z_max and even_z <= z_max and qn0_z <= z_max),
    )


def key_averaged_success(strategy: AttackStrategy, n: int) -> tuple[float, float]:
    """Exact (Eve success, Alice/Bob agreement) averaged over all keys."""
    ps = agree = 0.0
    keys = list(all_keys(n))
    for k in keys:
        t = round_outcome_table(strategy, n, k)
        ps += t[0, 0].sum() + t[1, 1].sum()
        agree += t[:, 0, 0].sum() + t[:, 1, 1].sum()
    return ps / len(keys), agree / len(keys)
