"""Two-phase protocol: quantum pad generation followed by a classical XOR cipher."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Callable, Iterable, Literal, NamedTuple, Sequence

import numpy as np

from .qsim import GateOp, H, StateVector, apply_gate, measure_qubit, measure_qubits
from .states import cipher_positions, last_position, parity, psi_d, psi_d_circuit

AliceTiming = Literal["before_channel", "after_bob_rotation", "after_bob"]
ALICE_TIMINGS: tuple[str, ...] = ("before_channel", "after_bob_rotation", "after_bob")


class PadReuseError(RuntimeError):
    """A one-time pad was offered for a second encryption."""


def _as_bits(bits: Iterable[int], what: str) -> tuple[int, ...]:
    out = tuple(int(b) for b in bits)
    if any(b not in (0, 1) for b in out):
        raise ValueError(f"{what} must contain only 0/1, got {out}")
    return out


def parse_bits(text: str) -> tuple[int, ...]:
    """Parse an ASCII '0'/'1' string, most significant bit first."""
    text = text.strip()
    if not text or set(text) - {"0", "1"}:
        raise ValueError(f"not a bit string: {text!r}")
    return tuple(int(c) for c in text)


def format_bits(bits: Iterable[int]) -> str:
    return "".join(str(int(b)) for b in bits)


@dataclass(frozen=True)
class KeyBits:
    """Pre-shared key; bit i selects a Hadamard on cipher qubit q_{i+1}."""

    bits: tuple[int, ...]

    def __post_init__(self):
        bits = _as_bits(self.bits, "key")
        if len(bits) < 2:
            raise ValueError(f"key needs at least 2 bits, got {len(bits)}")
        object.__setattr__(self, "bits", bits)

    @classmethod
    def from_string(cls, text: str) -> "KeyBits":
        return cls(parse_bits(text))

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "KeyBits":
        return cls(tuple(int(b) for b in rng.integers(0, 2, size=length)))

    @property
    def n_ones(self) -> int:
        return sum(self.bits)

    def flipped(self, position: int) -> "KeyBits":
        bits = list(self.bits)
        bits[position] ^= 1
        return KeyBits(tuple(bits))

    def __len__(self) -> int:
        return len(self.bits)

    def __iter__(self):
        return iter(self.bits)

    def __str__(self) -> str:
        return format_bits(self.bits)


@dataclass(frozen=True)
class EveAction:
    """What the adversary did to one round's cipher qubits."""

    strategy: str
    outcomes: tuple[int, ...] | None = None
    guess: int | None = None
    forwarded: bool = True

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "outcomes": None if self.outcomes is None else format_bits(self.outcomes),
            "guess": self.guess,
            "forwarded": self.forwarded,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EveAction":
        outcomes = d.get("outcomes")
        return cls(
            strategy=d["strategy"],
            outcomes=None if outcomes is None else parse_bits(outcomes),
            guess=d.get("guess"),
            forwarded=d.get("forwarded", True),
        )


# Receives the full joint state and the register indices of the cipher qubits;
# returns the joint state after the attack and a record of the action. When
# ``action.forwarded`` is False Bob never receives the cipher qubits.
AttackHook = Callable[
    [StateVector, Sequence[int], np.random.Generator],
    tuple[StateVector, EveAction],
]


@dataclass(frozen=True)
class RoundTranscript:
    round_index: int
    key: KeyBits
    alice_bit: int
    bob_bit: int | None
    cipher_outcomes: tuple[int, ...] | None
    eve_action: EveAction | None = None

    @property
    def complete(self) -> bool:
        return self.bob_bit is not None

    @property
    def agree(self) -> bool:
        return self.bob_bit == self.alice_bit

    def to_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "key": str(self.key),
            "alice_bit": self.alice_bit,
            "bob_bit": self.bob_bit,
            "cipher_outcomes": (
                None if self.cipher_outcomes is None else format_bits(self.cipher_outcomes)
            ),
            "eve_action": None if self.eve_action is None else self.eve_action.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundTranscript":
        outcomes = d["cipher_outcomes"]
        eve = d.get("eve_action")
        return cls(
            round_index=d["round_index"],
            key=KeyBits.from_string(d["key"]),
            alice_bit=d["alice_bit"],
            bob_bit=d["bob_bit"],
            cipher_outcomes=None if outcomes is None else parse_bits(outcomes),
            eve_action=None if eve is None else EveAction.from_dict(eve),
        )


def write_transcripts_jsonl(transcripts: Iterable[RoundTranscript], fh: IO[str]) -> None:
    for t in transcripts:
        fh.write(json.dumps(t.to_dict(), sort_keys=True) + "\n")


def read_transcripts_jsonl(fh: IO[str]) -> list[RoundTranscript]:
    return [RoundTranscript.from_dict(json.loads(line)) for line in fh if line.strip()]


@dataclass
class PadBits:
    bits: tuple[int, ...]
    used: bool = field(default=False, compare=False)

    def __post_init__(self):
        self.bits = _as_bits(self.bits, "pad")

    def __len__(self) -> int:
        return len(self.bits)


@dataclass(frozen=True)
class CipherText:
    bits: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bits", _as_bits(self.bits, "ciphertext"))

    def __str__(self) -> str:
        return format_bits(self.bits)


def _check_key(n: int, key: KeyBits) -> None:
    if n < 3:
        raise ValueError(f"protocol requires n >= 3, got {n}")
    if len(key) != n - 1:
        raise ValueError(f"key has {len(key)} bits, expected n-1 = {n - 1}")


def apply_key_rotation(
    state: StateVector,
    key: KeyBits,
    cipher: Sequence[int],
    trace: list[GateOp] | None = None,
) -> StateVector:
    """Hadamard every cipher qubit whose key bit is 1. Self-inverse."""
    if len(cipher) != len(key):
        raise ValueError(f"{len(cipher)} cipher positions for a {len(key)}-bit key")
    for k, pos in zip(key.bits, cipher):
        if k:
            gate = H(pos)
            state = apply_gate(state, gate)
            if trace is not None:
                trace.append(gate)
    return state


def run_round(
    n: int,
    key: KeyBits,
    eve: AttackHook | None = None,
    rng: np.random.Generator | None = None,
    *,
    round_index: int = 0,
    bob_key: KeyBits | None = None,
    alice_timing: AliceTiming = "after_bob_rotation",
    alice_outcome: int | None = None,
    trace: list[GateOp] | None = None,
) -> RoundTranscript:
    """Execute one pad-generation round.

    ``bob_key`` lets Bob decode with a key other than Alice's. ``alice_outcome``
    forces Alice's measurement of q_n (deterministic replays). ``trace``
    collects every gate applied by Alice and Bob.
    """
    _check_key(n, key)
    if bob_key is not None and len(bob_key) != len(key):
        raise ValueError("Bob's key length differs from Alice's")
    if alice_timing not in ALICE_TIMINGS:
        raise ValueError(f"unknown alice_timing {alice_timing!r}")
    if rng is None:
        rng = np.random.default_rng()
    cipher = cipher_positions(n)
    qn = last_position(n)

    state = psi_d(n)
    if trace is not None:
        trace.extend(psi_d_circuit(n))

    alice_bit = None
    if alice_timing == "before_channel":
        alice_bit, state = measure_qubit(state, qn, rng, alice_outcome)

    state = apply_key_rotation(state, key, cipher, trace)

    action = None
    if eve is not None:
        state, action = eve(state, cipher, rng)

    if action is not None and not action.forwarded:
        if alice_bit is None:
            alice_bit, state = measure_qubit(state, qn, rng, alice_outcome)
        return RoundTranscript(round_index, key, alice_bit, None, None, action)

    state = apply_key_rotation(state, bob_key or key, cipher, trace)

    if alice_timing == "after_bob_rotation":
        alice_bit, state = measure_qubit(state, qn, rng, alice_outcome)
    outcomes, state = measure_qubits(state, cipher, rng)
    bob_bit = parity(outcomes)
    if alice_timing == "after_bob":
        alice_bit, state = measure_qubit(state, qn, rng, alice_outcome)

    return RoundTranscript(round_index, key, alice_bit, bob_bit, outcomes, action)


def generate_pad(
    n: int,
    key: KeyBits,
    m: int,
    eve: AttackHook | None = None,
    rng: np.random.Generator | None = None,
    *,
    inject: Sequence[int] | None = None,
    bob_key: KeyBits | None = None,
    alice_timing: AliceTiming = "after_bob_rotation",
) -> tuple[PadBits, PadBits, list[RoundTranscript]]:
    """Repeat the round ``m`` times. ``inject`` forces Alice's q_n outcomes."""
    if m < 1:
        raise ValueError(f"pad length must be >= 1, got {m}")
    if inject is not None and len(inject) != m:
        raise ValueError(f"injected outcome sequence has {len(inject)} bits, expected {m}")
    if rng is None:
        rng = np.random.default_rng()
    transcripts = [
        run_round(
            n,
            key,
            eve,
            rng,
            round_index=j,
            bob_key=bob_key,
            alice_timing=alice_timing,
            alice_outcome=None if inject is None else inject[j],
        )
        for j in range(m)
    ]
    if any(t.bob_bit is None for t in transcripts):
        raise ValueError("cipher qubits were not delivered to Bob in every round")
    alice = PadBits(tuple(t.alice_bit for t in transcripts))
    bob = PadBits(tuple(t.bob_bit for t in transcripts))
    return alice, bob, transcripts


def _xor(a: Sequence[int], b: Sequence[int]) -> tuple[int, ...]:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    return tuple(x ^ y for x, y in zip(a, b))


def encrypt(plaintext: Sequence[int], pad: PadBits) -> CipherText:
    p = _as_bits(plaintext, "plaintext")
    if pad.used:
        raise PadReuseError("pad has already encrypted a plaintext")
    c = CipherText(_xor(p, pad.bits))
    pad.used = True
    return c


def decrypt(ciphertext: CipherText | Sequence[int], pad: PadBits) -> tuple[int, ...]:
    c = ciphertext.bits if isinstance(ciphertext, CipherText) else _as_bits(ciphertext, "ciphertext")
    return _xor(c, pad.bits)


def authenticate(
    codeword: Sequence[int],
    n: int,
    key: KeyBits,
    rng: np.random.Generator,
    *,
    eve: AttackHook | None = None,
    impersonator: bool = False,
) -> bool:
    """Bob proves his identity by sending a pre-shared code word under a fresh pad.

    With ``impersonator=True`` the Bob role is played by an adversary who
    knows the code word but not the key: she intercepts the cipher qubits,
    undoes a freshly guessed rotation each round, and decodes her pad bit
    from the measured parity.
    """
    word = _as_bits(codeword, "code word")
    if not word:
        raise ValueError("code word is empty")
    if impersonator:
        alice_bits = []
        forged = []
        for j in range(len(word)):
            guess = KeyBits.random(n - 1, rng)

            def steal(state, positions, r, guess=guess):
                state = apply_key_rotation(state, guess, positions)
                bits, state = measure_qubits(state, positions, r)
                return state, EveAction("impersonate", bits, parity(bits), forwarded=False)

            t = run_round(n, key, steal, rng, round_index=j)
            alice_bits.append(t.alice_bit)
            forged.append(t.eve_action.guess)
        sent = CipherText(_xor(word, forged))
        return decrypt(sent, PadBits(tuple(alice_bits))) == word

    alice_pad, bob_pad, _ = generate_pad(n, key, len(word), eve, rng)
    sent = encrypt(word, bob_pad)
    return decrypt(sent, alice_pad) == word


class ResourceCounts(NamedTuple):
    qubits: int
    cnots: int
    hadamards: int


def circuit_resources(n: int, n_k: int) -> ResourceCounts:
    """Closed-form gate budget of one round, Bob's decryption gates included."""
    if n < 3:
        raise ValueError(f"protocol requires n >= 3, got {n}")
    if not 0 <= n_k <= n - 1:
        raise ValueError(f"n_k must be in [0, {n - 1}], got {n_k}")
    return ResourceCounts(2 * n - 1, 2 * n - 2, n + 2 * n_k + 1)


def instrumented_resources(
    n: int, key: KeyBits, rng: np.random.Generator | None = None
) -> tuple[ResourceCounts, list[GateOp]]:
    """Count the gates actually applied by an honest round."""
    trace: list[GateOp] = []
    run_round(n, key, None, rng or np.random.default_rng(0), trace=trace)
    counts = ResourceCounts(
        qubits=psi_d(n).num_qubits,
        cnots=sum(g.kind == "CNOT" for g in trace),
        hadamards=sum(g.kind == "H" for g in trace),
    )
    return counts, trace
