"""Seeded Monte Carlo campaigns over the protocol and adversary models.

Every stochastic draw comes from ``numpy.random.SeedSequence(seed)``: the key
gets one child stream, and the rounds are split into a fixed number of
shards with one child stream each. Output is therefore a function of the
config alone, regardless of how many worker processes run the shards.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .adversary import STRATEGY_NAMES, AttackStrategy, binomial_sigma, ps_bounds, strategy_from_name
from .protocol import KeyBits, PadBits, RoundTranscript, decrypt, encrypt, run_round

log = logging.getLogger(__name__)

DEFAULT_TAMPER_THRESHOLD = 0.25
OUTPUT_DIR_ENV = "PSQE_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    """One campaign. ``key=None`` draws a uniform key once per experiment."""

    n: int
    rounds: int
    seed: int
    key: str | None = None
    strategy: str | None = None
    key_guess: str | None = None
    pad_length: int = 0
    shards: int = 1
    tamper_threshold: float = DEFAULT_TAMPER_THRESHOLD
    output_path: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.n < 3:
            raise ConfigError(f"n must be >= 3, got {self.n}")
        if self.rounds < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if not 0 <= self.pad_length <= self.rounds:
            raise ConfigError(f"pad_length must be in [0, rounds], got {self.pad_length}")
        if not 1 <= self.shards <= self.rounds:
            raise ConfigError(f"shards must be in [1, rounds], got {self.shards}")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.key is not None:
            try:
                k = KeyBits.from_string(self.key)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            if len(k) != self.n - 1:
                raise ConfigError(f"key has {len(k)} bits, expected {self.n - 1}")
        if self.strategy is not None and self.strategy not in STRATEGY_NAMES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; choose from {STRATEGY_NAMES}")
        if self.strategy == "guess-key" and self.key_guess is None:
            raise ConfigError("guess-key strategy needs key_guess")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


_INT_FIELDS = {"n", "rounds", "seed", "pad_length", "shards"}
_FLOAT_FIELDS = {"tamper_threshold"}


def parse_config_text(text: str) -> dict:
    """Parse JSON, or ``key = value`` lines with ``#`` comments.

    Values of ``none``/empty become None; list values are comma-separated.
    """
    stripped = text.strip()
    if stripped.startswith("{"):
        return json.loads(stripped)
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        k, v = (part.strip() for part in line.split("=", 1))
        if v.lower() in ("", "none", "null"):
            out[k] = None
        elif k in _INT_FIELDS:
            out[k] = int(v, 0)
        elif k in _FLOAT_FIELDS:
            out[k] = float(v)
        elif k in ("n_values",):
            out[k] = [int(x) for x in v.split(",")]
        elif k in ("strategies",):
            out[k] = [None if x.strip().lower() in ("none", "honest") else x.strip() for x in v.split(",")]
        else:
            out[k] = v
    return out


def load_config(path: str | os.PathLike) -> tuple[ExperimentConfig, dict]:
    """Load a config file. Returns the experiment config and any sweep extras."""
    data = parse_config_text(Path(path).read_text())
    extras = {k: data.pop(k) for k in ("n_values", "strategies") if k in data}
    try:
        return ExperimentConfig.from_dict(data), extras
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class ResultRecord:
    config: ExperimentConfig
    key: str
    rounds: int
    agreement_rate: float
    mismatch_rate: float
    tampered: bool
    pad_ones: int
    pad_bias: float
    pad_bias_z: float
    eve_successes: int | None
    empirical_ps: float | None
    std_error: float | None
    p_min: float
    p_max: float
    plaintext_recovered: bool | None
    violations: tuple[str, ...]
    wall_time: float = field(default=0.0, compare=False)

    CSV_FIELDS = (
        "n", "strategy", "seed", "key", "rounds", "agreement_rate", "mismatch_rate",
        "tampered", "pad_bias", "empirical_ps", "std_error", "p_min", "p_max", "violations",
    )

    def to_dict(self) -> dict:
        """Persisted form; ``wall_time`` and the output path are left out so
        reruns produce identical bytes wherever they are written."""
        d = asdict(self)
        d.pop("wall_time")
        d["config"].pop("output_path")
        d["violations"] = list(self.violations)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        d = dict(d)
        d["config"] = ExperimentConfig.from_dict(d["config"])
        d["violations"] = tuple(d["violations"])
        return cls(**d)

    def csv_row(self) -> dict:
        return {
            "n": self.config.n,
            "strategy": self.config.strategy or "honest",
            "seed": self.config.seed,
            "key": self.key,
            "rounds": self.rounds,
            "agreement_rate": repr(self.agreement_rate),
            "mismatch_rate": repr(self.mismatch_rate),
            "tampered": int(self.tampered),
            "pad_bias": repr(self.pad_bias),
            "empirical_ps": "" if self.empirical_ps is None else repr(self.empirical_ps),
            "std_error": "" if self.std_error is None else repr(self.std_error),
            "p_min": repr(self.p_min),
            "p_max": repr(self.p_max),
            "violations": ";".join(self.violations),
        }


@dataclass(frozen=True)
class TamperStat:
    rounds: int
    mismatches: int
    mismatch_rate: float
    threshold: float
    tampered: bool

    @property
    def verdict(self) -> str:
        return "tampered" if self.tampered else "clean"


def tamper_detection_stat(
    transcripts: Sequence[RoundTranscript],
    threshold: float = DEFAULT_TAMPER_THRESHOLD,
) -> TamperStat:
    """Alice/Bob disagreement rate over rounds where Bob decoded a bit.

    A handful of rounds gives a coarse rate (one round is 0 or 1); the
    verdict only becomes reliable as the round count grows.
    """
    complete = [t for t in transcripts if t.bob_bit is not None]
    if not complete:
        raise ValueError("no transcripts with both bits present")
    mismatches = sum(t.alice_bit != t.bob_bit for t in complete)
    rate = mismatches / len(complete)
    return TamperStat(len(complete), mismatches, rate, threshold, rate > threshold)


def _shard_sizes(rounds: int, shards: int) -> list[int]:
    base, extra = divmod(rounds, shards)
    return [base + (i < extra) for i in range(shards)]


def _run_shard(n: int, key_str: str, strategy: dict | None, size: int, start: int, seed_seq) -> list[tuple]:
    rng = np.random.default_rng(seed_seq)
    key = KeyBits.from_string(key_str)
    hook = None
    if strategy is not None:
        guess = strategy.get("key_guess")
        hook = strategy_from_name(
            strategy["kind"], n, None if guess is None else KeyBits.from_string(guess)
        ).hook(n)
    rows = []
    for j in range(size):
        t = run_round(n, key, hook, rng, round_index=start + j)
        guess = None if t.eve_action is None else t.eve_action.guess
        rows.append((t.alice_bit, t.bob_bit, guess))
    return rows


def _strategy(config: ExperimentConfig) -> AttackStrategy | None:
    if config.strategy is None:
        return None
    guess = None if config.key_guess is None else KeyBits.from_string(config.key_guess)
    return strategy_from_name(config.strategy, config.n, guess)


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    write: bool = True,
) -> ResultRecord:
    """Run one campaign and (if ``output_path`` is set) write its JSON record."""
    started = time.perf_counter()
    n = config.n
    strategy = _strategy(config)
    root = np.random.SeedSequence(config.seed)
    key_seq, plain_seq, *shard_seqs = root.spawn(2 + config.shards)

    if config.key is not None:
        key = KeyBits.from_string(config.key)
    else:
        key = KeyBits.random(n - 1, np.random.default_rng(key_seq))

    sizes = _shard_sizes(config.rounds, config.shards)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).tolist()
    strat_desc = None if strategy is None else strategy.describe()
    jobs = [
        (n, str(key), strat_desc, size, start, seq)
        for size, start, seq in zip(sizes, starts, shard_seqs)
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_shard, *zip(*jobs)))
    else:
        parts = [_run_shard(*job) for job in jobs]
    rows = [r for part in parts for r in part]

    alice = [r[0] for r in rows]
    agreements = sum(r[0] == r[1] for r in rows)
    rounds = len(rows)
    mismatch_rate = 1.0 - agreements / rounds
    pad_ones = sum(alice)
    pad_bias = pad_ones / rounds
    pad_bias_z = abs(pad_bias - 0.5) / math.sqrt(0.25 / rounds)

    bounds = ps_bounds(n)
    eve_successes = empirical_ps = std_error = None
    if strategy is not None:
        eve_successes = sum(r[2] == r[0] for r in rows)
        empirical_ps = eve_successes / rounds
        std_error = binomial_sigma(empirical_ps, rounds)

    recovered = None
    if config.pad_length:
        plain_rng = np.random.default_rng(plain_seq)
        plaintext = tuple(int(b) for b in plain_rng.integers(0, 2, size=config.pad_length))
        alice_pad = PadBits(tuple(alice[: config.pad_length]))
        bob_pad = PadBits(tuple(r[1] for r in rows[: config.pad_length]))
        recovered = decrypt(encrypt(plaintext, alice_pad), bob_pad) == plaintext

    violations = []
    if strategy is None and agreements != rounds:
        violations.append("honest rounds disagreed")
    if pad_bias_z > 5.0:
        violations.append(f"pad bias {pad_bias:.4f} is {pad_bias_z:.1f} sigma from 1/2")
    if strategy is None and recovered is False:
        violations.append("honest plaintext not recovered")

    tamper = mismatch_rate > config.tamper_threshold
    record = ResultRecord(
        config=config,
        key=str(key),
        rounds=rounds,
        agreement_rate=agreements / rounds,
        mismatch_rate=mismatch_rate,
        tampered=tamper,
        pad_ones=pad_ones,
        pad_bias=pad_bias,
        pad_bias_z=pad_bias_z,
        eve_successes=eve_successes,
        empirical_ps=empirical_ps,
        std_error=std_error,
        p_min=bounds.p_min,
        p_max=bounds.p_max,
        plaintext_recovered=recovered,
        violations=tuple(violations),
        wall_time=time.perf_counter() - started,
    )
    if write and config.output_path:
        write_record(record, config.output_path)
    log.info("n=%d strategy=%s rounds=%d agreement=%.4f", n, config.strategy, rounds, record.agreement_rate)
    return record


def write_record(record: ResultRecord, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record.to_json())


def read_record(path: str | os.PathLike) -> ResultRecord:
    return ResultRecord.from_dict(json.loads(Path(path).read_text()))


def _cell_seed(seed: int, n: int, index: int) -> int:
    # Independent per-cell seed, stable under reordering of the sweep lists.
    return int(np.random.SeedSequence([seed, n, index]).generate_state(2, np.uint32).view(np.uint64)[0])


def sweep(
    base: ExperimentConfig,
    n_values: Sequence[int],
    strategies: Sequence[str | None],
    workers: int = 1,
) -> list[ResultRecord]:
    """Run every (n, strategy) cell; rows come back sorted by (n, strategy index).

    A fixed ``base.key`` only applies to cells whose n matches its length;
    other cells draw a per-experiment random key.
    """
    if not n_values or not strategies:
        raise ValueError("sweep needs at least one n value and one strategy")
    configs = []
    for n in sorted(set(n_values)):
        for i, strat in enumerate(strategies):
            key = base.key if base.key is not None and len(base.key) == n - 1 else None
            configs.append(
                replace(
                    base,
                    n=n,
                    strategy=strat,
                    key=key,
                    seed=_cell_seed(base.seed, n, i),
                    output_path=None,
                )
            )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run_experiment, configs))
    return [run_experiment(c) for c in configs]


def sweep_to_csv(records: Sequence[ResultRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ResultRecord.CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.csv_row())
    return buf.getvalue()


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))
