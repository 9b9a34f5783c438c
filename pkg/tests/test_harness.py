import csv
import io
import json
import math

import numpy as np
import pytest

from psqe.adversary import AttackStrategy, ps_bounds
from psqe.harness import (
    ConfigError,
    ExperimentConfig,
    ResultRecord,
    load_config,
    parse_config_text,
    read_record,
    run_experiment,
    sweep,
    sweep_to_csv,
    tamper_detection_stat,
    write_record,
)
from psqe.protocol import KeyBits, RoundTranscript, run_round


def transcripts(n, key, rounds, hook=None, seed=0):
    rng = np.random.default_rng(seed)
    return [run_round(n, key, hook, rng, round_index=j) for j in range(rounds)]


# ---------------------------------------------------------------- config


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=2, rounds=10, seed=0),
        dict(n=3, rounds=0, seed=0),
        dict(n=3, rounds=10, seed=-1),
        dict(n=3, rounds=10, seed=0, key="011"),
        dict(n=3, rounds=10, seed=0, key="0a"),
        dict(n=3, rounds=10, seed=0, strategy="telepathy"),
        dict(n=3, rounds=10, seed=0, strategy="guess-key"),
        dict(n=3, rounds=10, seed=0, pad_length=11),
        dict(n=3, rounds=10, seed=0, shards=11),
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kwargs)


def test_key_value_config(tmp_path):
    path = tmp_path / "exp.cfg"
    path.write_text(
        "# campaign\n"
        "n = 5\n"
        "rounds = 200\n"
        "seed = 0x10\n"
        "strategy = intercept-resend\n"
        "key = 0110\n"
        "n_values = 3, 4\n"
        "strategies = optimal, honest\n"
    )
    cfg, extras = load_config(path)
    assert cfg == ExperimentConfig(n=5, rounds=200, seed=16, strategy="intercept-resend", key="0110")
    assert extras == {"n_values": [3, 4], "strategies": ["optimal", None]}


def test_json_config(tmp_path):
    path = tmp_path / "exp.json"
    path.write_text(json.dumps({"n": 4, "rounds": 50, "seed": 3, "shards": 2}))
    cfg, extras = load_config(path)
    assert cfg.shards == 2 and extras == {}


def test_config_errors():
    with pytest.raises(ConfigError):
        parse_config_text("n 5")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"n": 3, "rounds": 10, "seed": 0, "colour": "red"})


def test_config_dict_round_trip():
    cfg = ExperimentConfig(n=4, rounds=30, seed=9, key="101", strategy="optimal", pad_length=5)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


# ---------------------------------------------------------------- tamper statistic


def test_honest_rounds_are_clean():
    stat = tamper_detection_stat(transcripts(4, KeyBits((1, 0, 1)), 200))
    assert stat.mismatch_rate == 0.0 and stat.verdict == "clean"


def test_single_tampered_round_is_all_or_nothing():
    hook = AttackStrategy.intercept_resend().hook(4)
    stat = tamper_detection_stat(transcripts(4, KeyBits((1, 1, 1)), 1, hook))
    assert stat.mismatch_rate in (0.0, 1.0)


def test_intercept_resend_is_flagged():
    rounds = 4000
    rng = np.random.default_rng(1)
    hook = AttackStrategy.intercept_resend().hook(5)
    ts = [run_round(5, KeyBits.random(4, rng), hook, rng) for _ in range(rounds)]
    stat = tamper_detection_stat(ts)
    floor = 1 - 0.625
    assert stat.mismatch_rate >= floor - 3 * math.sqrt(floor * (1 - floor) / rounds)
    assert stat.verdict == "tampered"


def test_tamper_stat_needs_complete_rounds():
    with pytest.raises(ValueError):
        tamper_detection_stat([RoundTranscript(0, KeyBits((0, 0)), 0, None, None)])


# ---------------------------------------------------------------- experiments


def test_honest_experiment():
    rec = run_experiment(ExperimentConfig(n=5, rounds=1000, seed=0, pad_length=64))
    assert rec.agreement_rate == 1.0 and rec.mismatch_rate == 0.0
    assert rec.plaintext_recovered and not rec.violations and not rec.tampered
    assert rec.empirical_ps is None


def test_optimal_experiment_hits_upper_bound():
    rounds = 6000
    rec = run_experiment(ExperimentConfig(n=3, rounds=rounds, seed=2, strategy="optimal"))
    assert abs(rec.empirical_ps - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / rounds)
    assert rec.tampered


def test_records_round_trip_and_are_reproducible(tmp_path):
    cfg = ExperimentConfig(n=4, rounds=300, seed=5, strategy="optimal", pad_length=10)
    a = run_experiment(cfg)
    b = run_experiment(cfg)
    assert a == b
    path = tmp_path / "rec.json"
    write_record(a, path)
    assert read_record(path) == a
    assert ResultRecord.from_dict(json.loads(a.to_json())) == a


def test_output_file_bytes_identical_on_rerun(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        run_experiment(ExperimentConfig(n=4, rounds=200, seed=8, strategy="intercept-resend", output_path=str(p)))
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_shards_give_worker_independent_results():
    cfg = ExperimentConfig(n=3, rounds=400, seed=11, strategy="optimal", shards=4)
    assert run_experiment(cfg, workers=1).to_dict() == run_experiment(cfg, workers=2).to_dict()


def test_guess_key_experiment_with_correct_guess():
    rec = run_experiment(
        ExperimentConfig(n=4, rounds=100, seed=0, key="011", strategy="guess-key", key_guess="011")
    )
    assert rec.empirical_ps == 1.0 and rec.agreement_rate == 1.0


# ---------------------------------------------------------------- sweep


def test_sweep_rows_are_ordered_and_bounded():
    base = ExperimentConfig(n=3, rounds=300, seed=1)
    recs = sweep(base, [4, 3], ["optimal", None])
    assert [(r.config.n, r.config.strategy) for r in recs] == [
        (3, "optimal"), (3, None), (4, "optimal"), (4, None)
    ]
    for r in recs:
        assert r.p_max == ps_bounds(r.config.n).p_max
        if r.config.strategy is None:
            assert r.agreement_rate == 1.0
    rows = list(csv.DictReader(io.StringIO(sweep_to_csv(recs))))
    assert [row["strategy"] for row in rows] == ["optimal", "honest", "optimal", "honest"]


def test_sweep_parallel_matches_serial():
    base = ExperimentConfig(n=3, rounds=200, seed=4)
    assert sweep_to_csv(sweep(base, [3, 4], ["optimal"], workers=2)) == sweep_to_csv(
        sweep(base, [3, 4], ["optimal"])
    )


def test_sweep_needs_cells():
    base = ExperimentConfig(n=3, rounds=10, seed=0)
    with pytest.raises(ValueError):
        sweep(base, [3], [])
    with pytest.raises(ValueError):
        sweep(base, [], ["optimal"])


def test_sweep_optimal_success_decreases_towards_half():
    rounds = 8000
    recs = sweep(ExperimentConfig(n=3, rounds=rounds, seed=21), [3, 4, 5, 6], ["optimal"])
    ps = [r.empirical_ps for r in recs]
    assert all(a > b for a, b in zip(ps, ps[1:]))
    for r in recs:
        p = r.p_max
        assert abs(r.empirical_ps - p) <= 3 * math.sqrt(p * (1 - p) / rounds)
        assert r.empirical_ps > 0.5
