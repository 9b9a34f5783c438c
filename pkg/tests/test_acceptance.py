"""Acceptance suite: one test per criterion, each reported as a PASS/FAIL line
in the terminal summary."""

import math
import time

import numpy as np
from kets import ket_sum, psi_d_layout, worked_example_rotated_terms

from psqe import adversary as adv
from psqe import states
from psqe.adversary import AttackStrategy, ps_bounds
from psqe.cli import main
from psqe.harness import ExperimentConfig, run_experiment, tamper_detection_stat
from psqe.protocol import (
    KeyBits,
    apply_key_rotation,
    circuit_resources,
    decrypt,
    encrypt,
    generate_pad,
    instrumented_resources,
    run_round,
)
from psqe.qsim import DensityMatrix, eigensystem


def sigma(p, trials):
    return math.sqrt(p * (1 - p) / trials)


def test_criterion_01_cipher_state_is_maximally_mixed(criterion):
    with criterion(1, "reduced cipher state = I/2^(n-1), all keys n=3..6, 20 keys n=7,8") as c:
        start = time.perf_counter()
        rng = np.random.default_rng(101)
        worst = 0.0
        for n in range(3, 9):
            keys = adv.all_keys(n) if n <= 6 else (KeyBits.random(n - 1, rng) for _ in range(20))
            ident = DensityMatrix.maximally_mixed(n - 1)
            for key in keys:
                worst = max(worst, adv.reduced_cipher_state(n, key).max_deviation(ident))
        elapsed = time.perf_counter() - start
        c.check(worst <= 1e-10, f"max_dev={worst:.2e}")
        c.check(elapsed <= 30, f"runtime={elapsed:.1f}s")


def test_criterion_02_duplicates_are_necessary(criterion):
    with criterion(2, "without duplicates the cipher state is not maximally mixed, n=3..5") as c:
        for n in range(3, 6):
            dim = 1 << (n - 1)
            worst = max(
                adv.reduced_cipher_state(n, k, duplicates=False).max_deviation(np.eye(dim) / dim)
                for k in adv.all_keys(n)
            )
            least = min(
                adv.reduced_cipher_state(n, k, duplicates=False).max_deviation(np.eye(dim) / dim)
                for k in adv.all_keys(n)
            )
            c.check(least > 0.01, f"n={n} min_dev={least:.3f} max_dev={worst:.3f}")


def test_criterion_03_worked_example(criterion, capsys):
    with criterion(3, "worked example n=5: c=11101, recovery, rotated state") as c:
        key = KeyBits.from_string("0110")
        p = (1, 0, 1, 0, 0)
        alice, bob, _ = generate_pad(5, key, 5, rng=np.random.default_rng(0), inject=(0, 1, 0, 0, 1))
        ct = encrypt(p, alice)
        c.check(ct.bits == (1, 1, 1, 0, 1), f"c={ct}")
        c.check(decrypt(ct, bob) == p, "recovered p")
        rotated = apply_key_rotation(states.psi_d(5), key, states.cipher_positions(5))
        expected = ket_sum(worked_example_rotated_terms(), psi_d_layout(5))
        dev = float(np.max(np.abs(rotated.amplitudes - expected)))
        c.check(dev <= 1e-10, f"rotated-state dev={dev:.1e}")
        code = main(["run", "--n", "5", "--key", "0110", "--plaintext", "10100", "--inject-pad", "01001"])
        out = capsys.readouterr().out
        c.check(code == 0 and "ciphertext 11101" in out, "cli run")


def test_criterion_04_honest_agreement(criterion):
    with criterion(4, "honest rounds agree 100%, 10^4 rounds per n=3..8") as c:
        start = time.perf_counter()
        rng = np.random.default_rng(104)
        for n in range(3, 9):
            key = KeyBits.random(n - 1, rng)
            a, b, _ = generate_pad(n, key, 10_000, rng=rng)
            c.check(a.bits == b.bits, f"n={n} key={key}")
        elapsed = time.perf_counter() - start
        c.check(elapsed <= 120, f"runtime={elapsed:.1f}s")


def test_criterion_05_optimal_attack_reaches_bound(criterion):
    with criterion(5, "optimal unitary P_s = 1/2+(sqrt2/2)^(n+1), n=3,5, 10^5 rounds") as c:
        rng = np.random.default_rng(105)
        rounds = 100_000
        for n in (3, 5):
            target = ps_bounds(n).p_max
            r = adv.simulate_attack(AttackStrategy.optimal(), n, rounds, rng, method="trajectory")
            z = (r.empirical_ps - target) / sigma(target, rounds)
            c.check(abs(z) <= 3, f"n={n} P_s={r.empirical_ps:.5f} target={target:.5f} z={z:+.2f}")


def test_criterion_06_eigensystem_oracle(criterion):
    with criterion(6, "closed-form vs numeric eigenvalues, half sums = bounds, n=3..6") as c:
        for n in range(3, 7):
            vals, _ = eigensystem(adv.rho_e_explicit(n))
            dev = float(np.max(np.abs(vals - adv.rho_e_eigensystem_closed(n).eigenvalues())))
            lo, hi = adv.half_sums(vals)
            b = ps_bounds(n)
            hdev = max(abs(lo - b.p_min), abs(hi - b.p_max))
            c.check(dev <= 1e-9 and hdev <= 1e-9, f"n={n} eig_dev={dev:.1e} half_dev={hdev:.1e}")


def test_criterion_07_no_better_attack(criterion):
    with criterion(7, "100 Haar unitaries at n=3 never beat P_max + 3 sigma") as c:
        rounds = 10_000
        res = adv.brute_force_ps_search(3, 100, rounds, np.random.default_rng(107), include_optimal=False)
        limit = 0.75 + 3 * sigma(0.75, rounds)
        c.check(len(res.values) == 100, "100 unitaries")
        c.check(res.max_ps <= limit, f"max P_s={res.max_ps:.4f} limit={limit:.4f}")


def test_criterion_08_wrong_key_randomises(criterion):
    with criterion(8, "one-bit-wrong key agreement 0.5 +/- 3 sigma, n=5, 10^4 rounds") as c:
        rng = np.random.default_rng(108)
        rounds = 10_000
        agree = 0
        for j in range(rounds):
            key = KeyBits.random(4, rng)
            wrong = key.flipped(int(rng.integers(4)))
            agree += run_round(5, key, rng=rng, round_index=j, bob_key=wrong).agree
        z = (agree / rounds - 0.5) / sigma(0.5, rounds)
        c.check(abs(z) <= 3, f"agreement={agree / rounds:.4f} z={z:+.2f}")


def test_criterion_09_resource_counts(criterion):
    with criterion(9, "formula = instrumented gate counts, n=3..8 x n_k=0..n-1; (9,8,10)") as c:
        mismatches = 0
        for n in range(3, 9):
            for n_k in range(n):
                key = KeyBits(tuple(1 if i < n_k else 0 for i in range(n - 1)))
                counted, _ = instrumented_resources(n, key)
                mismatches += counted != circuit_resources(n, n_k)
        c.check(mismatches == 0, f"mismatches={mismatches}")
        five, _ = instrumented_resources(5, KeyBits.from_string("0110"))
        c.check(tuple(five) == (9, 8, 10), f"n=5 n_k=2 -> {tuple(five)}")


def test_criterion_10_lemma1(criterion):
    with criterion(10, "Ky Fan two-sided bound on 1000 random Hermitian matrices, N<=16") as c:
        rng = np.random.default_rng(110)
        violations = 0
        for _ in range(1000):
            dim = int(rng.integers(1, 17))
            a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            h = (a + a.conj().T) / 2
            k = int(rng.integers(1, dim + 1))
            q, _ = np.linalg.qr(rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k)))
            violations += not adv.lemma1_check(h, q)
        c.check(violations == 0, f"violations={violations}")


def test_criterion_11_properties(criterion):
    with criterion(11, "recursion and support-partition properties, n=2..8") as c:
        for n in range(2, 9):
            ok, dev = states.check_property1(n)
            c.check(ok and dev <= 1e-10 and states.check_property2(n), f"n={n} dev={dev:.0e}")


def test_criterion_12_entropy_gain(criterion):
    with criterion(12, "1 - H2(P_max) within 5% of 2^-n/ln2 for n=8..14; decreasing on 3..16") as c:
        worst = max(abs(adv.entropy_gain(n) / adv.entropy_gain_estimate(n) - 1) for n in range(8, 15))
        c.check(worst <= 0.05, f"max rel err={worst:.4f}")
        g = [adv.entropy_gain(n) for n in range(3, 17)]
        c.check(all(a > b for a, b in zip(g, g[1:])), "strictly decreasing")


def test_criterion_13_tamper_detection(criterion):
    with criterion(13, "intercept-resend mismatch >= 1-0.625-3 sigma and flagged; honest rate 0") as c:
        rounds = 10_000
        floor = 1 - 0.625
        limit = floor - 3 * sigma(floor, rounds)
        rng = np.random.default_rng(113)
        hook = AttackStrategy.intercept_resend().hook(5)
        ts = [run_round(5, KeyBits.random(4, rng), hook, rng, round_index=j) for j in range(rounds)]
        stat = tamper_detection_stat(ts)
        c.check(stat.mismatch_rate >= limit and stat.verdict == "tampered", f"random keys rate={stat.mismatch_rate:.4f}")
        rec = run_experiment(ExperimentConfig(n=5, rounds=rounds, seed=113, key="0110", strategy="intercept-resend"))
        c.check(rec.mismatch_rate >= limit and rec.tampered, f"key 0110 rate={rec.mismatch_rate:.4f}")
        honest = run_experiment(ExperimentConfig(n=5, rounds=rounds, seed=114))
        c.check(honest.mismatch_rate == 0.0 and not honest.tampered, "honest rate=0")


def test_criterion_14_bayes_symmetry(criterion):
    with criterion(14, "P(q_n=0|even) = P(q_n=1|odd) within 5 sigma; marginals 1/2") as c:
        rng = np.random.default_rng(114)
        for n in (3, 4):
            for name, u in (("identity", None), ("optimal", adv.optimal_attack_unitary(n))):
                r = adv.bayes_symmetry_check(n, 10_000, rng, unitary=u)
                c.check(
                    r.ok,
                    f"n={n} {name} {r.p_qn0_given_even:.3f}/{r.p_qn1_given_odd:.3f} z={r.conditional_z:.2f}",
                )
        r = adv.bayes_symmetry_check(3, 10_000, rng, unitary=adv.optimal_attack_unitary(3))
        near = abs(r.p_qn0_given_even - 0.75) <= 5 * sigma(0.75, 5000)
        c.check(near, f"optimal n=3 conditional={r.p_qn0_given_even:.3f}")


def test_criterion_15_determinism(criterion, tmp_path, capsys):
    with criterion(15, "same seed -> byte-identical output files") as c:
        cfg = dict(n=4, rounds=2000, seed=115, strategy="optimal", pad_length=32, shards=3)
        paths = [tmp_path / "a.json", tmp_path / "b.json"]
        run_experiment(ExperimentConfig(**cfg, output_path=str(paths[0])))
        run_experiment(ExperimentConfig(**cfg, output_path=str(paths[1])), workers=2)
        c.check(paths[0].read_bytes() == paths[1].read_bytes(), "experiment record")
        outs = []
        for name in ("a.csv", "b.csv"):
            main(["attack", "--strategy", "intercept-resend", "--n", "4", "--rounds", "500",
                  "--seed", "7", "--format", "csv", "--out", str(tmp_path / name)])
            outs.append((tmp_path / name).read_bytes())
        c.check(outs[0] == outs[1], "attack report")
        outs = []
        for name in ("a.jsonl", "b.jsonl"):
            main(["run", "--n", "4", "--key", "101", "--plaintext", "110010", "--seed", "3", "--out", str(tmp_path / name)])
            outs.append((tmp_path / name).read_bytes())
        c.check(outs[0] == outs[1], "transcripts")
        for name in ("a.swp", "b.swp"):
            main(["sweep", "--n-values", "3,4", "--strategies", "optimal,honest", "--rounds", "300",
                  "--seed", "5", "--out", str(tmp_path / name)])
        c.check((tmp_path / "a.swp").read_bytes() == (tmp_path / "b.swp").read_bytes(), "sweep table")
        capsys.readouterr()
