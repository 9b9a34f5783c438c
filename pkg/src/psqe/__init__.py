"""Simulator for a key-reusing quantum one-time-pad scheme built on GHZ-type states."""

from .adversary import (
    AttackReport,
    AttackStrategy,
    PsBounds,
    brute_force_ps_search,
    optimal_attack_unitary,
    ps_bounds,
    simulate_attack,
)
from .harness import ExperimentConfig, ResultRecord, run_experiment, sweep
from .protocol import KeyBits, decrypt, encrypt, generate_pad, run_round
from .qsim import DensityMatrix, StateVector, Unitary

__all__ = [
    "AttackReport",
    "AttackStrategy",
    "DensityMatrix",
    "ExperimentConfig",
    "KeyBits",
    "PsBounds",
    "ResultRecord",
    "StateVector",
    "Unitary",
    "brute_force_ps_search",
    "decrypt",
    "encrypt",
    "generate_pad",
    "optimal_attack_unitary",
    "ps_bounds",
    "run_experiment",
    "run_round",
    "simulate_attack",
    "sweep",
]
