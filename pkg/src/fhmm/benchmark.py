"""Standard synthetic benchmark: a seeded stand-in for a honeypot corpus.

Three generators share a periodic backbone (a common symbol on even phases,
a shared symbol on phase 1) but emit generator-specific symbols on the other
odd phases, and occupy different session-length ranges.  First-order
prediction is ambiguous after the common symbol, a single global model lacks
the capacity for all three branch patterns, and per-length specialists plus
the fusion stage recover most of it -- the regime the ensemble targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .hmm import HmmModel
from .ingest import GeneratorSpec, LengthDistribution, SynthSpec, synth_corpus
from .sequences import StateSequence

N_OBS = 19
NOISE_SYMBOLS = list(range(11, 19))
DEFAULT_NOISE = 0.06


def ring_generator(
    peak_symbols: list[int],
    n_obs: int = N_OBS,
    noise: float = DEFAULT_NOISE,
    seed: int = 0,
) -> HmmModel:
    """Deterministic phase ring emitting one peak symbol per phase.

    Each phase emits its peak with probability 1-noise and otherwise a
    uniform draw over the shared noise symbols.
    """
    n = len(peak_symbols)
    A = np.zeros((n, n))
    for p in range(n):
        A[p, (p + 1) % n] = 1.0
    B = np.zeros((n, n_obs))
    for p, symbol in enumerate(peak_symbols):
        B[p, symbol] = 1.0 - noise
        B[p, NOISE_SYMBOLS] += noise / len(NOISE_SYMBOLS)
    pi = np.zeros(n)
    pi[0] = 1.0
    return HmmModel(n_hidden=n, n_obs=n_obs, A=A, B=B, pi=pi, seed=seed)


def standard_generators(noise: float = DEFAULT_NOISE) -> list[GeneratorSpec]:
    """The three benchmark behaviours: short, medium, and long sessions."""
    short = GeneratorSpec(
        model=ring_generator([0, 1, 0, 2, 0, 3, 0, 4], noise=noise),
        weight=0.40,
        lengths=LengthDistribution(min_len=2, mean_extra=8.0, max_len=45),
        name="short-probe",
    )
    medium = GeneratorSpec(
        model=ring_generator([0, 1, 0, 5, 0, 6, 0, 7], noise=noise),
        weight=0.35,
        lengths=LengthDistribution(
            min_len=24, mean_extra=25.0, max_len=140,
            atoms=[(30, 3.0), (44, 3.0), (60, 2.0), (90, 2.0)],
            atom_mass=0.6,
        ),
        name="scripted-loop",
    )
    long = GeneratorSpec(
        model=ring_generator([0, 1, 0, 8, 0, 9, 0, 10], noise=noise),
        weight=0.25,
        lengths=LengthDistribution(
            min_len=80, mean_extra=60.0, max_len=300,
            atoms=[(120, 3.0), (160, 2.0), (200, 2.0), (240, 2.0), (300, 1.0)],
            atom_mass=0.6,
        ),
        name="persistent",
    )
    return [short, medium, long]


@dataclass
class BenchmarkData:
    train: list[StateSequence]
    test: list[StateSequence]
    train_labels: list[str]
    test_labels: list[str]
    n_obs: int


def standard_benchmark(
    n_train: int = 10_000, n_test: int = 2_000, seed: int = 11
) -> BenchmarkData:
    """Seeded train/test corpora drawn from the standard generator mixture."""
    corpus = synth_corpus(SynthSpec(
        generators=standard_generators(),
        n_sessions=n_train + n_test,
        seed=seed,
    ))
    return BenchmarkData(
        train=corpus.sessions[:n_train],
        test=corpus.sessions[n_train:],
        train_labels=corpus.labels[:n_train],
        test_labels=corpus.labels[n_train:],
        n_obs=corpus.n_obs,
    )


def standard_config(**overrides) -> RunConfig:
    """Benchmark defaults; keyword overrides replace individual fields."""
    base = dict(
        k=16,
        n_hidden=10,
        n_obs=N_OBS,
        min_support=10,
        hidden_width=60,
        lr=0.12,
        l2=1e-5,
        epochs=12,
        batch=512,
        base_seed=11,
        stride=3,
        tol=1e-5,
        max_iters=200,
    )
    base.update(overrides)
    config = RunConfig(**base)
    config.validate()
    return config
