"""First-order Markov-chain baseline over observed symbols."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EstimationError
from .sequences import StateSequence, check_symbols
from . import serialize

DEFAULT_SMOOTHING = 1.0


@dataclass
class MarkovChainModel:
    n_obs: int
    T1: np.ndarray        # M x M row-stochastic transition matrix
    init: np.ndarray      # length-M initial distribution
    smoothing: float

    def __post_init__(self):
        self.T1 = np.asarray(self.T1, dtype=np.float64)
        self.init = np.asarray(self.init, dtype=np.float64)

    def validate(self, atol: float = 1e-9) -> None:
        if self.T1.shape != (self.n_obs, self.n_obs):
            raise DomainError("T1 shape mismatch")
        if (self.T1 < 0).any() or (self.init < 0).any():
            raise DomainError("negative probabilities")
        if np.abs(self.T1.sum(axis=1) - 1.0).max() > atol:
            raise DomainError("T1 rows must sum to 1")
        if abs(self.init.sum() - 1.0) > atol:
            raise DomainError("init must sum to 1")


def fit_markov(
    sequences: list[StateSequence],
    n_obs: int,
    smoothing: float = DEFAULT_SMOOTHING,
) -> MarkovChainModel:
    """Additive-smoothed transition counts.

    T1[i][j] = (count(i->j) + smoothing) / (count(i->.) + M * smoothing);
    the initial distribution comes from first symbols the same way.  Source
    states never observed get a uniform row when smoothing is zero.
    """
    if not sequences:
        raise DomainError("need at least one sequence")
    if smoothing < 0:
        raise DomainError("smoothing must be non-negative")
    m = n_obs
    counts = np.zeros((m, m))
    first = np.zeros(m)
    n_transitions = 0
    for seq in sequences:
        check_symbols(seq, m)
        sym = seq.symbols
        first[sym[0]] += 1
        if sym.size >= 2:
            np.add.at(counts, (sym[:-1], sym[1:]), 1.0)
            n_transitions += sym.size - 1
    if n_transitions == 0 and smoothing == 0.0:
        raise EstimationError(
            "no transitions observed and smoothing is zero"
        )

    T1 = counts + smoothing
    row_sums = T1.sum(axis=1)
    empty = row_sums <= 0.0
    T1[empty] = 1.0 / m
    row_sums[empty] = 1.0
    T1 /= row_sums[:, None]

    init = first + smoothing
    total = init.sum()
    init = init / total if total > 0 else np.full(m, 1.0 / m)
    model = MarkovChainModel(n_obs=m, T1=T1, init=init, smoothing=smoothing)
    model.validate()
    return model


def predict_next_markov(model: MarkovChainModel, prefix: StateSequence) -> int:
    """argmax over the last symbol's transition row, lowest index on ties."""
    check_symbols(prefix, model.n_obs)
    return int(np.argmax(model.T1[prefix.symbols[-1]]))


def sample_markov(
    model: MarkovChainModel, length: int, rng: np.random.Generator
) -> np.ndarray:
    if length < 1:
        raise DomainError("length must be at least 1")
    out = np.empty(length, dtype=np.int64)
    out[0] = rng.choice(model.n_obs, p=model.init)
    for t in range(1, length):
        out[t] = rng.choice(model.n_obs, p=model.T1[out[t - 1]])
    return out


MARKOV_SCHEMA = "fhmm-markov/1"


def markov_to_doc(model: MarkovChainModel) -> dict:
    return {
        "schema": MARKOV_SCHEMA,
        "n_obs": model.n_obs,
        "smoothing": serialize.fmt_float(model.smoothing),
        "t1": serialize.array_to_doc(model.T1),
        "init": serialize.array_to_doc(model.init),
    }


def markov_from_doc(doc: dict) -> MarkovChainModel:
    if doc.get("schema") != MARKOV_SCHEMA:
        raise DomainError(f"unexpected model schema {doc.get('schema')!r}")
    model = MarkovChainModel(
        n_obs=int(doc["n_obs"]),
        T1=serialize.array_from_doc(doc["t1"]),
        init=serialize.array_from_doc(doc["init"]),
        smoothing=float(doc["smoothing"]),
    )
    model.validate()
    return model


def save_markov(model: MarkovChainModel, path) -> None:
    serialize.write_doc(path, markov_to_doc(model))


def load_markov(path) -> MarkovChainModel:
    return markov_from_doc(serialize.read_doc(path))
