"""Observation sequences: one attack session as a run of discrete symbols."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass
class StateSequence:
    """One session's ordered observation symbols.

    Symbols are small non-negative integers; the alphabet size M is a
    property of the model consuming the sequence, so range checks against M
    happen at the point of use (see :func:`check_symbols`).
    """

    symbols: np.ndarray
    session_id: str = ""
    timestamps: list[float] | None = field(default=None, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.symbols, dtype=np.int64)
        if arr.ndim != 1:
            raise DomainError("symbols must be one-dimensional")
        if arr.size < 1:
            raise DomainError("a sequence needs at least one symbol")
        if arr.min() < 0:
            raise DomainError("symbols must be non-negative")
        self.symbols = arr

    def __len__(self) -> int:
        return int(self.symbols.size)


def check_symbols(seq: StateSequence, n_obs: int) -> None:
    """Raise DomainError unless every symbol lies in [0, n_obs)."""
    high = int(seq.symbols.max())
    if high >= n_obs:
        raise DomainError(
            f"sequence {seq.session_id!r} contains symbol {high} "
            f"but the alphabet has only {n_obs} symbols"
        )


def as_sequences(raw: list) -> list[StateSequence]:
    """Coerce a list of int lists / arrays / StateSequences into StateSequences."""
    out = []
    for i, item in enumerate(raw):
        if isinstance(item, StateSequence):
            out.append(item)
        else:
            out.append(StateSequence(np.asarray(item), session_id=f"seq-{i}"))
    return out
