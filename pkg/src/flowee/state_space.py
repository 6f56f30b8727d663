"""Admissible Markov states s = (N_1, ..., N_M) under the admission cap."""

from __future__ import annotations

from math import comb
from typing import Iterator, NamedTuple, Sequence

MAX_STATES = 10**6


class CellState(tuple):
    """Per-zone user counts. A plain tuple subclass, so it hashes and sorts."""

    def __new__(cls, counts: Sequence[int]):
        counts = tuple(int(c) for c in counts)
        if not counts:
            raise ValueError("a state needs at least one zone")
        if any(c < 0 for c in counts):
            raise ValueError(f"negative user count in {counts}")
        return super().__new__(cls, counts)

    @property
    def total(self) -> int:
        return sum(self)

    @property
    def is_empty(self) -> bool:
        return not any(self)

    def with_count(self, zone: int, n: int) -> "CellState":
        c = list(self)
        c[zone] = n
        return CellState(c)

    def to_text(self) -> str:
        return ",".join(str(c) for c in self)

    @classmethod
    def parse(cls, text: str) -> "CellState":
        """Parse the ``"N1,N2,...,NM"`` text form."""
        try:
            return cls(int(t) for t in text.split(","))
        except ValueError as e:
            raise ValueError(f"bad state {text!r}: expected comma-separated counts") from e

    def __repr__(self):
        return f"CellState({self.to_text()})"


def count_states(m_zones: int, n_max: int) -> int:
    return comb(n_max + m_zones, m_zones)


def _compositions(m: int, budget: int) -> Iterator[tuple[int, ...]]:
    if m == 1:
        for n in range(budget + 1):
            yield (n,)
        return
    for n in range(budget + 1):
        for rest in _compositions(m - 1, budget - n):
            yield (n,) + rest


def enumerate_states(m_zones: int, n_max: int, max_states: int = MAX_STATES) -> list[CellState]:
    """All states with at most ``n_max`` users in total, in lexicographic order."""
    if m_zones < 1:
        raise ValueError("m_zones must be >= 1")
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    n = count_states(m_zones, n_max)
    if n > max_states:
        raise ValueError(f"state space too large: {n} states > ceiling {max_states}")
    return [CellState(c) for c in _compositions(m_zones, n_max)]


class StateIndex:
    """Dense bijection between the admissible states and ``range(len(self))``."""

    def __init__(self, m_zones: int, n_max: int, max_states: int = MAX_STATES):
        self.m_zones = m_zones
        self.n_max = n_max
        self.states = enumerate_states(m_zones, n_max, max_states)
        self._pos = {s: i for i, s in enumerate(self.states)}

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i: int) -> CellState:
        return self.states[i]

    def __contains__(self, state) -> bool:
        return tuple(state) in self._pos

    def index(self, state) -> int:
        try:
            return self._pos[tuple(state)]
        except KeyError:
            raise KeyError(f"state {tuple(state)} not admissible for M={self.m_zones}, "
                           f"N_max={self.n_max}") from None

    def nonempty(self) -> list[CellState]:
        return [s for s in self.states if not s.is_empty]

    def full(self) -> list[int]:
        """Indices of the blocking states, N(s) == N_max."""
        return [i for i, s in enumerate(self.states) if s.total == self.n_max]


class Transition(NamedTuple):
    kind: str  # "arrival" or "departure"
    zone: int
    target: CellState


def neighbors(state: CellState, n_max: int) -> list[Transition]:
    """Arrival and departure transitions out of ``state``."""
    state = CellState(state)
    if state.total > n_max:
        raise ValueError(f"{state} exceeds N_max={n_max}")
    out = []
    if state.total < n_max:
        for j in range(len(state)):
            out.append(Transition("arrival", j, state.with_count(j, state[j] + 1)))
    for j in range(len(state)):
        if state[j] > 0:
            out.append(Transition("departure", j, state.with_count(j, state[j] - 1)))
    return out
