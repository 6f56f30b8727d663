from math import comb

import pytest

from flowee.state_space import CellState, StateIndex, enumerate_states, neighbors


def test_single_zone():
    assert enumerate_states(1, 4) == [CellState([n]) for n in range(5)]


def test_two_zones_cap_one():
    assert [tuple(s) for s in enumerate_states(2, 1)] == [(0, 0), (0, 1), (1, 0)]


def test_two_zones_cap_four_count():
    assert len(enumerate_states(2, 4)) == 15


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("n_max", range(0, 9))
def test_cardinality_and_bijection(m, n_max):
    idx = StateIndex(m, n_max)
    assert len(idx) == comb(n_max + m, m)
    assert len(set(idx.states)) == len(idx)
    for i, s in enumerate(idx):
        assert idx.index(s) == i
        assert s.total <= n_max
    assert list(idx.states) == sorted(idx.states)


@pytest.mark.parametrize("m,n_max", [(1, 5), (2, 4), (3, 3)])
def test_every_state_reachable_from_empty(m, n_max):
    idx = StateIndex(m, n_max)
    seen = {idx[0]}
    frontier = [idx[0]]
    while frontier:
        s = frontier.pop()
        for t in neighbors(s, n_max):
            if t.kind == "arrival" and t.target not in seen:
                seen.add(t.target)
                frontier.append(t.target)
    assert seen == set(idx.states)


def test_resource_guard():
    with pytest.raises(ValueError, match="too large"):
        enumerate_states(6, 40, max_states=1000)


def test_neighbors():
    empty = neighbors(CellState([0, 0]), 4)
    assert [t.kind for t in empty] == ["arrival", "arrival"]
    assert [t for t in neighbors(CellState([2, 2]), 4) if t.kind == "arrival"] == []
    mixed = neighbors(CellState([1, 2]), 4)
    assert sum(t.kind == "arrival" for t in mixed) == 2
    assert sum(t.kind == "departure" for t in mixed) == 2
    assert CellState([0, 2]) in [t.target for t in mixed]


def test_state_text_roundtrip():
    s = CellState.parse("3,0,1")
    assert s == (3, 0, 1)
    assert s.to_text() == "3,0,1"
    with pytest.raises(ValueError):
        CellState.parse("1,x")
    with pytest.raises(ValueError):
        CellState([-1, 0])


def test_index_rejects_inadmissible():
    idx = StateIndex(2, 2)
    with pytest.raises(KeyError):
        idx.index((2, 1))
    assert idx.full() == [idx.index(s) for s in [(0, 2), (1, 1), (2, 0)]]
