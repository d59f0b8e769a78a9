import pytest

from hhsev.core.errors import ConfigError
from hhsev.core.state import HouseholdState, enumerate_states, reduced_dimension


@pytest.mark.parametrize("n_max, expected", [(1, 4), (2, 18), (3, 52), (4, 121), (5, 246)])
def test_reduced_dimension(n_max, expected):
    assert enumerate_states(n_max).reduced_count == expected
    assert reduced_dimension(n_max) == expected


def test_full_count_two_sizes():
    index = enumerate_states(2)
    assert index.full_count == 5 + 15
    assert index.offsets[1] == slice(0, 5)
    assert index.offsets[2] == slice(5, 20)


def test_ordering_and_lookup():
    index = enumerate_states(3)
    assert index.states[0] == HouseholdState(1, 0, 0, 0, 0)
    assert index.states[1] == HouseholdState(1, 0, 0, 0, 1)
    for pos, state in enumerate(index.states):
        assert index.index(state) == pos
        assert state.susceptibles == index.s[pos] >= 0
    assert index.find(2, 2, 1, 0, 0) is None


@pytest.mark.parametrize("n_max", [0, 11])
def test_rejects_out_of_range(n_max):
    with pytest.raises(ConfigError):
        enumerate_states(n_max)
