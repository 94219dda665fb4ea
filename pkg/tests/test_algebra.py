import itertools
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from tempjoint.algebra import (
    compose,
    composition_table,
    format_golden,
    interval_relation,
    inverse,
    oracle_compose,
    read_golden,
)
from tempjoint.core import POSITIVE_LABELS, ContractViolation, RelationLabel

R = RelationLabel
GOLDEN = Path(__file__).parent / "data" / "composition.tsv"
POSITIVE_PAIRS = list(itertools.product(POSITIVE_LABELS, repeat=2))


@pytest.mark.parametrize(
    "r, inv",
    [
        (R.BEFORE, R.AFTER),
        (R.AFTER, R.BEFORE),
        (R.INCLUDES, R.IS_INCLUDED),
        (R.IS_INCLUDED, R.INCLUDES),
        (R.SIMULTANEOUS, R.SIMULTANEOUS),
        (R.VAGUE, R.VAGUE),
        (R.NONE, R.NONE),
    ],
)
def test_inverse(r, inv):
    assert inverse(r) is inv
    assert inverse(inverse(r)) is r


def test_before_before():
    assert compose(R.BEFORE, R.BEFORE) == {R.BEFORE}
    assert oracle_compose(R.BEFORE, R.BEFORE) == {R.BEFORE}


def test_simultaneous_is_transitive():
    assert oracle_compose(R.SIMULTANEOUS, R.SIMULTANEOUS) == {R.SIMULTANEOUS}


def test_includes_then_before():
    # i contains j and j ends before k starts: i starts before k, and i may end
    # before k, inside k's span (a partial overlap) or after k
    assert compose(R.INCLUDES, R.BEFORE) == {R.BEFORE, R.INCLUDES, R.VAGUE}


@pytest.mark.parametrize("r", POSITIVE_LABELS)
def test_vague_input_admits_vague(r):
    assert R.VAGUE in compose(R.VAGUE, r)
    assert R.VAGUE in compose(r, R.VAGUE)


@pytest.mark.parametrize("r", POSITIVE_LABELS)
def test_simultaneous_acts_as_identity(r):
    assert r in compose(R.SIMULTANEOUS, r)
    assert r in compose(r, R.SIMULTANEOUS)


@pytest.mark.parametrize("args", [(R.NONE, R.BEFORE), (R.AFTER, R.NONE)])
def test_none_is_rejected(args):
    with pytest.raises(ContractViolation):
        compose(*args)
    with pytest.raises(ContractViolation):
        oracle_compose(*args)


@pytest.mark.parametrize("r1, r2", POSITIVE_PAIRS, ids=lambda r: r.name)
def test_compose_matches_oracle(r1, r2):
    got = compose(r1, r2)
    assert got == oracle_compose(r1, r2)
    assert got and got <= set(POSITIVE_LABELS)


@pytest.mark.parametrize("r1, r2", POSITIVE_PAIRS, ids=lambda r: r.name)
def test_inverse_coherence(r1, r2):
    for r3 in POSITIVE_LABELS:
        assert (r3 in compose(r1, r2)) == (inverse(r3) in compose(inverse(r2), inverse(r1)))


def test_golden_file_matches_table():
    assert read_golden(GOLDEN) == composition_table().entries
    assert format_golden(composition_table()) == GOLDEN.read_text(encoding="utf-8")


def test_golden_rows_sorted():
    rows = [ln for ln in GOLDEN.read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(rows) == 36
    assert rows == sorted(rows)


@pytest.mark.parametrize("r1", POSITIVE_LABELS, ids=lambda r: r.name)
def test_grid_of_eight_is_large_enough(r1):
    for r2 in POSITIVE_LABELS:
        assert oracle_compose(r1, r2, grid=10) == oracle_compose(r1, r2)


intervals = st.tuples(st.integers(0, 9), st.integers(1, 4)).map(lambda t: (t[0], t[0] + t[1]))


@given(intervals, intervals)
def test_interval_relation_swaps_to_inverse(a, b):
    r = interval_relation(a, b)
    back = interval_relation(b, a)
    assert (r is None) == (back is None)
    if r is not None:
        assert back is inverse(r)


@pytest.mark.parametrize(
    "a, b, r",
    [
        ((0, 1), (2, 3), R.BEFORE),
        ((0, 1), (1, 3), None),  # meeting endpoints overlap
        ((0, 5), (1, 3), R.INCLUDES),
        ((0, 3), (0, 2), None),  # shared start
        ((2, 4), (2, 4), R.SIMULTANEOUS),
        ((1, 2), (0, 4), R.IS_INCLUDED),
    ],
)
def test_interval_relation_examples(a, b, r):
    assert interval_relation(a, b) is r
