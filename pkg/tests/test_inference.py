import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from _util import (
    TRUTH_TABLE,
    all_labelings,
    as_ints,
    feasible_relations,
    loss_augmentation_gap,
    naive_map,
    random_instance,
    rows_satisfied,
)
from tempjoint.core import CandidateSet, EventLabel, JointAssignment, RelationLabel
from tempjoint.inference import (
    RowKind,
    SizeGuardError,
    assignment_objective,
    brute_force_map,
    build_ilp,
    check_validity,
    read_score_file,
    solve_exact,
    solve_local,
    write_score_file,
)
from tempjoint.scoring import ScoreTable

R = RelationLabel
E = EventLabel
seeds = st.integers(0, 2**32 - 1)


def table(events: dict, pairs: dict) -> tuple[ScoreTable, CandidateSet]:
    ev = {k: np.asarray(v, dtype=float) for k, v in events.items()}
    rel = {p: np.asarray(v, dtype=float) for p, v in pairs.items()}
    return ScoreTable(ev, rel), CandidateSet(tuple(ev), tuple(rel))


def one_hot(label, value, n=7, rest=0.0):
    v = np.full(n, rest)
    v[int(label)] = value
    return v


def zero_scores(n_events, pairs):
    return table({k: [0, 0] for k in range(n_events)}, {p: np.zeros(7) for p in pairs})


# ------------------------------------------------------------ construction


def test_variable_and_row_counts():
    s, c = zero_scores(2, [(0, 1)])
    inst = build_ilp(s, c)
    assert inst.n_vars == 2 * 2 + 7
    assert inst.count(RowKind.ONE_LABEL) == 3
    assert inst.count(RowKind.CONSISTENCY) == 3
    assert inst.count(RowKind.TRANSITIVITY) == 0


def test_full_triple_has_36_transitivity_rows():
    s, c = zero_scores(3, [(0, 1), (0, 2), (1, 2)])
    assert build_ilp(s, c).count(RowKind.TRANSITIVITY) == 36
    s, c = zero_scores(3, [(0, 1), (1, 2)])
    assert build_ilp(s, c).count(RowKind.TRANSITIVITY) == 0


def test_objective_coefficients():
    s, c = table({0: [0.5, -1.0], 1: [2.0, 3.0]}, {(0, 1): np.arange(7.0)})
    inst = build_ilp(s, c, c_event=0.1)
    assert inst.objective[:4].tolist() == [0.05, -0.1, 0.2, 0.30000000000000004]
    assert inst.objective[4:].tolist() == list(range(7))


def test_loss_augmentation_adds_one_off_gold():
    s, c = table({0: [0.5, -1.0], 1: [2.0, 3.0]}, {(0, 1): np.arange(7.0)})
    gold = JointAssignment({0: E.EVENT, 1: E.NON_EVENT}, {(0, 1): R.NONE})
    plain, aug = build_ilp(s, c), build_ilp(s, c, loss_augment=gold)
    diff = aug.objective - plain.objective
    gold_vars = {plain.var(("e", 0), 1), plain.var(("e", 1), 0), plain.var(("r", 0, 1), 6)}
    assert all(diff[v] == (0.0 if v in gold_vars else 1.0) for v in range(plain.n_vars))


def test_mismatched_scores_rejected():
    s, _ = zero_scores(2, [(0, 1)])
    with pytest.raises(Exception, match="cover"):
        build_ilp(s, CandidateSet((0, 1, 2), ()))
    with pytest.raises(Exception, match="gold"):
        build_ilp(s, CandidateSet((0, 1), ((0, 1),)), loss_augment=JointAssignment({0: 1}, {}))


@pytest.mark.parametrize("seed", range(10))
def test_loss_augmentation_identity(seed):
    assert loss_augmentation_gap(seed) <= 1e-12


# ------------------------------------------------------------- truth table

@pytest.mark.parametrize("events, expected", list(TRUTH_TABLE.items()))
def test_consistency_truth_table(events, expected):
    assert feasible_relations(*events) == expected
    for r in R:
        a = JointAssignment(dict(enumerate(events)), {(0, 1): r})
        assert (not check_validity(a)) == (r in expected)


def test_rows_accept_exactly_the_valid_assignments():
    s, c = zero_scores(3, [(0, 1), (0, 2), (1, 2)])
    inst = build_ilp(s, c)
    for labels in all_labelings(inst):
        a = inst.labels_to_assignment(labels)
        assert rows_satisfied(inst, labels) == (not check_validity(a))


# ------------------------------------------------------------------ solver


def test_strong_events_and_before():
    s, c = table({0: [0, 2], 1: [0, 2]}, {(0, 1): one_hot(R.BEFORE, 2.0)})
    got = solve_exact(build_ilp(s, c))
    assert got == JointAssignment({0: E.EVENT, 1: E.EVENT}, {(0, 1): R.BEFORE})
    ev, rel, _ = naive_map(s, c)
    assert as_ints(got) == (ev, rel)


def test_dominant_non_event_forces_none():
    s, c = table({0: [0, 2], 1: [10, 0]}, {(0, 1): one_hot(R.BEFORE, 3.0)})
    got = solve_exact(build_ilp(s, c))
    assert got.events[1] is E.NON_EVENT
    assert got.relations[0, 1] is R.NONE
    assert as_ints(got)[:2] == naive_map(s, c)[:2]


def test_intransitive_triple_flips_cheapest_pair():
    s, c = table(
        {0: [0, 3], 1: [0, 3], 2: [0, 3]},
        {
            (0, 1): one_hot(R.BEFORE, 2.0),
            (1, 2): one_hot(R.BEFORE, 2.0),
            (0, 2): [0.8, 1.0, 0, 0, 0, 0, 0],
        },
    )
    local = solve_local(s, c)
    assert [local.relations[p] for p in [(0, 1), (1, 2), (0, 2)]] == [R.BEFORE, R.BEFORE, R.AFTER]
    got = solve_exact(build_ilp(s, c))
    # giving up 0.2 on (0, 2) beats every other repair
    assert got == JointAssignment(
        {0: E.EVENT, 1: E.EVENT, 2: E.EVENT}, {(0, 1): R.BEFORE, (0, 2): R.BEFORE, (1, 2): R.BEFORE}
    )
    assert as_ints(got) == naive_map(s, c)[:2]


def test_empty_instance():
    s, c = table({}, {})
    assert solve_exact(build_ilp(s, c)) == JointAssignment()
    assert brute_force_map(s, c) == JointAssignment()


def test_brute_force_single_token():
    s, c = table({0: [0.0, 1.0]}, {})
    assert brute_force_map(s, c).events == {0: E.EVENT}


def test_brute_force_size_guard():
    s, c = zero_scores(6, [])
    with pytest.raises(SizeGuardError):
        brute_force_map(s, c)
    s, c = zero_scores(5, list(itertools.combinations(range(5), 2))[:9])
    with pytest.raises(SizeGuardError):
        brute_force_map(s, c)


def test_all_zero_scores_pick_the_first_labeling():
    s, c = zero_scores(3, [(0, 1), (0, 2), (1, 2)])
    got = solve_exact(build_ilp(s, c))
    assert set(got.events.values()) == {E.NON_EVENT}
    assert set(got.relations.values()) == {R.NONE}


@given(seeds, st.sampled_from([0.1, 1.0, 5.0]))
def test_brute_force_agrees_with_plain_enumeration(seed, c_event):
    s, c = random_instance(np.random.default_rng(seed), max_events=3, max_pairs=3)
    ev, rel, val = naive_map(s, c, c_event)
    got = brute_force_map(s, c, c_event)
    assert as_ints(got) == (ev, rel)
    assert math.isclose(assignment_objective(s, got, c_event), val, rel_tol=1e-12, abs_tol=1e-12)


@given(seeds, st.sampled_from([0.1, 1.0, 5.0]))
def test_integer_ties_break_like_enumeration(seed, c_event):
    s, c = random_instance(np.random.default_rng(seed), max_events=3, max_pairs=3, integer=True)
    ev, rel, _ = naive_map(s, c, c_event)
    assert as_ints(solve_exact(build_ilp(s, c, c_event))) == (ev, rel)
    assert as_ints(brute_force_map(s, c, c_event)) == (ev, rel)


@given(seeds)
def test_loss_augmented_solver_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    s, c = random_instance(rng, max_events=3, max_pairs=3)
    plain = build_ilp(s, c)
    gold = plain.labels_to_assignment([int(rng.integers(n)) for n in plain.n_labels])
    ev, rel, _ = naive_map(s, c, 1.0, gold)
    assert as_ints(solve_exact(build_ilp(s, c, loss_augment=gold))) == (ev, rel)
    assert as_ints(brute_force_map(s, c, loss_augment=gold)) == (ev, rel)


@given(seeds, st.sampled_from([0.1, 1.0, 5.0]))
def test_solver_matches_brute_force(seed, c_event):
    s, c = random_instance(np.random.default_rng(seed))
    inst = build_ilp(s, c, c_event)
    got = solve_exact(inst)
    assert got == brute_force_map(s, c, c_event)
    assert check_validity(got, candidates=c) == []


def _event_part(s, a):
    return sum(float(s.event_scores[k][int(lab)]) for k, lab in a.events.items())


@given(seeds)
def test_event_score_monotone_in_c_event(seed):
    s, c = random_instance(np.random.default_rng(seed))
    parts = [_event_part(s, solve_exact(build_ilp(s, c, ce))) for ce in (0.1, 0.5, 1.0, 2.0, 5.0)]
    assert all(a <= b + 1e-12 for a, b in zip(parts, parts[1:]))


def test_fixed_tokens_leave_the_candidate_space():
    s, c = table({0: [0, 5], 1: [0, 5], 2: [0, 5]}, {(0, 1): one_hot(R.BEFORE, 5), (1, 2): one_hot(R.AFTER, 5)})
    for consistency in (True, False):
        inst = build_ilp(s, c, fixed_non_events=[1], consistency=consistency)
        for a in (solve_exact(inst), solve_local(inst)):
            assert a.events[1] is E.NON_EVENT
            assert a.relations[0, 1] is R.NONE and a.relations[1, 2] is R.NONE
            assert a.events[0] is E.EVENT


def test_local_ignores_constraints():
    s, c = table({0: [1, 0], 1: [0, 1]}, {(0, 1): one_hot(R.BEFORE, 1)})
    a = solve_local(build_ilp(s, c))
    assert a == solve_local(s, c)
    assert a.relations[0, 1] is R.BEFORE and a.events[0] is E.NON_EVENT
    assert check_validity(a)


# ---------------------------------------------------------------- validity


def test_two_events_with_none_violate_consistency():
    a = JointAssignment({0: E.EVENT, 1: E.EVENT}, {(0, 1): R.NONE})
    assert [v.kind for v in check_validity(a)] == [RowKind.CONSISTENCY]


def test_non_event_endpoint_with_relation():
    a = JointAssignment({0: E.NON_EVENT, 1: E.EVENT}, {(0, 1): R.BEFORE})
    assert [v.kind for v in check_validity(a)] == [RowKind.CONSISTENCY]


def test_before_before_after_violates_transitivity():
    a = JointAssignment(
        {0: E.EVENT, 1: E.EVENT, 2: E.EVENT}, {(0, 1): R.BEFORE, (1, 2): R.BEFORE, (0, 2): R.AFTER}
    )
    (v,) = check_validity(a)
    assert v.kind is RowKind.TRANSITIVITY
    assert v.keys == ((0, 1), (1, 2), (0, 2))


def test_missing_endpoint_and_key_mismatch():
    a = JointAssignment({0: E.EVENT}, {(0, 1): R.BEFORE})
    assert [v.kind for v in check_validity(a)] == [RowKind.ONE_LABEL]
    assert check_validity(JointAssignment({0: 1}, {}), candidates=CandidateSet((0, 1), ()))


# -------------------------------------------------------------- score file


def test_score_file_round_trip(tmp_path):
    s, c = random_instance(np.random.default_rng(3))
    write_score_file(tmp_path / "s.txt", s, c)
    s2, c2 = read_score_file(tmp_path / "s.txt")
    assert c2 == c
    for k in c.event_candidates:
        assert s2.event_scores[k].tolist() == s.event_scores[k].tolist()
    for p in c.relation_candidates:
        assert s2.relation_scores[p].tolist() == s.relation_scores[p].tolist()


@pytest.mark.parametrize(
    "text, message",
    [
        ("", "header"),
        ("EVENTS 1 PAIRS 0\n", "expected 1"),
        ("EVENTS 1 PAIRS 0\n0 1\n", "event line"),
        ("EVENTS 2 PAIRS 1\n0 0 0\n1 0 0\n1 0 1 2 3 4 5 6 7\n", "i < j"),
        ("EVENTS x PAIRS 0\n", "counts"),
        ("EVENTS 1 PAIRS 0\n0 a 1\n", "could not convert"),
    ],
)
def test_score_file_errors(tmp_path, text, message):
    (tmp_path / "s.txt").write_text(text)
    with pytest.raises(Exception, match=message):
        read_score_file(tmp_path / "s.txt")
