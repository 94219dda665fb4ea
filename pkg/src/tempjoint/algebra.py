"""Label inverses and the transitivity composition table.

Relations are read as constraints on interval endpoints ``(start, end)``:

* BEFORE(i, j)       end_i < start_j
* INCLUDES(i, j)     start_i < start_j and end_j < end_i
* SIMULTANEOUS(i, j) identical endpoints
* AFTER / IS_INCLUDED are the inverses, VAGUE constrains nothing.

Pairs of intervals that overlap without any of these holding have no
definite label; they only surface through the VAGUE rule: VAGUE belongs to
a composition whenever more than one definite relation is possible or an
input is VAGUE.
"""

from __future__ import annotations

import functools
import itertools
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import DEFINITE_LABELS, POSITIVE_LABELS, ContractViolation, RelationLabel

R = RelationLabel

_INVERSE = {
    R.BEFORE: R.AFTER,
    R.AFTER: R.BEFORE,
    R.INCLUDES: R.IS_INCLUDED,
    R.IS_INCLUDED: R.INCLUDES,
    R.SIMULTANEOUS: R.SIMULTANEOUS,
    R.VAGUE: R.VAGUE,
    R.NONE: R.NONE,
}


def inverse(r: RelationLabel) -> RelationLabel:
    return _INVERSE[RelationLabel(r)]


def _require_positive(*labels):
    for r in labels:
        if not RelationLabel(r).positive:
            raise ContractViolation(f"{RelationLabel(r).name} is not a temporal relation")


def _vague_rule(r1, r2, definite: set) -> frozenset:
    out = set(definite)
    if len(definite) > 1 or R.VAGUE in (r1, r2):
        out.add(R.VAGUE)
    return frozenset(out)


# Endpoint signatures: each definite label is a conjunction of strict
# comparisons between the endpoints of (a, b). "s"/"e" = start/end,
# the second character names the interval.
_SIGNATURES = {
    R.BEFORE: {("ea", "sb"): "<"},
    R.AFTER: {("eb", "sa"): "<"},
    R.INCLUDES: {("sa", "sb"): "<", ("eb", "ea"): "<"},
    R.IS_INCLUDED: {("sb", "sa"): "<", ("ea", "eb"): "<"},
    R.SIMULTANEOUS: {("sa", "sb"): "=", ("ea", "eb"): "="},
}


def _holds(label, rank: dict, a: str, b: str) -> bool:
    if label is R.VAGUE:
        return True
    for (x, y), op in _SIGNATURES[label].items():
        lhs = rank[x[0] + a] if x[1] == "a" else rank[x[0] + b]
        rhs = rank[y[0] + a] if y[1] == "a" else rank[y[0] + b]
        if op == "<" and not lhs < rhs:
            return False
        if op == "=" and lhs != rhs:
            return False
    return True


@functools.lru_cache(maxsize=None)
def _weak_orders():
    """Every weak ordering of the six endpoints of intervals i, j, k."""
    names = ("si", "ei", "sj", "ej", "sk", "ek")
    out = []
    for ranks in itertools.product(range(6), repeat=6):
        used = set(ranks)
        if used != set(range(len(used))):
            continue
        rank = dict(zip(names, ranks))
        if rank["si"] < rank["ei"] and rank["sj"] < rank["ej"] and rank["sk"] < rank["ek"]:
            out.append(rank)
    return out


class CompositionTable:
    """Trans(r1, r2) for all ordered pairs of positive labels."""

    def __init__(self, entries: dict):
        self.entries = {(R(a), R(b)): frozenset(R(x) for x in v) for (a, b), v in entries.items()}
        allowed = np.zeros((7, 7, 7), dtype=bool)
        for (a, b), v in self.entries.items():
            for c in v:
                allowed[a, b, c] = True
        self.allowed = allowed

    def __getitem__(self, key) -> frozenset:
        r1, r2 = key
        _require_positive(r1, r2)
        return self.entries[R(r1), R(r2)]

    def __eq__(self, other):
        return isinstance(other, CompositionTable) and self.entries == other.entries

    @classmethod
    def derive(cls) -> "CompositionTable":
        entries = {}
        orders = _weak_orders()
        for r1, r2 in itertools.product(POSITIVE_LABELS, repeat=2):
            definite = set()
            for rank in orders:
                if _holds(r1, rank, "i", "j") and _holds(r2, rank, "j", "k"):
                    definite.update(r3 for r3 in DEFINITE_LABELS if _holds(r3, rank, "i", "k"))
            entries[r1, r2] = _vague_rule(r1, r2, definite)
        return cls(entries)


@functools.lru_cache(maxsize=1)
def composition_table() -> CompositionTable:
    return CompositionTable.derive()


def compose(r1: RelationLabel, r2: RelationLabel) -> frozenset:
    return composition_table()[r1, r2]


def interval_relation(a: tuple[int, int], b: tuple[int, int]) -> RelationLabel | None:
    """Definite relation between two intervals, or None when they merely overlap."""
    (sa, ea), (sb, eb) = a, b
    if ea < sb:
        return R.BEFORE
    if eb < sa:
        return R.AFTER
    if sa == sb and ea == eb:
        return R.SIMULTANEOUS
    if sa < sb and eb < ea:
        return R.INCLUDES
    if sb < sa and ea < eb:
        return R.IS_INCLUDED
    return None


def oracle_compose(r1: RelationLabel, r2: RelationLabel, grid: int = 8) -> frozenset:
    """Composition by brute-force placement of three intervals on an integer grid."""
    _require_positive(r1, r2)
    r1, r2 = R(r1), R(r2)
    intervals = list(itertools.combinations(range(grid), 2))
    definite = set()
    for a in intervals:
        for b in intervals:
            if r1 is not R.VAGUE and interval_relation(a, b) is not r1:
                continue
            for c in intervals:
                if r2 is not R.VAGUE and interval_relation(b, c) is not r2:
                    continue
                r3 = interval_relation(a, c)
                if r3 is not None:
                    definite.add(r3)
    return _vague_rule(r1, r2, definite)


GOLDEN_HEADER = (
    "# Transitivity table derived from interval-endpoint semantics on an 8-point grid.\n"
    "# VAGUE is a member whenever more than one definite relation is realizable or an input is VAGUE.\n"
    "# Partial overlaps have no definite label; they are represented only through VAGUE.\n"
    "# Tables built from annotation guidelines may treat VAGUE differently.\n"
)


def format_golden(table: dict | CompositionTable) -> str:
    entries = table.entries if isinstance(table, CompositionTable) else table
    rows = []
    for (r1, r2), v in entries.items():
        rows.append((R(r1).name, R(r2).name, ",".join(sorted(R(x).name for x in v))))
    rows.sort()
    return GOLDEN_HEADER + "".join(f"{a}\t{b}\t{c}\n" for a, b, c in rows)


def write_golden(path, table: dict | CompositionTable) -> None:
    Path(path).write_text(format_golden(table), encoding="utf-8")


def read_golden(path) -> dict:
    entries = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        a, b, c = line.split("\t")
        entries[R[a], R[b]] = frozenset(R[x] for x in c.split(","))
    return entries


def oracle_table(labels: Iterable[RelationLabel] = POSITIVE_LABELS) -> dict:
    labels = tuple(labels)
    return {(a, b): oracle_compose(a, b) for a, b in itertools.product(labels, repeat=2)}
