"""Domain types, candidate generation and the Hamming distance."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping


class ContractViolation(ValueError):
    """Raised when a caller breaks an operation's precondition."""


class RelationLabel(enum.IntEnum):
    BEFORE = 0
    AFTER = 1
    INCLUDES = 2
    IS_INCLUDED = 3
    SIMULTANEOUS = 4
    VAGUE = 5
    NONE = 6

    @property
    def positive(self) -> bool:
        return self is not RelationLabel.NONE


class EventLabel(enum.IntEnum):
    # index matches the (score_NON_EVENT, score_EVENT) layout of score tables
    NON_EVENT = 0
    EVENT = 1


POSITIVE_LABELS = tuple(r for r in RelationLabel if r.positive)
DEFINITE_LABELS = tuple(r for r in POSITIVE_LABELS if r is not RelationLabel.VAGUE)

Pair = tuple[int, int]


@dataclass(frozen=True)
class Token:
    index: int
    text: str
    pos: str
    sentence: int
    tense: str = ""
    polarity: str = ""


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[Token, ...]
    gold_events: frozenset[int] = frozenset()
    gold_relations: Mapping[Pair, RelationLabel] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "gold_events", frozenset(self.gold_events))
        object.__setattr__(
            self,
            "gold_relations",
            {tuple(k): RelationLabel(v) for k, v in dict(self.gold_relations).items()},
        )

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        """Check the document invariants, raising ContractViolation on failure."""
        n = len(self.tokens)
        for pos, tok in enumerate(self.tokens):
            if tok.index != pos:
                raise ContractViolation(f"{self.doc_id}: token {pos} has index {tok.index}")
            if pos and tok.sentence < self.tokens[pos - 1].sentence:
                raise ContractViolation(f"{self.doc_id}: sentence index decreases at token {pos}")
        for k in self.gold_events:
            if not 0 <= k < n:
                raise ContractViolation(f"{self.doc_id}: event index {k} out of range")
        for (i, j), label in self.gold_relations.items():
            if not (0 <= i < j < n):
                raise ContractViolation(f"{self.doc_id}: bad relation key ({i}, {j})")
            if label.positive and not (i in self.gold_events and j in self.gold_events):
                raise ContractViolation(
                    f"{self.doc_id}: positive relation ({i}, {j}) {label.name} on a non-event endpoint"
                )


@dataclass(frozen=True)
class CandidateSet:
    event_candidates: tuple[int, ...] = ()
    relation_candidates: tuple[Pair, ...] = ()

    @property
    def size(self) -> int:
        """Number of labelled keys (events plus pairs)."""
        return len(self.event_candidates) + len(self.relation_candidates)

    def triples(self) -> list[tuple[int, int, int]]:
        """All i < j < k whose three pairs are relation candidates."""
        pairs = set(self.relation_candidates)
        succ: dict[int, list[int]] = {}
        for i, j in self.relation_candidates:
            succ.setdefault(i, []).append(j)
        out = []
        for i, js in sorted(succ.items()):
            for j in sorted(js):
                for k in succ.get(j, ()):
                    if (i, k) in pairs:
                        out.append((i, j, k))
        return sorted(out)


@dataclass(frozen=True)
class JointAssignment:
    events: Mapping[int, EventLabel] = field(default_factory=dict)
    relations: Mapping[Pair, RelationLabel] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "events", {int(k): EventLabel(v) for k, v in dict(self.events).items()})
        object.__setattr__(
            self, "relations", {tuple(k): RelationLabel(v) for k, v in dict(self.relations).items()}
        )

    def matches(self, candidates: CandidateSet) -> bool:
        return set(self.events) == set(candidates.event_candidates) and set(self.relations) == set(
            candidates.relation_candidates
        )


def generate_candidates(doc: Document, pos_whitelist: Iterable[str] | None = None) -> CandidateSet:
    """Event candidates filtered by POS and pairs within adjacent sentences.

    ``pos_whitelist=None`` keeps every token.
    """
    allowed = None if pos_whitelist is None else frozenset(pos_whitelist)
    events = tuple(t.index for t in doc.tokens if allowed is None or t.pos in allowed)
    sentence = {t.index: t.sentence for t in doc.tokens}
    pairs = tuple(
        (i, j) for i, j in itertools.combinations(events, 2) if abs(sentence[i] - sentence[j]) <= 1
    )
    return CandidateSet(events, pairs)


def gold_assignment(doc: Document, candidates: CandidateSet) -> JointAssignment:
    """Gold labels restricted to a candidate set; unannotated pairs are NONE."""
    events = {
        k: EventLabel.EVENT if k in doc.gold_events else EventLabel.NON_EVENT
        for k in candidates.event_candidates
    }
    relations = {p: doc.gold_relations.get(p, RelationLabel.NONE) for p in candidates.relation_candidates}
    return JointAssignment(events, relations)


def hamming_distance(a: JointAssignment, b: JointAssignment) -> int:
    if set(a.events) != set(b.events) or set(a.relations) != set(b.relations):
        raise ContractViolation("assignments are defined over different keys")
    return sum(a.events[k] != b.events[k] for k in a.events) + sum(
        a.relations[p] != b.relations[p] for p in a.relations
    )
