"""Joint MAP inference as a 0-1 ILP, solved exactly by branch and bound."""

from __future__ import annotations

import enum
import functools
import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .algebra import CompositionTable, composition_table
from .core import (
    POSITIVE_LABELS,
    CandidateSet,
    ContractViolation,
    EventLabel,
    JointAssignment,
    RelationLabel,
)
from .scoring import ScoreTable

NONE = int(RelationLabel.NONE)
EVENT = int(EventLabel.EVENT)
NON_EVENT = int(EventLabel.NON_EVENT)


class RowKind(enum.Enum):
    ONE_LABEL = "one_label"
    CONSISTENCY = "consistency"
    TRANSITIVITY = "transitivity"
    FIXED = "fixed"


@dataclass(frozen=True)
class Row:
    kind: RowKind
    coeffs: tuple[tuple[int, float], ...]  # (variable index, coefficient)
    sense: str  # "<=", ">=" or "=="
    rhs: float


@dataclass
class ILPInstance:
    candidates: CandidateSet
    keys: list  # ("e", k) or ("r", i, j), events first
    offsets: list[int]
    n_labels: list[int]
    objective: np.ndarray
    rows: list[Row] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return len(self.objective)

    def var(self, key, label: int) -> int:
        return self.offsets[self.key_index[key]] + int(label)

    def __post_init__(self):
        self.key_index = {k: n for n, k in enumerate(self.keys)}

    def count(self, kind: RowKind) -> int:
        return sum(r.kind is kind for r in self.rows)

    def labels_to_assignment(self, labels) -> JointAssignment:
        events, relations = {}, {}
        for key, lab in zip(self.keys, labels):
            if key[0] == "e":
                events[key[1]] = EventLabel(lab)
            else:
                relations[key[1], key[2]] = RelationLabel(lab)
        return JointAssignment(events, relations)

    def assignment_to_labels(self, a: JointAssignment) -> list[int]:
        return [int(a.events[k[1]]) if k[0] == "e" else int(a.relations[k[1], k[2]]) for k in self.keys]

    def objective_value(self, a: JointAssignment) -> float:
        labels = self.assignment_to_labels(a)
        return math.fsum(self.objective[o + lab] for o, lab in zip(self.offsets, labels))


def build_ilp(
    scores: ScoreTable,
    candidates: CandidateSet,
    c_event: float = 1.0,
    loss_augment: JointAssignment | None = None,
    fixed_non_events: Iterable[int] = (),
    consistency: bool = True,
    transitivity: bool = True,
    table: CompositionTable | None = None,
) -> ILPInstance:
    if not scores.covers(candidates):
        raise ContractViolation("score table does not cover the candidate set")
    if loss_augment is not None and not loss_augment.matches(candidates):
        raise ContractViolation("gold assignment does not match the candidate set")
    table = table or composition_table()

    keys, offsets, n_labels, coef = [], [], [], []
    at = 0
    for k in candidates.event_candidates:
        c = [c_event * float(s) for s in scores.event_scores[k]]
        if loss_augment is not None:
            gold = int(loss_augment.events[k])
            c = [v + (0.0 if lab == gold else 1.0) for lab, v in enumerate(c)]
        keys.append(("e", k)), offsets.append(at), n_labels.append(2), coef.extend(c)
        at += 2
    for i, j in candidates.relation_candidates:
        c = [float(s) for s in scores.relation_scores[i, j]]
        if loss_augment is not None:
            gold = int(loss_augment.relations[i, j])
            c = [v + (0.0 if lab == gold else 1.0) for lab, v in enumerate(c)]
        keys.append(("r", i, j)), offsets.append(at), n_labels.append(7), coef.extend(c)
        at += 7

    inst = ILPInstance(candidates, keys, offsets, n_labels, np.array(coef))
    rows = inst.rows
    for o, n in zip(offsets, n_labels):
        rows.append(Row(RowKind.ONE_LABEL, tuple((o + lab, 1.0) for lab in range(n)), "==", 1.0))

    # filtered tokens leave the candidate space: NON_EVENT, and NONE on their pairs
    fixed = {k for k in fixed_non_events if ("e", k) in inst.key_index}
    for k in sorted(fixed):
        rows.append(Row(RowKind.FIXED, ((inst.var(("e", k), EVENT), 1.0),), "==", 0.0))
    for i, j in candidates.relation_candidates:
        if i in fixed or j in fixed:
            rows.append(Row(RowKind.FIXED, ((inst.var(("r", i, j), NONE), 1.0),), "==", 1.0))

    if consistency:
        for i, j in candidates.relation_candidates:
            none = inst.var(("r", i, j), NONE)
            # positive pair (1 - y_none) needs both endpoints to be events
            for k in (i, j):
                rows.append(Row(RowKind.CONSISTENCY, ((inst.var(("e", k), EVENT), 1.0), (none, 1.0)), ">=", 1.0))
            rows.append(
                Row(
                    RowKind.CONSISTENCY,
                    (
                        (inst.var(("e", i), NON_EVENT), 1.0),
                        (inst.var(("e", j), NON_EVENT), 1.0),
                        (none, -1.0),
                    ),
                    ">=",
                    0.0,
                )
            )

    if transitivity:
        for i, j, k in candidates.triples():
            for r1, r2 in itertools.product(POSITIVE_LABELS, repeat=2):
                coeffs = [(inst.var(("r", i, j), r1), 1.0), (inst.var(("r", j, k), r2), 1.0)]
                coeffs += [(inst.var(("r", i, k), r3), -1.0) for r3 in sorted(table[r1, r2])]
                rows.append(Row(RowKind.TRANSITIVITY, tuple(coeffs), "<=", 1.0))
    return inst


# ------------------------------------------------------------------ solver

_EPS = 1e-9


@functools.lru_cache(maxsize=None)
def _mask_labels(mask: int) -> tuple[int, ...]:
    return tuple(b for b in range(mask.bit_length()) if mask >> b & 1)


def _mask_table(values) -> list[float]:
    """max-over-mask lookup for one coefficient vector."""
    n = len(values)
    out = [-math.inf] * (1 << n)
    for mask in range(1, 1 << n):
        out[mask] = max(values[lab] for lab in _mask_labels(mask))
    return out


class _Problem:
    """Rows in <= form, keyed by interned coefficient vectors."""

    def __init__(self, inst: ILPInstance):
        var_key = np.repeat(np.arange(len(inst.keys)), inst.n_labels)
        var_lab = np.concatenate([np.arange(n) for n in inst.n_labels]) if inst.keys else np.zeros(0, int)
        self.n_keys = len(inst.keys)
        self.n_labels = list(inst.n_labels)
        self.obj = [
            tuple(float(x) for x in inst.objective[o : o + n]) for o, n in zip(inst.offsets, inst.n_labels)
        ]
        self.obj_max = [_mask_table(o) for o in self.obj]
        self._cid: dict[tuple, int] = {}
        self.coefs: list[tuple[float, ...]] = []
        self.cmin: list[list[float]] = []
        self.rows: list[tuple[tuple[tuple[int, int], ...], float]] = []
        trans: dict[tuple[int, int, int], dict] = {}
        for row in inst.rows:
            if row.kind is RowKind.ONE_LABEL:
                continue
            # transitivity blocks are handled per triple; anything irregular stays a row
            if row.kind is RowKind.TRANSITIVITY and self._note_triple(row, var_key, var_lab, trans):
                continue
            senses = {"<=": (1.0,), ">=": (-1.0,), "==": (1.0, -1.0)}[row.sense]
            for sign in senses:
                per_key: dict[int, list[float]] = {}
                for v, c in row.coeffs:
                    key = int(var_key[v])
                    per_key.setdefault(key, [0.0] * inst.n_labels[key])[int(var_lab[v])] += sign * c
                terms = tuple((k, self._intern(tuple(c))) for k, c in sorted(per_key.items()))
                self.rows.append((terms, sign * row.rhs))
        self.key_rows: list[list[int]] = [[] for _ in range(self.n_keys)]
        for r, (terms, _) in enumerate(self.rows):
            for k, _ in terms:
                self.key_rows[k].append(r)
        self._keep: dict[tuple[int, int, float], int] = {}
        self._setup_triples(trans)

    def _intern(self, c: tuple) -> int:
        cid = self._cid.get(c)
        if cid is None:
            cid = self._cid[c] = len(self.coefs)
            self.coefs.append(c)
            mins = [math.inf] * (1 << len(c))
            for mask in range(1, 1 << len(c)):
                mins[mask] = min(c[lab] for lab in _mask_labels(mask))
            self.cmin.append(mins)
        return cid

    @staticmethod
    def _note_triple(row, var_key, var_lab, trans) -> bool:
        # x_a[r1] + x_b[r2] - sum_{r3 in T} x_c[r3] <= 1
        if row.sense != "<=" or row.rhs != 1.0 or any(c not in (1.0, -1.0) for _, c in row.coeffs):
            return False
        plus = [(int(var_key[v]), int(var_lab[v])) for v, c in row.coeffs if c > 0]
        minus = [(int(var_key[v]), int(var_lab[v])) for v, c in row.coeffs if c < 0]
        if len(plus) != 2 or not minus:
            return False
        (a, r1), (b, r2) = plus
        keys_c = {k for k, _ in minus}
        if len(keys_c) > 1 or a == b or next(iter(keys_c)) in (a, b):
            return False
        c = keys_c.pop()
        block = trans.setdefault((a, b, c), {})
        if (r1, r2) in block:
            return False
        mask = 0
        for _, r3 in minus:
            mask |= 1 << r3
        block[r1, r2] = mask
        return True

    def _setup_triples(self, trans):
        # each pair's objective is shared evenly among the triples holding it;
        # the sum of per-triple maxima then bounds the coupled problem
        count: dict[int, int] = {}
        for abc in trans:
            for k in abc:
                count[k] = count.get(k, 0) + 1
        table_ids: dict[frozenset, int] = {}
        self.triples = []
        self.key_triples: list[list[int]] = [[] for _ in range(self.n_keys)]
        for (a, b, c), table in sorted(trans.items()):
            tid = table_ids.setdefault(frozenset(table.items()), len(table_ids))
            scaled = [tuple(x / count[k] for x in self.obj[k]) for k in (a, b, c)]
            for k in (a, b, c):
                self.key_triples[k].append(len(self.triples))
            self.triples.append((a, b, c, table, scaled[0], scaled[1], _mask_table(scaled[2]), tid))
        self.singles = [k for k in range(self.n_keys) if k not in count]
        self.single_pos = {k: n for n, k in enumerate(self.singles)}
        self._tcache: dict = {}
        self._rcache: dict = {}

    def _revise(self, t: int, ma: int, mb: int, mc: int) -> tuple[int, int, int]:
        """Labels of each pair that take part in some triple-consistent combination."""
        a, b, c, table, *_, tid = self.triples[t]
        key = (tid, ma, mb, mc)
        out = self._rcache.get(key)
        if out is None:
            full = (1 << self.n_labels[c]) - 1
            na = nb = nc = 0
            for r1 in _mask_labels(ma):
                for r2 in _mask_labels(mb):
                    allowed = mc & table.get((r1, r2), full)
                    if allowed:
                        na |= 1 << r1
                        nb |= 1 << r2
                        nc |= allowed
            out = self._rcache[key] = (na, nb, nc)
        return out

    def keep_mask(self, cid: int, mask: int, slack: float) -> int:
        key = (cid, mask, slack)
        out = self._keep.get(key)
        if out is None:
            c = self.coefs[cid]
            out = 0
            for lab in _mask_labels(mask):
                if c[lab] <= slack + _EPS:
                    out |= 1 << lab
            self._keep[key] = out
        return out

    def propagate(self, dom: list[int], keys: Iterable[int] | None = None, changed_keys: set | None = None) -> bool:
        """Propagate rows and triples to a fixpoint; False if something cannot hold.

        ``keys`` lists keys whose domains just changed (None means all);
        keys narrowed here are added to ``changed_keys``.
        """
        rows, cmin, key_rows, key_triples = self.rows, self.cmin, self.key_rows, self.key_triples
        triples = self.triples
        if keys is None:
            keys = range(self.n_keys)
            pending = list(range(len(rows)))
            tpending = list(range(len(triples)))
        else:
            pending = [r for k in keys for r in key_rows[k]]
            tpending = [t for k in keys for t in key_triples[k]]
        queued = set(pending)
        tqueued = set(tpending)

        def changed(k, skip_row=-1, skip_triple=-1):
            if changed_keys is not None:
                changed_keys.add(k)
            for r2 in key_rows[k]:
                if r2 != skip_row and r2 not in queued:
                    queued.add(r2)
                    pending.append(r2)
            for t2 in key_triples[k]:
                if t2 != skip_triple and t2 not in tqueued:
                    tqueued.add(t2)
                    tpending.append(t2)

        while pending or tpending:
            if pending:
                r = pending.pop()
                queued.discard(r)
                terms, rhs = rows[r]
                total = 0.0
                for k, cid in terms:
                    total += cmin[cid][dom[k]]
                if total > rhs + _EPS:
                    return False
                for k, cid in terms:
                    mask = dom[k]
                    if mask & (mask - 1) == 0:
                        continue
                    m = cmin[cid][mask]
                    keep = self.keep_mask(cid, mask, rhs - (total - m))
                    if keep != mask:
                        if not keep:
                            return False
                        dom[k] = keep
                        total += cmin[cid][keep] - m
                        changed(k, skip_row=r)
                continue
            t = tpending.pop()
            tqueued.discard(t)
            a, b, c = triples[t][:3]
            new = self._revise(t, dom[a], dom[b], dom[c])
            for k, m in zip((a, b, c), new):
                if m != dom[k]:
                    if not m:
                        return False
                    dom[k] = m
                    changed(k, skip_triple=t)
        return True

    def _triple_max(self, t: int, ma: int, mb: int, mc: int) -> float:
        key = (t, ma, mb, mc)
        out = self._tcache.get(key)
        if out is None:
            a, b, c, table, oa, ob, omc, _ = self.triples[t]
            full = (1 << self.n_labels[c]) - 1
            out = -math.inf
            for r1 in _mask_labels(ma):
                for r2 in _mask_labels(mb):
                    allowed = mc & table.get((r1, r2), full)
                    if allowed:
                        v = oa[r1] + ob[r2] + omc[allowed]
                        if v > out:
                            out = v
            self._tcache[key] = out
        return out

    def bound_terms(self, dom: list[int]) -> list[float]:
        """Per-triple maxima followed by per-key maxima of keys outside any triple."""
        tm = self._triple_max
        vals = [tm(t, dom[tri[0]], dom[tri[1]], dom[tri[2]]) for t, tri in enumerate(self.triples)]
        vals += [self.obj_max[k][dom[k]] for k in self.singles]
        return vals

    def update_bound(self, dom: list[int], vals: list[float], changed: Iterable[int]) -> list[float]:
        vals = list(vals)
        tm, triples, nt = self._triple_max, self.triples, len(self.triples)
        for k in changed:
            for t in self.key_triples[k]:
                tri = triples[t]
                vals[t] = tm(t, dom[tri[0]], dom[tri[1]], dom[tri[2]])
            pos = self.single_pos.get(k)
            if pos is not None:
                vals[nt + pos] = self.obj_max[k][dom[k]]
        return vals

    def bound(self, dom: list[int]) -> float:
        return sum(self.bound_terms(dom))

    def leaf_value(self, dom: list[int]) -> tuple[float, list[int]]:
        labels = [d.bit_length() - 1 for d in dom]
        return math.fsum(o[lab] for o, lab in zip(self.obj, labels)), labels


def _best_value(prob: _Problem, root: list[int]) -> tuple[float, list[int] | None]:
    """Optimal objective and one labeling reaching it.

    Branches on the key whose best open label leads most clearly; labels are
    tried best first.
    """
    best, best_labels = -math.inf, None
    regret: dict[tuple[int, int], float] = {}

    def gap(k, d):
        g = regret.get((k, d))
        if g is None:
            top = sorted((prob.obj[k][lab] for lab in _mask_labels(d)), reverse=True)
            g = regret[k, d] = top[0] - top[1]
        return g

    def pick(dom):
        choice, score = -1, -1.0
        for k in range(prob.n_keys):
            d = dom[k]
            if d & (d - 1):
                g = gap(k, d)
                if g > score:
                    choice, score = k, g
        return choice

    def search(dom, vals):
        nonlocal best, best_labels
        k = pick(dom)
        if k < 0:
            val, labels = prob.leaf_value(dom)
            if val > best:
                best, best_labels = val, labels
            return
        o = prob.obj[k]
        for lab in sorted(_mask_labels(dom[k]), key=lambda x: -o[x]):
            child = list(dom)
            child[k] = 1 << lab
            changed = {k}
            if not prob.propagate(child, (k,), changed):
                continue
            child_vals = prob.update_bound(child, vals, changed)
            if sum(child_vals) <= best + 1e-12 * (1.0 + abs(best)):
                continue
            search(child, child_vals)

    search(root, prob.bound_terms(root))
    return best, best_labels


def _first_at_value(prob: _Problem, root: list[int], target: float, known: list[int]) -> list[int]:
    """Lexicographically first feasible labeling whose objective reaches target.

    ``known`` is a labeling at the target, so nothing lexicographically
    after it needs a visit.
    """
    slack = 1e-9 * (1.0 + abs(target))

    def search(dom, vals, k, tight):
        # tight: every key before k carries the label it has in ``known``
        while k < prob.n_keys and dom[k] & (dom[k] - 1) == 0:
            if tight:
                lab = dom[k].bit_length() - 1
                if lab > known[k]:
                    return None
                tight = lab == known[k]
            k += 1
        if k == prob.n_keys:
            if tight:
                return list(known)
            val, labels = prob.leaf_value(dom)
            return labels if val >= target else None
        for lab in _mask_labels(dom[k]):
            if tight and lab > known[k]:
                break
            child = list(dom)
            child[k] = 1 << lab
            changed = {k}
            if not prob.propagate(child, (k,), changed):
                continue
            child_vals = prob.update_bound(child, vals, changed)
            if sum(child_vals) < target - slack:
                continue
            found = search(child, child_vals, k + 1, tight and lab == known[k])
            if found is not None:
                return found
        return None

    found = search(root, prob.bound_terms(root), 0, True)
    return known if found is None else found


def solve_exact(inst: ILPInstance) -> JointAssignment:
    """Exact MAP by branch and bound.

    A first search finds the optimal objective value; a second, pruned at
    that value, walks keys in order (events, then pairs) and labels in
    enumeration order, so among tied optima the lexicographically smallest
    label vector wins.
    """
    prob = _Problem(inst)
    root = [(1 << n) - 1 for n in inst.n_labels]
    if not prob.propagate(root):
        raise ContractViolation("infeasible instance")
    if not inst.keys:
        return JointAssignment()
    target, known = _best_value(prob, root)
    return inst.labels_to_assignment(_first_at_value(prob, root, target, known))


def _fixed_domains(inst: ILPInstance) -> list[list[int]]:
    """Labels left open per key by the FIXED rows."""
    var_key = np.repeat(np.arange(len(inst.keys)), inst.n_labels)
    open_ = [list(range(n)) for n in inst.n_labels]
    for row in inst.rows:
        if row.kind is not RowKind.FIXED:
            continue
        ((v, _),) = row.coeffs
        key = int(var_key[v])
        lab = v - inst.offsets[key]
        open_[key] = [lab] if row.rhs == 1.0 else [x for x in open_[key] if x != lab]
    return open_


def solve_local(inst_or_scores, candidates: CandidateSet | None = None) -> JointAssignment:
    """Per-key argmax with no global constraints (the no-structure baseline).

    Given an ILPInstance, labels excluded by its FIXED rows stay excluded.
    """
    if isinstance(inst_or_scores, ILPInstance):
        inst = inst_or_scores
        labels = []
        for o, allowed in zip(inst.offsets, _fixed_domains(inst)):
            labels.append(max(allowed, key=lambda lab: (inst.objective[o + lab], -lab)))
        return inst.labels_to_assignment(labels)
    scores = inst_or_scores
    return JointAssignment(
        {k: EventLabel(int(np.argmax(scores.event_scores[k]))) for k in candidates.event_candidates},
        {p: RelationLabel(int(np.argmax(scores.relation_scores[p]))) for p in candidates.relation_candidates},
    )


# ----------------------------------------------------------------- validity


@dataclass(frozen=True)
class Violation:
    kind: RowKind
    keys: tuple
    detail: str


def check_validity(
    assignment: JointAssignment,
    table: CompositionTable | None = None,
    candidates: CandidateSet | None = None,
) -> list[Violation]:
    table = table or composition_table()
    out = []
    ev, rel = assignment.events, assignment.relations
    if candidates is not None and not assignment.matches(candidates):
        out.append(Violation(RowKind.ONE_LABEL, (), "assignment keys differ from the candidate set"))
    for (i, j), r in sorted(rel.items()):
        if i not in ev or j not in ev:
            out.append(Violation(RowKind.ONE_LABEL, ((i, j),), "pair endpoint carries no event label"))
            continue
        both = ev[i] is EventLabel.EVENT and ev[j] is EventLabel.EVENT
        if r.positive and not both:
            out.append(Violation(RowKind.CONSISTENCY, (i, j), f"{r.name} on a non-event endpoint"))
        elif not r.positive and both:
            out.append(Violation(RowKind.CONSISTENCY, (i, j), "two events labelled NONE"))
    succ: dict[int, list[int]] = {}
    for i, j in rel:
        succ.setdefault(i, []).append(j)
    for i in sorted(succ):
        for j in sorted(succ[i]):
            for k in sorted(succ.get(j, ())):
                if (i, k) not in rel:
                    continue
                r1, r2, r3 = rel[i, j], rel[j, k], rel[i, k]
                if r1.positive and r2.positive and r3.positive and r3 not in table[r1, r2]:
                    out.append(
                        Violation(
                            RowKind.TRANSITIVITY,
                            ((i, j), (j, k), (i, k)),
                            f"{r3.name} not in Trans({r1.name}, {r2.name})",
                        )
                    )
    return out


# -------------------------------------------------------------- brute force

MAX_BRUTE_EVENTS = 5
MAX_BRUTE_PAIRS = 8


class SizeGuardError(ContractViolation):
    pass


def assignment_objective(
    scores: ScoreTable,
    assignment: JointAssignment,
    c_event: float = 1.0,
    gold: JointAssignment | None = None,
) -> float:
    terms = []
    for k, lab in assignment.events.items():
        t = c_event * float(scores.event_scores[k][int(lab)])
        if gold is not None and gold.events[k] != lab:
            t += 1.0
        terms.append(t)
    for p, lab in assignment.relations.items():
        t = float(scores.relation_scores[p][int(lab)])
        if gold is not None and gold.relations[p] != lab:
            t += 1.0
        terms.append(t)
    return math.fsum(terms)


def brute_force_map(
    scores: ScoreTable,
    candidates: CandidateSet,
    c_event: float = 1.0,
    loss_augment: JointAssignment | None = None,
    table: CompositionTable | None = None,
) -> JointAssignment:
    """Exhaustive MAP over all labelings of a small candidate set.

    Pair labelings are enumerated per event labeling. Labels that break
    event-relation consistency on their own pair are skipped up front; every
    surviving winner is still confirmed by :func:`check_validity`.
    """
    E, P = list(candidates.event_candidates), list(candidates.relation_candidates)
    if len(E) > MAX_BRUTE_EVENTS or len(P) > MAX_BRUTE_PAIRS:
        raise SizeGuardError(f"brute force refuses {len(E)} events / {len(P)} pairs")
    table = table or composition_table()
    allowed = table.allowed
    pos_of = {k: n for n, k in enumerate(E)}
    ev = np.array([[c_event * float(s) for s in scores.event_scores[k]] for k in E]).reshape(len(E), 2)
    rel = np.array([[float(s) for s in scores.relation_scores[p]] for p in P]).reshape(len(P), 7)
    if loss_augment is not None:
        for n, k in enumerate(E):
            ev[n] += [0.0 if lab == loss_augment.events[k] else 1.0 for lab in range(2)]
        for n, p in enumerate(P):
            rel[n] += [0.0 if lab == loss_augment.relations[p] else 1.0 for lab in range(7)]
    pidx = {p: n for n, p in enumerate(P)}
    triples = [(pidx[i, j], pidx[j, k], pidx[i, k]) for i, j, k in candidates.triples()]

    blocks = []  # (event labels, pair label matrix, approx objective), in lexicographic order
    for ev_labels in itertools.product((0, 1), repeat=len(E)):
        ev_val = sum(ev[n, lab] for n, lab in enumerate(ev_labels))
        domains = []
        for i, j in P:
            both = ev_labels[pos_of[i]] == EVENT and ev_labels[pos_of[j]] == EVENT
            domains.append(np.arange(6) if both else np.array([NONE]))
        if P:
            grids = np.meshgrid(*domains, indexing="ij")
            L = np.stack([g.ravel() for g in grids], axis=1)
            vals = rel[np.arange(len(P)), L].sum(axis=1) + ev_val
            ok = np.ones(len(L), dtype=bool)
            for a, b, c in triples:
                active = (L[:, a] != NONE) & (L[:, b] != NONE) & (L[:, c] != NONE)
                ok &= ~active | allowed[L[:, a], L[:, b], L[:, c]]
            L, vals = L[ok], vals[ok]
        else:
            L, vals = np.zeros((1, 0), dtype=int), np.array([ev_val])
        blocks.append((ev_labels, L, vals))

    order = []  # (approx value, global lexicographic rank, block, row)
    rank = 0
    for b, (_, L, vals) in enumerate(blocks):
        for row in range(len(vals)):
            order.append((-vals[row], rank, b, row))
            rank += 1
    order.sort()
    best_val, best_rank, best = -math.inf, None, None
    for neg, rank, b, row in order:
        if -neg < best_val - 1e-6:
            break
        ev_labels, L, _ = blocks[b]
        a = JointAssignment(dict(zip(E, ev_labels)), dict(zip(P, (int(x) for x in L[row]))))
        if check_validity(a, table):
            continue
        val = assignment_objective(scores, a, c_event, loss_augment)
        if val > best_val or (val == best_val and rank < best_rank):
            best_val, best_rank, best = val, rank, a
    return best if best is not None else JointAssignment()


# ------------------------------------------------------------ score files


def read_score_file(path) -> tuple[ScoreTable, CandidateSet]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0]) != 4 or lines[0][0] != "EVENTS" or lines[0][2] != "PAIRS":
        raise ContractViolation(f"{path}: header must be 'EVENTS n PAIRS m'")
    try:
        n, m = int(lines[0][1]), int(lines[0][3])
    except ValueError:
        raise ContractViolation(f"{path}: bad header counts") from None
    body = lines[1:]
    if len(body) != n + m:
        raise ContractViolation(f"{path}: expected {n + m} score lines, found {len(body)}")
    ev, rel = {}, {}
    try:
        for parts in body[:n]:
            if len(parts) != 3:
                raise ContractViolation(f"{path}: event line needs 'k s_nonevent s_event': {parts}")
            ev[int(parts[0])] = np.array([float(parts[1]), float(parts[2])])
        for parts in body[n:]:
            if len(parts) != 9:
                raise ContractViolation(f"{path}: pair line needs 'i j' and 7 scores: {parts}")
            i, j = int(parts[0]), int(parts[1])
            if not i < j or i not in ev or j not in ev:
                raise ContractViolation(f"{path}: pair ({i}, {j}) must satisfy i < j over listed events")
            rel[i, j] = np.array([float(x) for x in parts[2:]])
    except ValueError as exc:
        raise ContractViolation(f"{path}: {exc}") from None
    cands = CandidateSet(tuple(ev), tuple(rel))
    return ScoreTable(ev, rel), cands


def write_score_file(path, scores: ScoreTable, candidates: CandidateSet) -> None:
    out = [f"EVENTS {len(candidates.event_candidates)} PAIRS {len(candidates.relation_candidates)}"]
    for k in candidates.event_candidates:
        out.append(f"{k} " + " ".join(repr(float(x)) for x in scores.event_scores[k]))
    for i, j in candidates.relation_candidates:
        out.append(f"{i} {j} " + " ".join(repr(float(x)) for x in scores.relation_scores[i, j]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
