"""Confusion matrices and micro-averaged precision / recall / F1."""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .core import (
    POSITIVE_LABELS,
    CandidateSet,
    ContractViolation,
    Document,
    EventLabel,
    JointAssignment,
    RelationLabel,
    generate_candidates,
    gold_assignment,
)

R = RelationLabel

METRIC_PROFILES = {
    "exclude-none": frozenset({R.NONE}),
    "exclude-none-vague": frozenset({R.NONE, R.VAGUE}),
}


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    undefined: bool = False


class ConfusionMatrix:
    """Gold-by-predicted counts; rows are gold labels."""

    def __init__(self, relations=None, events=None):
        self.relations = np.zeros((7, 7), dtype=np.int64) if relations is None else np.array(relations, dtype=np.int64)
        self.events = np.zeros((2, 2), dtype=np.int64) if events is None else np.array(events, dtype=np.int64)

    def add(self, gold: JointAssignment, pred: JointAssignment) -> "ConfusionMatrix":
        if set(gold.events) != set(pred.events) or set(gold.relations) != set(pred.relations):
            raise ContractViolation("gold and predicted assignments cover different keys")
        for k, g in gold.events.items():
            self.events[int(g), int(pred.events[k])] += 1
        for p, g in gold.relations.items():
            self.relations[int(g), int(pred.relations[p])] += 1
        return self

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.relations + other.relations, self.events + other.events)

    def __eq__(self, other):
        return (
            isinstance(other, ConfusionMatrix)
            and np.array_equal(self.relations, other.relations)
            and np.array_equal(self.events, other.events)
        )

    def total(self) -> int:
        return int(self.relations.sum())


def accumulate(gold: JointAssignment, pred: JointAssignment, cm: ConfusionMatrix | None = None) -> ConfusionMatrix:
    cm = ConfusionMatrix() if cm is None else ConfusionMatrix(cm.relations, cm.events)
    return cm.add(gold, pred)


def _prf(correct, s1, s2) -> PRF:
    undefined = s1 == 0 or s2 == 0
    p = correct / s1 if s1 else 0.0
    r = correct / s2 if s2 else 0.0
    if p + r == 0:
        return PRF(p, r, 0.0, True)
    return PRF(p, r, 2 * p * r / (p + r), undefined)


def micro_prf(cm: ConfusionMatrix, excluded=frozenset({R.NONE})) -> PRF:
    """Micro-average over the labels not in ``excluded``.

    S1 counts predictions outside the excluded set, S2 gold pairs outside
    it; correct counts diagonal cells of kept labels.
    """
    excluded = {R(x) for x in excluded}
    keep = [int(r) for r in R if r not in excluded]
    m = cm.relations
    s1 = int(m[:, keep].sum())
    s2 = int(m[keep, :].sum())
    correct = int(sum(m[k, k] for k in keep))
    return _prf(correct, s1, s2)


def event_prf(cm: ConfusionMatrix) -> PRF:
    e = int(EventLabel.EVENT)
    m = cm.events
    return _prf(int(m[e, e]), int(m[:, e].sum()), int(m[e, :].sum()))


def per_label_report(cm: ConfusionMatrix) -> dict:
    """P / R / F1 per positive label; None marks labels never predicted."""
    m = cm.relations
    out = {}
    for r in POSITIVE_LABELS:
        col, row, diag = int(m[:, r].sum()), int(m[r, :].sum()), int(m[r, r])
        out[r.name] = None if col == 0 else _prf(diag, col, row)
    return out


# ------------------------------------------------------------ document level


def evaluation_keys(doc: Document) -> CandidateSet:
    """Every token and every same/adjacent-sentence pair of the document."""
    return generate_candidates(doc, None)


def align(assignment: JointAssignment, keys: CandidateSet) -> JointAssignment:
    """Extend a prediction to ``keys``; unpredicted keys are NON_EVENT / NONE."""
    extra_e = set(assignment.events) - set(keys.event_candidates)
    extra_r = set(assignment.relations) - set(keys.relation_candidates)
    if extra_e or extra_r:
        raise ContractViolation(f"prediction has keys outside the document: {sorted(extra_e)[:3]} {sorted(extra_r)[:3]}")
    return JointAssignment(
        {k: assignment.events.get(k, EventLabel.NON_EVENT) for k in keys.event_candidates},
        {p: assignment.relations.get(p, R.NONE) for p in keys.relation_candidates},
    )


def evaluate_corpus(docs, predictions) -> ConfusionMatrix:
    """End-to-end confusion over all tokens and adjacent pairs.

    ``predictions`` maps doc_id to a JointAssignment (missing documents count
    as predicting nothing).
    """
    cm = ConfusionMatrix()
    for doc in docs:
        keys = evaluation_keys(doc)
        gold = gold_assignment(doc, keys)
        cm.add(gold, align(predictions.get(doc.doc_id, JointAssignment()), keys))
    return cm


def build_report(cm: ConfusionMatrix, metric: str = "exclude-none") -> dict:
    rel = micro_prf(cm, METRIC_PROFILES[metric])
    ev = event_prf(cm)
    return {
        "metric": metric,
        "event": ev._asdict(),
        "relation": rel._asdict(),
        "per_label": {k: (v._asdict() if v else None) for k, v in per_label_report(cm).items()},
        "confusion": cm.relations.tolist(),
        "event_confusion": cm.events.tolist(),
    }


def format_report(report: dict) -> str:
    def row(name, d):
        if d is None:
            return f"{name:<14}{'-':>8}{'-':>8}{'-':>8}"
        return f"{name:<14}{100 * d['precision']:>8.1f}{100 * d['recall']:>8.1f}{100 * d['f1']:>8.1f}"

    lines = [f"metric: {report['metric']}", f"{'':<14}{'P':>8}{'R':>8}{'F1':>8}"]
    lines.append(row("Event", report["event"]))
    lines.append(row("Relation", report["relation"]))
    lines.append("")
    for name, d in report["per_label"].items():
        lines.append(row(name, d))
    lines.append("")
    lines.append("confusion (rows gold, cols predicted): " + " ".join(r.name[:4] for r in R))
    for r, counts in zip(R, report["confusion"]):
        lines.append(f"{r.name:<14}" + "".join(f"{c:>6}" for c in counts))
    return "\n".join(lines)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
