"""Corpus files, dataset statistics and a synthetic corpus generator."""

from __future__ import annotations

import json
import logging
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import interval_relation, inverse
from .core import ContractViolation, Document, RelationLabel, Token, generate_candidates
from .scoring import FileEmbeddings

log = logging.getLogger(__name__)

_DOC_FIELDS = ("doc_id", "tokens", "events", "relations")
_TOKEN_FIELDS = ("text", "pos", "sentence", "tense", "polarity")


class CorpusError(ContractViolation):
    pass


# ---------------------------------------------------------------- file format


def document_to_record(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "tokens": [
            {"text": t.text, "pos": t.pos, "sentence": t.sentence, "tense": t.tense, "polarity": t.polarity}
            for t in doc.tokens
        ],
        "events": sorted(doc.gold_events),
        "relations": [
            {"src": i, "tgt": j, "label": lab.name} for (i, j), lab in sorted(doc.gold_relations.items())
        ],
    }


def dumps_document(doc: Document) -> str:
    return json.dumps(document_to_record(doc), ensure_ascii=False)


def record_to_document(rec: dict, where: str = "") -> Document:
    if not isinstance(rec, dict):
        raise CorpusError(f"{where}record is not an object")
    extra = set(rec) - set(_DOC_FIELDS)
    if extra:
        warnings.warn(f"{where}ignoring unknown fields {sorted(extra)}", stacklevel=3)
    try:
        tokens = []
        for n, t in enumerate(rec["tokens"]):
            extra = set(t) - set(_TOKEN_FIELDS)
            if extra:
                warnings.warn(f"{where}token {n}: ignoring unknown fields {sorted(extra)}", stacklevel=3)
            tokens.append(
                Token(n, str(t["text"]), str(t["pos"]), int(t["sentence"]), str(t.get("tense", "")), str(t.get("polarity", "")))
            )
        relations = {}
        for r in rec.get("relations", []):
            i, j = int(r["src"]), int(r["tgt"])
            if (i, j) in relations:
                raise CorpusError(f"{where}duplicate relation ({i}, {j})")
            relations[i, j] = RelationLabel[r["label"]]
        doc = Document(str(rec["doc_id"]), tuple(tokens), frozenset(int(k) for k in rec.get("events", [])), relations)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ContractViolation):
            raise
        raise CorpusError(f"{where}malformed record: {exc!r}") from None
    try:
        doc.validate()
    except ContractViolation as exc:
        raise CorpusError(f"{where}{exc}") from None
    return doc


def loads_corpus(text: str, source: str = "<string>") -> list[Document]:
    docs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{source}:{lineno}: "
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{where}{exc.msg}") from None
        docs.append(record_to_document(rec, where))
    return docs


def load_corpus(path) -> list[Document]:
    return loads_corpus(Path(path).read_text(encoding="utf-8"), str(path))


def save_corpus(path, docs) -> None:
    Path(path).write_text("".join(dumps_document(d) + "\n" for d in docs), encoding="utf-8")


# TB-Dense uses single-letter codes, MATRES uses EQUAL for simultaneity.
LABEL_ALIASES = {
    "b": RelationLabel.BEFORE,
    "a": RelationLabel.AFTER,
    "i": RelationLabel.INCLUDES,
    "ii": RelationLabel.IS_INCLUDED,
    "s": RelationLabel.SIMULTANEOUS,
    "v": RelationLabel.VAGUE,
    "EQUAL": RelationLabel.SIMULTANEOUS,
    "IS_INCLUDED": RelationLabel.IS_INCLUDED,
    "INCLUDED": RelationLabel.IS_INCLUDED,
}


def normalize_label(label: str) -> RelationLabel:
    if label in LABEL_ALIASES:
        return LABEL_ALIASES[label]
    try:
        return RelationLabel[label.upper()]
    except KeyError:
        raise CorpusError(f"unknown relation label {label!r}") from None


def document_from_annotations(doc_id, tokens, events, relations) -> Document:
    """Build a Document from converter output.

    ``tokens`` is a sequence of (text, pos, sentence, tense, polarity),
    ``relations`` of (source token, target token, label string) in either
    direction; pairs with source > target are flipped with the inverse
    label. Tense and polarity strings are taken verbatim from the source
    dataset.
    """
    toks = tuple(Token(n, *t) for n, t in enumerate(tokens))
    rels = {}
    for i, j, lab in relations:
        r = normalize_label(lab)
        if i > j:
            i, j, r = j, i, inverse(r)
        rels[i, j] = r
    doc = Document(doc_id, toks, frozenset(events), rels)
    doc.validate()
    return doc


# ----------------------------------------------------------------- statistics


def corpus_stats(docs) -> dict:
    labels = Counter()
    n_events = 0
    for d in docs:
        n_events += len(d.gold_events)
        labels.update(lab.name for lab in d.gold_relations.values())
    return {
        "documents": len(docs),
        "events": n_events,
        "pairs": sum(labels.values()),
        "labels": {r.name: labels.get(r.name, 0) for r in RelationLabel},
    }


def dataset_stats(splits) -> dict:
    """Per-split document, pair and label counts.

    ``splits`` maps a split name to its documents; a bare list is one split
    named "all".
    """
    if not isinstance(splits, dict):
        splits = {"all": splits}
    return {name: corpus_stats(docs) for name, docs in splits.items()}


def format_stats(stats: dict) -> str:
    names = [r.name for r in RelationLabel]
    head = f"{'split':<10}{'docs':>6}{'events':>8}{'pairs':>8}" + "".join(f"{n[:6]:>8}" for n in names)
    lines = [head]
    for split, s in stats.items():
        lines.append(
            f"{split:<10}{s['documents']:>6}{s['events']:>8}{s['pairs']:>8}"
            + "".join(f"{s['labels'][n]:>8}" for n in names)
        )
    return "\n".join(lines)


# ------------------------------------------------------------------ synthetic


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    documents: int = 50
    sentences: int = 3
    tokens_per_sentence: int = 6
    event_rate: float = 0.35
    vague_rate: float = 0.15
    noise: float = 0.5
    dim: int = 16
    horizon: int = 12
    prefix: str = "synth"

    def __post_init__(self):
        for name in ("event_rate", "vague_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractViolation(f"{name} must lie in [0, 1], got {v}")
        if self.noise < 0 or self.horizon < 2 or self.dim < 12:
            raise ContractViolation("noise >= 0, horizon >= 2 and dim >= 12 required")


@dataclass
class SyntheticCorpus:
    documents: list
    embeddings: FileEmbeddings
    intervals: dict = field(default_factory=dict)  # (doc_id, token) -> (start, end)


_EVENT_POS = (("VB", 0.6), ("NN", 0.4))
_OTHER_POS = (("NN", 0.3), ("DT", 0.2), ("IN", 0.2), ("JJ", 0.15), ("VB", 0.15))
_TENSES = ("PAST", "PRESENT", "FUTURE")


def _choice(rng, table):
    names, probs = zip(*table)
    return names[rng.choice(len(names), p=np.array(probs))]


def _embed(rng, cfg: SynthConfig, is_event: bool, interval) -> np.ndarray:
    # 4 dims event signal, 4 start, 4 end, the rest distractors
    v = np.zeros(cfg.dim)
    if is_event:
        v[0:4] = 1.0
    s, e = interval
    v[4:8] = 2.0 * s / cfg.horizon
    v[8:12] = 2.0 * e / cfg.horizon
    return v + rng.normal(0.0, cfg.noise, cfg.dim)


def _random_interval(rng, horizon):
    s = int(rng.integers(0, horizon - 1))
    e = int(rng.integers(s + 1, min(s + 4, horizon - 1) + 1))
    return s, e


def _definite_interval(rng, horizon, placed):
    """An interval with a definite relation to every interval in ``placed``.

    Uniform over the admissible spans of length 1 to 4; when none is left,
    an existing interval is reused (a simultaneous pair).
    """
    spans = [
        (s, e)
        for s in range(horizon - 1)
        for e in range(s + 1, min(s + 4, horizon - 1) + 1)
        if all(interval_relation((s, e), q) is not None for q in placed)
    ]
    if spans:
        return spans[int(rng.integers(len(spans)))]
    return placed[int(rng.integers(len(placed)))]


def _relabel_vague(rng, labels: dict, rate: float) -> None:
    """Turn definite labels VAGUE where that keeps every triple transitive."""
    from .algebra import compose

    if rate <= 0:
        return
    pairs = sorted(labels)
    by_first: dict[int, list[int]] = {}
    for i, j in pairs:
        by_first.setdefault(i, []).append(j)
    for p in pairs:
        if labels[p] is RelationLabel.VAGUE or rng.random() >= rate:
            continue
        i, k = p
        ok = True
        for j in by_first.get(i, ()):
            if i < j < k and (j, k) in labels:
                allowed = compose(labels[i, j], labels[j, k])
                if RelationLabel.VAGUE not in allowed:
                    ok = False
                    break
        if ok:
            labels[p] = RelationLabel.VAGUE


def generate_synthetic(cfg: SynthConfig) -> SyntheticCorpus:
    """Documents whose gold temporal graphs come from planted intervals."""
    rng = np.random.default_rng(cfg.seed)
    docs, vectors, intervals = [], {}, {}
    for d in range(cfg.documents):
        doc_id = f"{cfg.prefix}-{cfg.seed}-{d:04d}"
        tokens, events, spans = [], set(), {}
        for s in range(cfg.sentences):
            for _ in range(cfg.tokens_per_sentence):
                k = len(tokens)
                is_event = bool(rng.random() < cfg.event_rate)
                if is_event:
                    span = _definite_interval(rng, cfg.horizon, list(spans.values()))
                    events.add(k)
                    spans[k] = span
                    intervals[doc_id, k] = span
                    pos = _choice(rng, _EVENT_POS)
                    third = min(2, 3 * span[0] // cfg.horizon)
                    tense = _TENSES[third] if rng.random() < 0.7 else _TENSES[int(rng.integers(3))]
                    polarity = "NEG" if rng.random() < 0.1 else "POS"
                else:
                    span = _random_interval(rng, cfg.horizon)
                    pos = _choice(rng, _OTHER_POS)
                    tense = polarity = ""
                tokens.append(Token(k, f"{'e' if is_event else 'w'}{int(rng.integers(50))}", pos, s, tense, polarity))
                vectors[doc_id, k] = _embed(rng, cfg, is_event, span)
        doc = Document(doc_id, tuple(tokens), frozenset(events))
        labels = {}
        for i, j in generate_candidates(doc).relation_candidates:
            if i in events and j in events:
                labels[i, j] = interval_relation(spans[i], spans[j])
        _relabel_vague(rng, labels, cfg.vague_rate)
        docs.append(Document(doc_id, doc.tokens, doc.gold_events, labels))
    log.debug("generated %d synthetic documents", len(docs))
    return SyntheticCorpus(docs, FileEmbeddings(cfg.dim, vectors), intervals)


# ------------------------------------------------------------ predictions


def prediction_record(doc_id: str, a) -> dict:
    """One predictions-file line: events as [k, label], relations as [i, j, label]."""
    return {
        "doc_id": doc_id,
        "events": [[k, lab.name] for k, lab in sorted(a.events.items())],
        "relations": [[i, j, lab.name] for (i, j), lab in sorted(a.relations.items())],
    }


def dumps_prediction(doc_id: str, a) -> str:
    return json.dumps(prediction_record(doc_id, a))


def loads_predictions(text: str, source: str = "<string>") -> dict:
    from .core import EventLabel, JointAssignment

    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        where = f"{source}:{lineno}: "
        try:
            rec = json.loads(line)
            doc_id = str(rec["doc_id"])
            events = {int(k): EventLabel[lab] for k, lab in rec.get("events", [])}
            relations = {(int(i), int(j)): RelationLabel[lab] for i, j, lab in rec.get("relations", [])}
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{where}{exc.msg}") from None
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{where}malformed prediction: {exc!r}") from None
        if doc_id in out:
            raise CorpusError(f"{where}duplicate prediction for {doc_id!r}")
        out[doc_id] = JointAssignment(events, relations)
    return out


def load_predictions(path) -> dict:
    return loads_predictions(Path(path).read_text(encoding="utf-8"), str(path))
