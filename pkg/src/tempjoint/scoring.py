"""Feature extraction and local scorers for events and relation pairs."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import CandidateSet, ContractViolation, Document

# upper bounds of the token-distance buckets; the last bucket is open
DISTANCE_BUCKETS = (1, 2, 3, 4, 9)
N_EVENT_LABELS = 2
N_RELATION_LABELS = 7


def distance_bucket(d: int) -> int:
    d = abs(d)
    for b, upper in enumerate(DISTANCE_BUCKETS):
        if d <= upper:
            return b
    return len(DISTANCE_BUCKETS)


@dataclass(frozen=True)
class FeatureConfig:
    dim: int = 32
    window: int = 1
    pos_vocab: tuple[str, ...] = ()
    tense_vocab: tuple[str, ...] = ()
    polarity_vocab: tuple[str, ...] = ()

    @property
    def n_pos(self) -> int:
        return len(self.pos_vocab) + 1

    @property
    def event_dim(self) -> int:
        return 2 * self.dim + self.n_pos

    @property
    def relation_dim(self) -> int:
        n_tense = len(self.tense_vocab) + 1
        n_pol = len(self.polarity_vocab) + 1
        return 2 * self.event_dim + 1 + len(DISTANCE_BUCKETS) + 1 + n_tense**2 + n_pol**2

    @staticmethod
    def _index(vocab, value) -> int:
        # unseen values share the trailing slot
        try:
            return vocab.index(value)
        except ValueError:
            return len(vocab)

    @classmethod
    def fit(cls, corpus, dim: int = 32, window: int = 1) -> "FeatureConfig":
        pos, tense, pol = set(), set(), set()
        for doc in corpus:
            for t in doc.tokens:
                pos.add(t.pos)
                tense.add(t.tense)
                pol.add(t.polarity)
        return cls(dim, window, tuple(sorted(pos)), tuple(sorted(tense)), tuple(sorted(pol)))


# ---------------------------------------------------------------- embeddings


class FileEmbeddings:
    """Frozen per-token vectors keyed by (doc_id, token index)."""

    trainable = False

    def __init__(self, dim: int, vectors: Mapping[tuple[str, int], np.ndarray]):
        self.dim = dim
        self.vectors = dict(vectors)

    def matrix(self, doc: Document) -> np.ndarray:
        out = np.empty((len(doc.tokens), self.dim))
        for t in doc.tokens:
            try:
                out[t.index] = self.vectors[doc.doc_id, t.index]
            except KeyError:
                raise ContractViolation(f"no embedding for token {t.index} of {doc.doc_id}") from None
        return out

    @classmethod
    def load(cls, path) -> "FileEmbeddings":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if not header.startswith("D="):
                raise ContractViolation(f"{path}: first line must be D=<dim>, got {header!r}")
            dim = int(header[2:])
            vectors = {}
            for lineno, line in enumerate(fh, start=2):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != dim + 2:
                    raise ContractViolation(f"{path}:{lineno}: expected {dim} values")
                vectors[parts[0], int(parts[1])] = np.array([float(x) for x in parts[2:]])
        return cls(dim, vectors)

    def save(self, path) -> None:
        lines = [f"D={self.dim}\n"]
        for (doc_id, k), v in sorted(self.vectors.items()):
            lines.append(f"{doc_id} {k} " + " ".join(repr(float(x)) for x in v) + "\n")
        Path(path).write_text("".join(lines), encoding="utf-8")


class LookupEmbeddings:
    """Trainable word-string lookup; unknown words share one row."""

    trainable = True

    def __init__(self, vocab: tuple[str, ...], table: np.ndarray):
        self.vocab = tuple(vocab)
        self.index = {w: i for i, w in enumerate(self.vocab)}
        self.table = table
        self.dim = table.shape[1]

    @classmethod
    def create(cls, corpus, dim: int = 32, rng: np.random.Generator | None = None) -> "LookupEmbeddings":
        rng = rng or np.random.default_rng(0)
        vocab = sorted({t.text.lower() for doc in corpus for t in doc.tokens})
        table = rng.uniform(-0.1, 0.1, size=(len(vocab) + 1, dim))
        return cls(tuple(vocab), table)

    def rows(self, doc: Document) -> np.ndarray:
        unk = len(self.vocab)
        return np.array([self.index.get(t.text.lower(), unk) for t in doc.tokens], dtype=int)

    def matrix(self, doc: Document) -> np.ndarray:
        return self.table[self.rows(doc)]

    def copy(self) -> "LookupEmbeddings":
        return LookupEmbeddings(self.vocab, self.table.copy())


# ------------------------------------------------------------------ features


def _context_means(emb: np.ndarray, window: int) -> np.ndarray:
    n, d = emb.shape
    out = np.zeros((n, d))
    if window == 0 or n == 0:
        return out
    padded = np.vstack([np.zeros((window, d)), emb, np.zeros((window, d))])
    for o in range(1, window + 1):
        out += padded[window - o : window - o + n] + padded[window + o : window + o + n]
    return out / (2 * window)


def event_feature_matrix(doc: Document, emb: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Event features for every token: embedding, context mean, POS one-hot."""
    n = len(doc.tokens)
    pos = np.zeros((n, config.n_pos))
    for t in doc.tokens:
        pos[t.index, config._index(config.pos_vocab, t.pos)] = 1.0
    return np.hstack([emb, _context_means(emb, config.window), pos])


def relation_feature_matrix(
    doc: Document, pairs, event_feats: np.ndarray, config: FeatureConfig
) -> np.ndarray:
    n_tense = len(config.tense_vocab) + 1
    n_pol = len(config.polarity_vocab) + 1
    m = len(pairs)
    if m == 0:
        return np.zeros((0, config.relation_dim))
    ii = np.array([p[0] for p in pairs])
    jj = np.array([p[1] for p in pairs])
    dist = (jj - ii).astype(float)[:, None]
    buckets = np.zeros((m, len(DISTANCE_BUCKETS) + 1))
    tense = np.zeros((m, n_tense**2))
    pol = np.zeros((m, n_pol**2))
    toks = doc.tokens
    for r, (i, j) in enumerate(pairs):
        buckets[r, distance_bucket(j - i)] = 1.0
        ti = config._index(config.tense_vocab, toks[i].tense)
        tj = config._index(config.tense_vocab, toks[j].tense)
        tense[r, ti * n_tense + tj] = 1.0
        qi = config._index(config.polarity_vocab, toks[i].polarity)
        qj = config._index(config.polarity_vocab, toks[j].polarity)
        pol[r, qi * n_pol + qj] = 1.0
    return np.hstack([event_feats[ii], event_feats[jj], dist, buckets, tense, pol])


def extract_event_features(doc: Document, k: int, config: FeatureConfig, embeddings) -> np.ndarray:
    if not 0 <= k < len(doc.tokens):
        raise ContractViolation(f"token {k} out of range")
    return event_feature_matrix(doc, embeddings.matrix(doc), config)[k]


def extract_relation_features(doc: Document, i: int, j: int, config: FeatureConfig, embeddings) -> np.ndarray:
    if not 0 <= i < j < len(doc.tokens):
        raise ContractViolation(f"bad pair ({i}, {j})")
    feats = event_feature_matrix(doc, embeddings.matrix(doc), config)
    return relation_feature_matrix(doc, [(i, j)], feats, config)[0]


def event_feature_grad_to_embeddings(grad: np.ndarray, config: FeatureConfig) -> np.ndarray:
    """Pull a (n_tokens, event_dim) feature gradient back to (n_tokens, dim)."""
    d, w = config.dim, config.window
    n = grad.shape[0]
    out = grad[:, :d].copy()
    if w and n:
        g = grad[:, d : 2 * d] / (2 * w)
        for o in range(1, w + 1):
            # token t feeds the context of t+o and t-o
            out[o:] += g[: n - o] if o < n else 0
            out[: n - o] += g[o:] if o < n else 0
    return out


def relation_feature_grad_to_events(grad: np.ndarray, pairs, n_tokens: int, config: FeatureConfig) -> np.ndarray:
    ed = config.event_dim
    out = np.zeros((n_tokens, ed))
    if len(pairs):
        ii = np.array([p[0] for p in pairs])
        jj = np.array([p[1] for p in pairs])
        np.add.at(out, ii, grad[:, :ed])
        np.add.at(out, jj, grad[:, ed : 2 * ed])
    return out


# ------------------------------------------------------------------- scorers


class _Scorer:
    names: tuple[str, ...] = ()

    def params(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in self.names]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def flatten(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def unflatten(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.n_params:
            raise ContractViolation(f"expected {self.n_params} parameters, got {flat.size}")
        at = 0
        for n in self.names:
            p = getattr(self, n)
            setattr(self, n, flat[at : at + p.size].reshape(p.shape).copy())
            at += p.size

    def _check(self, features):
        f = np.asarray(features, dtype=float)
        if f.shape[-1] != self.in_dim:
            raise ContractViolation(f"feature dimension {f.shape[-1]} != scorer input {self.in_dim}")
        return f

    def __call__(self, features):
        return self.score(features)


class LinearScorer(_Scorer):
    names = ("W", "b")

    def __init__(self, W: np.ndarray, b: np.ndarray):
        self.W = np.asarray(W, dtype=float)
        self.b = np.asarray(b, dtype=float)

    @classmethod
    def create(cls, in_dim, n_out, rng=None, scale=0.1):
        rng = rng or np.random.default_rng(0)
        return cls(rng.uniform(-scale, scale, (n_out, in_dim)), np.zeros(n_out))

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def n_out(self):
        return self.W.shape[0]

    def score(self, features):
        f = self._check(features)
        return f @ self.W.T + self.b

    def gradient(self, features, upstream):
        """Return (flat parameter gradient, feature gradient) for upstream dL/dscore."""
        f = self._check(features)
        g = np.asarray(upstream, dtype=float)
        if g.shape[-1] != self.n_out or g.shape[:-1] != f.shape[:-1]:
            raise ContractViolation(f"upstream shape {g.shape} does not match scores")
        f2, g2 = np.atleast_2d(f), np.atleast_2d(g)
        dW = g2.T @ f2
        db = g2.sum(axis=0)
        return np.concatenate([dW.ravel(), db]), g @ self.W

    def copy(self):
        return LinearScorer(self.W.copy(), self.b.copy())


class MLPScorer(_Scorer):
    """One tanh hidden layer: W2 tanh(W1 f + b1) + b2."""

    names = ("W1", "b1", "W2", "b2")

    def __init__(self, W1, b1, W2, b2):
        self.W1 = np.asarray(W1, dtype=float)
        self.b1 = np.asarray(b1, dtype=float)
        self.W2 = np.asarray(W2, dtype=float)
        self.b2 = np.asarray(b2, dtype=float)

    @classmethod
    def create(cls, in_dim, n_out, hidden=32, rng=None):
        rng = rng or np.random.default_rng(0)
        s1 = 1.0 / np.sqrt(in_dim)
        s2 = 1.0 / np.sqrt(hidden)
        return cls(
            rng.uniform(-s1, s1, (hidden, in_dim)),
            np.zeros(hidden),
            rng.uniform(-s2, s2, (n_out, hidden)),
            np.zeros(n_out),
        )

    @property
    def in_dim(self):
        return self.W1.shape[1]

    @property
    def n_out(self):
        return self.W2.shape[0]

    def score(self, features):
        f = self._check(features)
        return np.tanh(f @ self.W1.T + self.b1) @ self.W2.T + self.b2

    def gradient(self, features, upstream):
        f = self._check(features)
        g = np.asarray(upstream, dtype=float)
        if g.shape[-1] != self.n_out or g.shape[:-1] != f.shape[:-1]:
            raise ContractViolation(f"upstream shape {g.shape} does not match scores")
        f2, g2 = np.atleast_2d(f), np.atleast_2d(g)
        h = np.tanh(f2 @ self.W1.T + self.b1)
        dW2 = g2.T @ h
        db2 = g2.sum(axis=0)
        dz = (g2 @ self.W2) * (1.0 - h**2)
        dW1 = dz.T @ f2
        db1 = dz.sum(axis=0)
        df = dz @ self.W1
        if f.ndim == 1:
            df = df[0]
        return np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2]), df

    def copy(self):
        return MLPScorer(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())


def score(scorer, features) -> np.ndarray:
    return scorer.score(features)


def gradient(scorer, features, upstream):
    return scorer.gradient(features, upstream)


# ----------------------------------------------------------------- encoding


class Encoder:
    """Embedding tables read by the event and relation scorers.

    With ``shared`` both paths read the same table object, so an update
    through one path is visible to the other.
    """

    def __init__(self, config: FeatureConfig, event_embeddings, relation_embeddings=None):
        self.config = config
        self.event_embeddings = event_embeddings
        self.relation_embeddings = event_embeddings if relation_embeddings is None else relation_embeddings
        if self.event_embeddings.dim != config.dim or self.relation_embeddings.dim != config.dim:
            raise ContractViolation("embedding dimension does not match feature config")

    @classmethod
    def create(cls, config: FeatureConfig, embeddings, shared: bool = True) -> "Encoder":
        if shared or not embeddings.trainable:
            return cls(config, embeddings)
        return cls(config, embeddings, embeddings.copy())

    @property
    def shared(self) -> bool:
        return self.event_embeddings is self.relation_embeddings

    @property
    def trainable(self) -> bool:
        return self.event_embeddings.trainable

    def tables(self) -> list:
        if not self.trainable:
            return []
        return [self.event_embeddings] if self.shared else [self.event_embeddings, self.relation_embeddings]

    def encode(self, doc: Document, candidates: CandidateSet) -> "EncodedDoc":
        cfg = self.config
        ev_all = event_feature_matrix(doc, self.event_embeddings.matrix(doc), cfg)
        if self.shared:
            rel_src = ev_all
        else:
            rel_src = event_feature_matrix(doc, self.relation_embeddings.matrix(doc), cfg)
        ev_idx = np.array(candidates.event_candidates, dtype=int)
        return EncodedDoc(
            event_features=ev_all[ev_idx] if len(ev_idx) else np.zeros((0, cfg.event_dim)),
            relation_features=relation_feature_matrix(doc, candidates.relation_candidates, rel_src, cfg),
        )

    def backprop(self, doc: Document, candidates: CandidateSet, d_event: np.ndarray, d_relation: np.ndarray):
        """Embedding-table gradients as a list aligned with ``tables()``."""
        if not self.trainable:
            return []
        cfg = self.config
        n = len(doc.tokens)
        g_ev = np.zeros((n, cfg.event_dim))
        if len(candidates.event_candidates):
            np.add.at(g_ev, np.array(candidates.event_candidates), d_event)
        g_rel = relation_feature_grad_to_events(d_relation, candidates.relation_candidates, n, cfg)
        grads = []
        if self.shared:
            pairs = [(self.event_embeddings, g_ev + g_rel)]
        else:
            pairs = [(self.event_embeddings, g_ev), (self.relation_embeddings, g_rel)]
        for table, g in pairs:
            token_grad = event_feature_grad_to_embeddings(g, cfg)
            full = np.zeros_like(table.table)
            np.add.at(full, table.rows(doc), token_grad)
            grads.append(full)
        return grads


@dataclass
class EncodedDoc:
    event_features: np.ndarray
    relation_features: np.ndarray


@dataclass
class ScoreTable:
    event_scores: dict = field(default_factory=dict)
    relation_scores: dict = field(default_factory=dict)

    @classmethod
    def from_arrays(cls, candidates: CandidateSet, ev: np.ndarray, rel: np.ndarray) -> "ScoreTable":
        return cls(
            {k: ev[n] for n, k in enumerate(candidates.event_candidates)},
            {p: rel[n] for n, p in enumerate(candidates.relation_candidates)},
        )

    def covers(self, candidates: CandidateSet) -> bool:
        return set(self.event_scores) == set(candidates.event_candidates) and set(
            self.relation_scores
        ) == set(candidates.relation_candidates)


def build_score_table(
    doc: Document, candidates: CandidateSet, event_scorer, relation_scorer, encoder: Encoder
) -> ScoreTable:
    enc = encoder.encode(doc, candidates)
    ev = event_scorer.score(enc.event_features) if len(enc.event_features) else np.zeros((0, 2))
    rel = relation_scorer.score(enc.relation_features) if len(enc.relation_features) else np.zeros((0, 7))
    return ScoreTable.from_arrays(candidates, ev, rel)
