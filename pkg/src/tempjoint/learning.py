"""Two-stage training: cross-entropy pipeline, then SSVM with loss-augmented inference."""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    CandidateSet,
    ContractViolation,
    Document,
    EventLabel,
    JointAssignment,
    RelationLabel,
    generate_candidates,
    gold_assignment,
    hamming_distance,
)
from .inference import build_ilp, solve_exact, solve_local
from .scoring import (
    Encoder,
    EncodedDoc,
    FeatureConfig,
    FileEmbeddings,
    LinearScorer,
    LookupEmbeddings,
    MLPScorer,
    ScoreTable,
    event_feature_matrix,
    relation_feature_matrix,
)

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "tempjoint-checkpoint"
CHECKPOINT_VERSION = 1
MODES = ("single", "multi", "pipeline", "structured")


@dataclass(frozen=True)
class TrainConfig:
    c: float = 1.0
    c_event: float = 1.0
    class_weights: dict = field(default_factory=dict)  # label name -> weight, default 1
    event_weight: float = 1.0
    t_event: float = 0.5
    gold_epochs: int = 2
    total_epochs: int = 8
    stage2_epochs: int = 3
    learning_rate: float = 0.05
    ssvm_learning_rate: float = 0.01
    decay: float = 0.5
    decay_every: int = 4
    momentum: float = 0.5
    l2: float = 1e-5
    seed: int = 0
    scorer: str = "mlp"
    hidden: int = 32
    window: int = 1
    dim: int = 32
    shared_encoder: bool = True
    dropout: float = 0.0  # accepted for config compatibility; no effect

    def __post_init__(self):
        for name in ("learning_rate", "ssvm_learning_rate", "decay", "event_weight"):
            if getattr(self, name) <= 0:
                raise ContractViolation(f"{name} must be positive")
        if not 0.0 <= self.t_event <= 1.0:
            raise ContractViolation("t_event must lie in [0, 1]")
        if not 0.0 <= self.momentum < 1.0:
            raise ContractViolation("momentum must lie in [0, 1)")
        if self.scorer not in ("mlp", "linear"):
            raise ContractViolation(f"unknown scorer {self.scorer!r}")
        for k, v in self.class_weights.items():
            RelationLabel[k]
            if v <= 0:
                raise ContractViolation("class weights must be positive")

    def class_weight(self, label) -> float:
        return float(self.class_weights.get(RelationLabel(label).name, 1.0))

    def lr_at(self, epoch: int, base: float) -> float:
        return base * self.decay ** (epoch // max(1, self.decay_every))


def mode_config(config: TrainConfig, mode: str) -> TrainConfig:
    """Adjust a config for one of the model variants."""
    if mode not in MODES:
        raise ContractViolation(f"unknown mode {mode!r}")
    if mode in ("single", "multi"):
        return dataclasses.replace(config, gold_epochs=config.total_epochs, shared_encoder=mode == "multi")
    return dataclasses.replace(config, shared_encoder=True)


# --------------------------------------------------------------------- model


class Model:
    def __init__(self, config: TrainConfig, features: FeatureConfig, pos_whitelist, encoder: Encoder, event_scorer, relation_scorer):
        self.config = config
        self.features = features
        self.pos_whitelist = tuple(sorted(pos_whitelist)) if pos_whitelist is not None else None
        self.encoder = encoder
        self.event_scorer = event_scorer
        self.relation_scorer = relation_scorer
        if event_scorer.in_dim != features.event_dim or relation_scorer.in_dim != features.relation_dim:
            raise ContractViolation("scorer dimensions disagree with the feature config")
        self._cache: dict = {}

    @classmethod
    def create(cls, corpus, config: TrainConfig, embeddings=None) -> "Model":
        rng = np.random.default_rng(config.seed)
        dim = embeddings.dim if embeddings is not None else config.dim
        features = FeatureConfig.fit(corpus, dim=dim, window=config.window)
        whitelist = {d.tokens[k].pos for d in corpus for k in d.gold_events}
        if embeddings is None:
            embeddings = LookupEmbeddings.create(corpus, dim, rng)
        encoder = Encoder.create(features, embeddings, shared=config.shared_encoder)
        if config.scorer == "mlp":
            ev = MLPScorer.create(features.event_dim, 2, config.hidden, rng)
            rel = MLPScorer.create(features.relation_dim, 7, config.hidden, rng)
        else:
            ev = LinearScorer.create(features.event_dim, 2, rng)
            rel = LinearScorer.create(features.relation_dim, 7, rng)
        return cls(config, features, whitelist, encoder, ev, rel)

    # parameters -----------------------------------------------------------

    def flatten(self) -> np.ndarray:
        parts = [self.event_scorer.flatten(), self.relation_scorer.flatten()]
        parts += [t.table.ravel() for t in self.encoder.tables()]
        return np.concatenate(parts)

    def unflatten(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=float)
        if flat.size != self.flatten().size:
            raise ContractViolation("parameter vector size mismatch")
        a = self.event_scorer.n_params
        b = a + self.relation_scorer.n_params
        self.event_scorer.unflatten(flat[:a])
        self.relation_scorer.unflatten(flat[a:b])
        for t in self.encoder.tables():
            t.table[...] = flat[b : b + t.table.size].reshape(t.table.shape)
            b += t.table.size
        self._cache.clear()

    # scoring --------------------------------------------------------------

    def candidates(self, doc: Document) -> CandidateSet:
        return generate_candidates(doc, self.pos_whitelist)

    def encode(self, doc: Document, cands: CandidateSet) -> EncodedDoc:
        if self.encoder.trainable:
            return self.encoder.encode(doc, cands)
        # frozen embeddings: features depend only on the document
        cached = self._cache.get(doc.doc_id)
        if cached is None or cached[0] is not doc:
            ev = event_feature_matrix(doc, self.encoder.event_embeddings.matrix(doc), self.features)
            cached = (doc, ev, {})
            self._cache[doc.doc_id] = cached
        _, ev, pair_rows = cached
        missing = [p for p in cands.relation_candidates if p not in pair_rows]
        if missing:
            mat = relation_feature_matrix(doc, missing, ev, self.features)
            pair_rows.update(zip(missing, mat))
        idx = np.array(cands.event_candidates, dtype=int)
        rel = (
            np.array([pair_rows[p] for p in cands.relation_candidates])
            if cands.relation_candidates
            else np.zeros((0, self.features.relation_dim))
        )
        return EncodedDoc(ev[idx] if len(idx) else np.zeros((0, self.features.event_dim)), rel)

    def raw_scores(self, enc: EncodedDoc):
        ev = self.event_scorer.score(enc.event_features) if len(enc.event_features) else np.zeros((0, 2))
        rel = self.relation_scorer.score(enc.relation_features) if len(enc.relation_features) else np.zeros((0, 7))
        return ev, rel

    def score_table(self, doc: Document, cands: CandidateSet | None = None) -> ScoreTable:
        cands = self.candidates(doc) if cands is None else cands
        ev, rel = self.raw_scores(self.encode(doc, cands))
        return ScoreTable.from_arrays(cands, ev, rel)

    def backprop(self, doc, cands, enc: EncodedDoc, g_ev: np.ndarray, g_rel: np.ndarray) -> np.ndarray:
        """Flat parameter gradient for upstream score gradients."""
        parts = []
        d_ev = np.zeros_like(enc.event_features)
        d_rel = np.zeros_like(enc.relation_features)
        if len(enc.event_features):
            pg, d_ev = self.event_scorer.gradient(enc.event_features, g_ev)
        else:
            pg = np.zeros(self.event_scorer.n_params)
        parts.append(pg)
        if len(enc.relation_features):
            pg, d_rel = self.relation_scorer.gradient(enc.relation_features, g_rel)
        else:
            pg = np.zeros(self.relation_scorer.n_params)
        parts.append(pg)
        parts += [g.ravel() for g in self.encoder.backprop(doc, cands, d_ev, d_rel)]
        return np.concatenate(parts)

    def regularized(self) -> np.ndarray:
        """Mask selecting trainable parameters (all of them in this model)."""
        return np.ones(self.flatten().size)


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def cross_entropy_loss(scores, gold: int, class_weight: float = 1.0) -> float:
    return -class_weight * float(log_softmax(np.asarray(scores, dtype=float))[int(gold)])


def _ce_batch(scores: np.ndarray, gold: np.ndarray, weights: np.ndarray):
    """Summed weighted cross entropy and its gradient w.r.t. the scores."""
    if len(gold) == 0:
        return 0.0, np.zeros_like(scores)
    ls = log_softmax(scores)
    rows = np.arange(len(gold))
    loss = float(-(weights * ls[rows, gold]).sum())
    g = np.exp(ls)
    g[rows, gold] -= 1.0
    return loss, g * weights[:, None]


class SGD:
    def __init__(self, momentum: float):
        self.momentum = momentum
        self.velocity: np.ndarray | None = None

    def step(self, model: Model, grad: np.ndarray, lr: float) -> None:
        if self.velocity is None:
            self.velocity = np.zeros_like(grad)
        self.velocity = self.momentum * self.velocity - lr * grad
        model.unflatten(model.flatten() + self.velocity)


# -------------------------------------------------------------------- stage 1


def event_probabilities(model: Model, ev_scores: np.ndarray) -> np.ndarray:
    return softmax(ev_scores)[:, int(EventLabel.EVENT)] if len(ev_scores) else np.zeros(0)


def relation_training_pairs(doc: Document, cands: CandidateSet, predicted_events=None) -> list:
    """(pair, label) examples for the relation scorer.

    With ``predicted_events=None`` pairs come from gold events; otherwise
    from predicted events, and pairs touching a predicted-but-not-gold
    event are labelled NONE.
    """
    out = []
    for p in cands.relation_candidates:
        i, j = p
        if predicted_events is None:
            if i in doc.gold_events and j in doc.gold_events and p in doc.gold_relations:
                out.append((p, doc.gold_relations[p]))
        elif i in predicted_events and j in predicted_events:
            if i in doc.gold_events and j in doc.gold_events:
                if p in doc.gold_relations:
                    out.append((p, doc.gold_relations[p]))
            else:
                out.append((p, RelationLabel.NONE))
    return out


def stage1_instance(model: Model, doc: Document, use_gold: bool):
    """Loss and flat gradient of the pipeline objective on one document."""
    cfg = model.config
    cands = model.candidates(doc)
    enc_ev = model.encode(doc, CandidateSet(cands.event_candidates, ()))
    ev_scores, _ = model.raw_scores(enc_ev)
    predicted = None
    if not use_gold:
        probs = event_probabilities(model, ev_scores)
        predicted = {k for k, p in zip(cands.event_candidates, probs) if p >= 0.5}
    pairs = relation_training_pairs(doc, cands, predicted)
    sub = CandidateSet(cands.event_candidates, tuple(p for p, _ in pairs))
    enc = model.encode(doc, sub)
    ev_scores, rel_scores = model.raw_scores(enc)

    ev_gold = np.array([int(k in doc.gold_events) for k in sub.event_candidates], dtype=int)
    n_ev = max(1, len(ev_gold))
    l_ev, g_ev = _ce_batch(ev_scores, ev_gold, np.full(len(ev_gold), cfg.event_weight / n_ev))
    rel_gold = np.array([int(lab) for _, lab in pairs], dtype=int)
    n_rel = max(1, len(rel_gold))
    w = np.array([cfg.class_weight(lab) / n_rel for _, lab in pairs])
    l_rel, g_rel = _ce_batch(rel_scores, rel_gold, w)
    grad = model.backprop(doc, sub, enc, g_ev, g_rel)
    return l_ev + l_rel, grad, pairs


def train_stage1(model: Model, corpus, config: TrainConfig | None = None):
    """Cross-entropy training of the local scorers; returns (model, per-epoch losses)."""
    if not corpus:
        raise ContractViolation("cannot train on an empty corpus")
    cfg = config or model.config
    model.config = cfg
    rng = np.random.default_rng(cfg.seed)
    opt = SGD(cfg.momentum)
    losses = []
    for epoch in range(cfg.total_epochs):
        lr = cfg.lr_at(epoch, cfg.learning_rate)
        total = 0.0
        for n in rng.permutation(len(corpus)):
            loss, grad, _ = stage1_instance(model, corpus[n], use_gold=epoch < cfg.gold_epochs)
            theta = model.flatten()
            loss += cfg.l2 * float(theta @ theta)
            grad = grad + 2.0 * cfg.l2 * theta
            opt.step(model, grad, lr)
            total += loss
        losses.append(total / len(corpus))
        log.info("stage1 epoch %d loss %.4f", epoch, losses[-1])
    return model, losses


# -------------------------------------------------------------------- stage 2


@dataclass
class SSVMResult:
    loss: float
    prediction: JointAssignment
    gold: JointAssignment
    candidates: CandidateSet
    margin: int


def _filtered(model: Model, cands: CandidateSet, ev_scores: np.ndarray, t_event: float) -> list[int]:
    probs = event_probabilities(model, ev_scores)
    return [k for k, p in zip(cands.event_candidates, probs) if p < t_event]


def ssvm_instance_loss(model: Model, doc: Document, config: TrainConfig | None = None) -> SSVMResult:
    """Normalized hinge (c/M) max(0, Delta + S_R diff + c_event S_E diff) at the most violating structure."""
    cfg = config or model.config
    cands = model.candidates(doc)
    enc = model.encode(doc, cands)
    ev, rel = model.raw_scores(enc)
    scores = ScoreTable.from_arrays(cands, ev, rel)
    gold = gold_assignment(doc, cands)
    fixed = _filtered(model, cands, ev, cfg.t_event)
    inst = build_ilp(scores, cands, cfg.c_event, loss_augment=gold, fixed_non_events=fixed)
    pred = solve_exact(inst)
    m = cands.size
    if m == 0:
        return SSVMResult(0.0, pred, gold, cands, 0)
    delta = hamming_distance(gold, pred)
    hinge = hinge_value(ev, rel, cands, pred, gold, cfg.c_event, delta)
    return SSVMResult(cfg.c / m * max(0.0, hinge), pred, gold, cands, delta)


def hinge_value(ev, rel, cands, pred, gold, c_event, delta) -> float:
    s_r = math.fsum(float(rel[n, int(pred.relations[p])]) - float(rel[n, int(gold.relations[p])]) for n, p in enumerate(cands.relation_candidates))
    s_e = math.fsum(float(ev[n, int(pred.events[k])]) - float(ev[n, int(gold.events[k])]) for n, k in enumerate(cands.event_candidates))
    return delta + s_r + c_event * s_e


def hinge_upstream(cands: CandidateSet, pred, gold, scale: float, c_event: float):
    """Score-space subgradient of the hinge for a fixed prediction."""
    g_ev = np.zeros((len(cands.event_candidates), 2))
    g_rel = np.zeros((len(cands.relation_candidates), 7))
    for n, k in enumerate(cands.event_candidates):
        g_ev[n, int(pred.events[k])] += scale * c_event
        g_ev[n, int(gold.events[k])] -= scale * c_event
    for n, p in enumerate(cands.relation_candidates):
        g_rel[n, int(pred.relations[p])] += scale
        g_rel[n, int(gold.relations[p])] -= scale
    return g_ev, g_rel


def ssvm_gradient(model: Model, doc: Document, result: SSVMResult, config: TrainConfig | None = None) -> np.ndarray:
    """Subgradient of the instance hinge (without regularizer) at a fixed prediction."""
    cfg = config or model.config
    n = model.flatten().size
    if result.loss <= 0.0 or result.candidates.size == 0:
        return np.zeros(n)
    cands = result.candidates
    enc = model.encode(doc, cands)
    g_ev, g_rel = hinge_upstream(cands, result.prediction, result.gold, cfg.c / cands.size, cfg.c_event)
    return model.backprop(doc, cands, enc, g_ev, g_rel)


def train_stage2(model: Model, corpus, config: TrainConfig | None = None):
    """Online subgradient descent on the SSVM objective; returns (model, per-epoch losses)."""
    if not corpus:
        raise ContractViolation("cannot train on an empty corpus")
    cfg = config or model.config
    model.config = cfg
    rng = np.random.default_rng(cfg.seed + 1)
    opt = SGD(cfg.momentum)
    losses = []
    for epoch in range(cfg.stage2_epochs):
        lr = cfg.lr_at(epoch, cfg.ssvm_learning_rate)
        total = 0.0
        for n in rng.permutation(len(corpus)):
            doc = corpus[n]
            res = ssvm_instance_loss(model, doc, cfg)
            theta = model.flatten()
            grad = ssvm_gradient(model, doc, res, cfg) + 2.0 * cfg.l2 * theta
            opt.step(model, grad, lr)
            total += res.loss + cfg.l2 * float(theta @ theta)
        losses.append(total / len(corpus))
        log.info("stage2 epoch %d loss %.4f", epoch, losses[-1])
    return model, losses


def train(model: Model, corpus, mode: str = "structured"):
    cfg = mode_config(model.config, mode)
    model.config = cfg
    _, l1 = train_stage1(model, corpus, cfg)
    l2 = []
    if mode == "structured":
        _, l2 = train_stage2(model, corpus, cfg)
    return model, {"stage1": l1, "stage2": l2}


# ------------------------------------------------------------------- predict


def predict(
    model: Model,
    doc: Document,
    config: TrainConfig | None = None,
    inference: str = "joint",
    consistency: bool = True,
    transitivity: bool = True,
) -> JointAssignment:
    """Label one document.

    ``joint``: ILP over candidates left after the t_event filter.
    ``local``: the same filter, then per-key argmax with no constraints.
    Filtered tokens are NON_EVENT and their pairs NONE in both modes.
    ``pipeline``: events by argmax, then the relation argmax over pairs of
    predicted events; other pairs NONE.
    """
    cfg = config or model.config
    cands = model.candidates(doc)
    enc = model.encode(doc, cands)
    ev, rel = model.raw_scores(enc)
    scores = ScoreTable.from_arrays(cands, ev, rel)
    if inference == "pipeline":
        events = {k: EventLabel(int(np.argmax(ev[n]))) for n, k in enumerate(cands.event_candidates)}
        relations = {}
        for n, (i, j) in enumerate(cands.relation_candidates):
            both = events[i] is EventLabel.EVENT and events[j] is EventLabel.EVENT
            relations[i, j] = RelationLabel(int(np.argmax(rel[n]))) if both else RelationLabel.NONE
        return JointAssignment(events, relations)
    fixed = _filtered(model, cands, ev, cfg.t_event)
    if inference == "local":
        inst = build_ilp(scores, cands, cfg.c_event, fixed_non_events=fixed, consistency=False, transitivity=False)
        return solve_local(inst)
    if inference != "joint":
        raise ContractViolation(f"unknown inference mode {inference!r}")
    inst = build_ilp(scores, cands, cfg.c_event, fixed_non_events=fixed, consistency=consistency, transitivity=transitivity)
    return solve_exact(inst)


# ---------------------------------------------------------------- checkpoint


def _scorer_state(s) -> dict:
    return {"kind": "mlp" if isinstance(s, MLPScorer) else "linear", "params": {n: getattr(s, n).tolist() for n in s.names}}


def _scorer_from_state(st) -> object:
    cls = MLPScorer if st["kind"] == "mlp" else LinearScorer
    return cls(*(np.array(st["params"][n], dtype=float) for n in cls.names))


def checkpoint_dict(model: Model) -> dict:
    cfg = dataclasses.asdict(model.config)
    if model.encoder.trainable:
        emb = {
            "kind": "lookup",
            "vocab": list(model.encoder.event_embeddings.vocab),
            "tables": [t.table.tolist() for t in model.encoder.tables()],
        }
    else:
        emb = {"kind": "file", "dim": model.features.dim}
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "train_config": cfg,
        "feature_config": dataclasses.asdict(model.features),
        "pos_whitelist": None if model.pos_whitelist is None else list(model.pos_whitelist),
        "embeddings": emb,
        "event_scorer": _scorer_state(model.event_scorer),
        "relation_scorer": _scorer_state(model.relation_scorer),
    }


def save_checkpoint(model: Model, path) -> None:
    Path(path).write_text(json.dumps(checkpoint_dict(model), sort_keys=True) + "\n", encoding="utf-8")


def load_checkpoint(path, embeddings: FileEmbeddings | None = None) -> Model:
    try:
        state = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ContractViolation(f"{path}: not a checkpoint ({exc.msg})") from None
    if state.get("format") != CHECKPOINT_FORMAT or state.get("version") != CHECKPOINT_VERSION:
        raise ContractViolation(f"{path}: unsupported checkpoint format")
    cfg = TrainConfig(**state["train_config"])
    fc = state["feature_config"]
    features = FeatureConfig(fc["dim"], fc["window"], tuple(fc["pos_vocab"]), tuple(fc["tense_vocab"]), tuple(fc["polarity_vocab"]))
    emb = state["embeddings"]
    if emb["kind"] == "lookup":
        tables = [LookupEmbeddings(tuple(emb["vocab"]), np.array(t, dtype=float)) for t in emb["tables"]]
        encoder = Encoder(features, tables[0], tables[1] if len(tables) > 1 else None)
    else:
        if embeddings is None:
            raise ContractViolation("checkpoint uses precomputed embeddings; an embedding file is required")
        if embeddings.dim != features.dim:
            raise ContractViolation(f"embedding dimension {embeddings.dim} != checkpoint dimension {features.dim}")
        encoder = Encoder(features, embeddings)
    wl = state["pos_whitelist"]
    return Model(cfg, features, wl, encoder, _scorer_from_state(state["event_scorer"]), _scorer_from_state(state["relation_scorer"]))
