"""Command-line entry point: train, predict, evaluate, solve, stats, synth."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .core import ContractViolation, RelationLabel
from .data import (
    SynthConfig,
    dataset_stats,
    dumps_prediction,
    format_stats,
    generate_synthetic,
    load_corpus,
    load_predictions,
    save_corpus,
)
from .evaluate import METRIC_PROFILES, build_report, evaluate_corpus, format_report, report_json
from .inference import build_ilp, check_validity, read_score_file, solve_exact
from .learning import MODES, Model, TrainConfig, load_checkpoint, mode_config, predict, save_checkpoint, train_stage1, train_stage2
from .scoring import FileEmbeddings

log = logging.getLogger("tempjoint")

# Structured-model presets for the two benchmark corpora; the stage-1 rate
# and schedule keep the package defaults.
PROFILES = {
    "tbdense": {
        "ssvm_learning_rate": 0.0005,
        "decay": 0.1,
        "momentum": 0.2,
        "c_event": 0.1,
        "t_event": 0.49,
        "hidden": 90,
        "event_weight": 6.0,
        "dropout": 0.6,
    },
    "matres": {
        "ssvm_learning_rate": 0.001,
        "decay": 0.1,
        "momentum": 0.1,
        "c_event": 5.0,
        "t_event": 0.4,
        "hidden": 90,
        "event_weight": 15.0,
        "dropout": 0.4,
    },
}

_TRAIN_KEYS = {f.name: f for f in dataclasses.fields(TrainConfig)}
_PATH_KEYS = {"train", "embeddings", "out", "log", "mode", "profile"}


class Diagnostic(Exception):
    """A user-facing error; printed to stderr with a nonzero exit."""


# ------------------------------------------------------------------ config


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """``key = value`` lines with ``#`` comments; values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise Diagnostic(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TRAIN_KEYS and key not in _PATH_KEYS:
            raise Diagnostic(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value):
    if not isinstance(value, str):
        return value
    default = TrainConfig()
    current = getattr(default, key)
    try:
        if isinstance(current, bool):
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
        if isinstance(current, dict):
            # BEFORE:1.0,AFTER:2.0
            pairs = [p.split(":") for p in value.split(",") if p.strip()]
            return {RelationLabel[k.strip()].name: float(v) for k, v in pairs}
    except (ValueError, KeyError) as exc:
        raise Diagnostic(f"bad value for {key}: {value!r} ({exc})") from None
    return value


def resolve_train_config(file_values: dict, overrides: dict) -> tuple[TrainConfig, dict]:
    """Profile, then config file, then command-line overrides."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    profile = merged.pop("profile", None)
    values = {}
    if profile is not None:
        if profile not in PROFILES:
            raise Diagnostic(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        values.update(PROFILES[profile])
    paths = {k: merged.pop(k) for k in list(merged) if k in _PATH_KEYS}
    for k, v in merged.items():
        if k not in _TRAIN_KEYS:
            raise Diagnostic(f"unknown key {k!r}")
        values[k] = _coerce(k, v)
    try:
        return TrainConfig(**values), paths
    except (ContractViolation, KeyError, TypeError) as exc:
        raise Diagnostic(f"invalid configuration: {exc}") from None


# ---------------------------------------------------------------- commands


def _load_embeddings(path):
    return FileEmbeddings.load(path) if path else None


def cmd_train(args) -> int:
    file_values = parse_config_text(Path(args.config).read_text(encoding="utf-8"), args.config) if args.config else {}
    overrides = {"train": args.train, "embeddings": args.embeddings, "out": args.out, "log": args.log,
                 "mode": args.mode, "profile": args.profile, "seed": args.seed}
    cfg, paths = resolve_train_config(file_values, overrides)
    mode = paths.get("mode") or "structured"
    if mode not in MODES:
        raise Diagnostic(f"unknown mode {mode!r}")
    if not paths.get("train") or not paths.get("out"):
        raise Diagnostic("train needs a training corpus and an output path")
    corpus = load_corpus(paths["train"])
    if not corpus:
        raise Diagnostic(f"{paths['train']}: empty training corpus")
    emb = _load_embeddings(paths.get("embeddings"))
    cfg = mode_config(cfg, mode)
    model = Model.create(corpus, cfg, emb)
    _, l1 = train_stage1(model, corpus, cfg)
    l2 = train_stage2(model, corpus, cfg)[1] if mode == "structured" else []
    save_checkpoint(model, paths["out"])
    log_path = paths.get("log") or str(paths["out"]) + ".log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for stage, losses in ((1, l1), (2, l2)):
            for epoch, loss in enumerate(losses):
                fh.write(json.dumps({"stage": stage, "epoch": epoch, "loss": loss}) + "\n")
    print(f"wrote {paths['out']} ({mode}; {len(l1)} + {len(l2)} epochs)")
    return 0


_WORKER = {}


def _init_worker(model, inference):
    _WORKER["model"], _WORKER["inference"] = model, inference


def _predict_one(doc):
    return predict(_WORKER["model"], doc, inference=_WORKER["inference"])


def cmd_predict(args) -> int:
    model = load_checkpoint(args.checkpoint, _load_embeddings(args.embeddings))
    corpus = load_corpus(args.corpus)
    if args.jobs > 1 and len(corpus) > 1:
        with ProcessPoolExecutor(args.jobs, initializer=_init_worker, initargs=(model, args.inference)) as ex:
            preds = list(ex.map(_predict_one, corpus, chunksize=4))
    else:
        _init_worker(model, args.inference)
        preds = [_predict_one(d) for d in corpus]
    lines = []
    for doc, a in zip(corpus, preds):
        if args.inference == "joint":
            bad = check_validity(a)
            if bad:
                raise Diagnostic(f"{doc.doc_id}: prediction violates constraints: {bad[0]}")
        lines.append(dumps_prediction(doc.doc_id, a) + "\n")
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        out.writelines(lines)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_evaluate(args) -> int:
    gold = load_corpus(args.gold)
    preds = load_predictions(args.predictions)
    ids = {d.doc_id for d in gold}
    if set(preds) != ids:
        missing, extra = sorted(ids - set(preds)), sorted(set(preds) - ids)
        raise Diagnostic(f"predictions do not align with gold: missing {missing[:3]}, unexpected {extra[:3]}")
    report = build_report(evaluate_corpus(gold, preds), args.metric)
    print(format_report(report))
    if args.json:
        Path(args.json).write_text(report_json(report) + "\n", encoding="utf-8")
    return 0


def cmd_solve(args) -> int:
    scores, cands = read_score_file(args.scores)
    inst = build_ilp(scores, cands, args.c_event)
    a = solve_exact(inst)
    for k, lab in sorted(a.events.items()):
        print(f"event {k} {lab.name}")
    for (i, j), lab in sorted(a.relations.items()):
        print(f"pair {i} {j} {lab.name}")
    print(f"objective {inst.objective_value(a)!r}")
    return 0


def cmd_stats(args) -> int:
    splits = {}
    for spec in args.corpora:
        name, _, path = spec.rpartition("=")
        splits[name or Path(path).stem] = load_corpus(path)
    stats = dataset_stats(splits)
    print(json.dumps(stats, indent=2) if args.json else format_stats(stats))
    return 0


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    common = dict(noise=args.noise, vague_rate=args.vague_rate, sentences=args.sentences,
                  tokens_per_sentence=args.tokens_per_sentence)
    try:
        tr = generate_synthetic(SynthConfig(seed=args.seed, documents=args.documents, prefix="train", **common))
        te = generate_synthetic(SynthConfig(seed=args.seed + 10_000, documents=args.test_documents, prefix="test", **common))
    except ContractViolation as exc:
        raise Diagnostic(str(exc)) from None
    save_corpus(out / "train.jsonl", tr.documents)
    save_corpus(out / "test.jsonl", te.documents)
    vectors = dict(tr.embeddings.vectors)
    vectors.update(te.embeddings.vectors)
    FileEmbeddings(tr.embeddings.dim, vectors).save(out / "embeddings.txt")
    print(f"wrote {len(tr.documents)} train and {len(te.documents)} test documents to {out}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tempjoint", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="two-stage training")
    p.add_argument("--config", help="key = value file")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--train", help="training corpus (JSONL)")
    p.add_argument("--embeddings", help="precomputed embedding file; trainable lookup table if omitted")
    p.add_argument("--out", help="checkpoint path")
    p.add_argument("--log", help="per-epoch log (default: <out>.log.jsonl)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a corpus with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings")
    p.add_argument("--out", help="predictions file (default: stdout)")
    p.add_argument("--inference", choices=("joint", "local", "pipeline"), default="joint")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against gold")
    p.add_argument("--gold", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--metric", choices=sorted(METRIC_PROFILES), default="exclude-none")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("solve", help="MAP assignment for a score file")
    p.add_argument("scores")
    p.add_argument("--c-event", type=float, default=1.0)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("corpora", nargs="+", metavar="[NAME=]PATH")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="write a synthetic train/test corpus and embeddings")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--documents", type=int, default=200)
    p.add_argument("--test-documents", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.8)
    p.add_argument("--vague-rate", type=float, default=0.15)
    p.add_argument("--sentences", type=int, default=3)
    p.add_argument("--tokens-per-sentence", type=int, default=6)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("tempjoint: error: --jobs must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (Diagnostic, ContractViolation, OSError, UnicodeDecodeError) as exc:
        print(f"tempjoint: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
