import json

import numpy as np
import pytest

from tempjoint.cli import PROFILES, main, parse_config_text, resolve_train_config, Diagnostic
from tempjoint.core import RelationLabel
from tempjoint.data import load_corpus, load_predictions
from tempjoint.inference import check_validity

SMALL = """\
# tiny run for tests
total_epochs = 2
gold_epochs = 1
stage2_epochs = 1
hidden = 6
t_event = 0.5
"""


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out-dir", str(d), "--seed", "3", "--documents", "6", "--test-documents", "4"]) == 0
    (d / "small.cfg").write_text(SMALL)
    return d


def train(work, out, *extra):
    argv = ["train", "--config", str(work / "small.cfg"), "--train", str(work / "train.jsonl"),
            "--embeddings", str(work / "embeddings.txt"), "--out", str(work / out), *extra]
    assert main(argv) == 0
    return work / out


@pytest.fixture(scope="module")
def checkpoint(work):
    return train(work, "model.npz")


def log_stages(path):
    return [json.loads(line)["stage"] for line in open(str(path) + ".log.jsonl")]


def test_synth_writes_three_files(work):
    assert len(load_corpus(work / "train.jsonl")) == 6
    assert len(load_corpus(work / "test.jsonl")) == 4
    header, row = (work / "embeddings.txt").read_text().splitlines()[:2]
    assert header == "D=16"
    assert len(row.split()) == 2 + 16  # doc id, token index, vector


def test_structured_mode_runs_both_stages(checkpoint):
    assert log_stages(checkpoint) == [1, 1, 2]


def test_pipeline_mode_skips_stage_two(work):
    path = train(work, "pipe.npz", "--mode", "pipeline")
    assert 2 not in log_stages(path)


def test_training_is_byte_reproducible(work, checkpoint):
    again = train(work, "again.npz")
    assert again.read_bytes() == checkpoint.read_bytes()


def test_predict_is_valid_and_job_count_independent(work, checkpoint):
    common = ["predict", "--checkpoint", str(checkpoint), "--corpus", str(work / "test.jsonl"),
              "--embeddings", str(work / "embeddings.txt")]
    assert main(common + ["--out", str(work / "p1.jsonl")]) == 0
    assert main(common + ["--out", str(work / "p2.jsonl"), "--jobs", "2"]) == 0
    assert (work / "p1.jsonl").read_bytes() == (work / "p2.jsonl").read_bytes()
    preds = load_predictions(work / "p1.jsonl")
    assert len(preds) == 4
    assert all(check_validity(a) == [] for a in preds.values())


def test_zero_jobs_is_a_usage_error(work, checkpoint):
    rc = main(["predict", "--checkpoint", str(checkpoint), "--corpus", str(work / "test.jsonl"), "--jobs", "0"])
    assert rc == 2


def test_gold_scored_against_itself(work, capsys):
    from tempjoint.core import generate_candidates, gold_assignment
    from tempjoint.data import dumps_prediction

    docs = load_corpus(work / "test.jsonl")
    (work / "gold_preds.jsonl").write_text(
        "".join(dumps_prediction(d.doc_id, gold_assignment(d, generate_candidates(d))) + "\n" for d in docs)
    )
    rc = main(["evaluate", "--gold", str(work / "test.jsonl"), "--predictions", str(work / "gold_preds.jsonl"),
               "--json", str(work / "r.json")])
    assert rc == 0
    report = json.loads((work / "r.json").read_text())
    assert report["relation"]["f1"] == 1.0 and report["event"]["f1"] == 1.0
    assert "Relation" in capsys.readouterr().out


def test_evaluate_rejects_misaligned_predictions(work, capsys):
    (work / "one.jsonl").write_text('{"doc_id": "elsewhere"}\n')
    rc = main(["evaluate", "--gold", str(work / "test.jsonl"), "--predictions", str(work / "one.jsonl")])
    assert rc == 1
    assert "do not align" in capsys.readouterr().err


# -------------------------------------------------------------------- solve


def before(value):
    return " ".join(str(value) if k == 0 else "0" for k in range(7))


SOLVE_CASES = [
    # strong events and a clear BEFORE: 2 + 2 + 2
    (f"EVENTS 2 PAIRS 1\n0 0 2\n1 0 2\n0 1 {before(2)}\n",
     ["event 0 EVENT", "event 1 EVENT", "pair 0 1 BEFORE"], 6.0),
    # a dominant non-event drags its pair to NONE: 2 + 10 + 0
    (f"EVENTS 2 PAIRS 1\n0 0 2\n1 10 0\n0 1 {before(3)}\n",
     ["event 0 EVENT", "event 1 NON_EVENT", "pair 0 1 NONE"], 12.0),
    # three BEFOREs cost 0.2 against the local (0, 2) preference: 9 + 2 + 2 + 0.8
    (f"EVENTS 3 PAIRS 3\n0 0 3\n1 0 3\n2 0 3\n0 1 {before(2)}\n0 2 0.8 1 0 0 0 0 0\n1 2 {before(2)}\n",
     ["pair 0 1 BEFORE", "pair 0 2 BEFORE", "pair 1 2 BEFORE"], 13.8),
]


@pytest.mark.parametrize("text, expected, objective", SOLVE_CASES)
def test_solve_examples(tmp_path, capsys, text, expected, objective):
    (tmp_path / "s.txt").write_text(text)
    assert main(["solve", str(tmp_path / "s.txt")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert set(expected) <= set(out)
    assert out[-1].startswith("objective ")
    assert float(out[-1].split()[1]) == pytest.approx(objective, abs=1e-12)


def test_solve_empty_instance(tmp_path, capsys):
    (tmp_path / "s.txt").write_text("EVENTS 0 PAIRS 0\n")
    assert main(["solve", str(tmp_path / "s.txt")]) == 0
    assert capsys.readouterr().out.splitlines() == ["objective 0.0"]


@pytest.mark.parametrize(
    "text", ["", "EVENTS 1\n", "EVENTS 1 PAIRS 0\n", "EVENTS 1 PAIRS 0\n0 x 1\n", "EVENTS 2 PAIRS 1\n0 0 1\n1 0 1\n1 0 0 0 0 0 0 0 0\n"]
)
def test_solve_malformed_score_file(tmp_path, capsys, text):
    (tmp_path / "s.txt").write_text(text)
    assert main(["solve", str(tmp_path / "s.txt")]) == 1
    assert capsys.readouterr().err.startswith("tempjoint: error:")


def test_solve_c_event_changes_the_objective(tmp_path, capsys):
    (tmp_path / "s.txt").write_text(SOLVE_CASES[0][0])
    assert main(["solve", str(tmp_path / "s.txt"), "--c-event", "5"]) == 0
    assert capsys.readouterr().out.splitlines()[-1] == "objective 22.0"


# ------------------------------------------------------------------- config


def test_config_parsing():
    vals = parse_config_text("c = 2.5  # trailing\n\nshared_encoder = false\nclass_weights = VAGUE:0.5\n")
    cfg, paths = resolve_train_config(vals, {"seed": 4, "mode": "local"})
    assert (cfg.c, cfg.shared_encoder, cfg.seed) == (2.5, False, 4)
    assert cfg.class_weight(RelationLabel.VAGUE) == 0.5
    assert paths == {"mode": "local"}


def test_precedence_profile_then_file_then_flags():
    cfg, _ = resolve_train_config({"profile": "matres", "c_event": "2"}, {"profile": None})
    assert cfg.c_event == 2.0 and cfg.hidden == PROFILES["matres"]["hidden"]
    cfg, _ = resolve_train_config({"c_event": "2"}, {"profile": "tbdense"})
    assert cfg.c_event == 2.0 and cfg.event_weight == PROFILES["tbdense"]["event_weight"]


@pytest.mark.parametrize(
    "text, message",
    [
        ("bogus = 1\n", "unknown key"),
        ("just words\n", "expected 'key = value'"),
        ("hidden = many\n", "bad value"),
        ("profile = nowhere\n", "unknown profile"),
        ("t_event = 2\n", "invalid configuration"),
        ("class_weights = SOON:1\n", "bad value"),
    ],
)
def test_config_errors(work, capsys, text, message):
    (work / "bad.cfg").write_text(text)
    rc = main(["train", "--config", str(work / "bad.cfg"), "--train", str(work / "train.jsonl"), "--out", str(work / "x.npz")])
    assert rc == 1
    assert message in capsys.readouterr().err


def test_config_error_reports_line():
    with pytest.raises(Diagnostic, match="f.cfg:2:"):
        parse_config_text("c = 1\nnope\n", "f.cfg")


def test_train_on_empty_corpus_fails(work, capsys):
    (work / "empty.jsonl").write_text("")
    rc = main(["train", "--train", str(work / "empty.jsonl"), "--out", str(work / "e.npz")])
    assert rc == 1 and "empty training corpus" in capsys.readouterr().err


def test_train_needs_paths(capsys):
    assert main(["train"]) == 1
    assert "output path" in capsys.readouterr().err


def test_predict_on_empty_corpus_writes_nothing(work, checkpoint):
    (work / "empty.jsonl").write_text("")
    rc = main(["predict", "--checkpoint", str(checkpoint), "--corpus", str(work / "empty.jsonl"),
               "--embeddings", str(work / "embeddings.txt"), "--out", str(work / "none.jsonl")])
    assert rc == 0 and (work / "none.jsonl").read_text() == ""


def test_missing_checkpoint(work, capsys):
    rc = main(["predict", "--checkpoint", str(work / "absent.npz"), "--corpus", str(work / "test.jsonl")])
    assert rc == 1 and "absent.npz" in capsys.readouterr().err


# -------------------------------------------------------------------- stats


def test_stats_json(work, capsys):
    assert main(["stats", f"tr={work / 'train.jsonl'}", str(work / "test.jsonl"), "--json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert set(stats) == {"tr", "test"}
    assert stats["tr"]["documents"] == 6
    counts = np.array(list(stats["test"]["labels"].values()))
    assert counts.sum() == stats["test"]["pairs"]
