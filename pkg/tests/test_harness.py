import json

import numpy as np
import pytest

from poseng.cli import main, parse_theta
from poseng.errors import ConfigurationError, ContextOverflowError, PosengError
from poseng.harness.cache import ScoreCache
from poseng.harness.config import config_from_dict, load_config
from poseng.harness.evaluator import ModelEvaluator
from poseng.harness.export import export_position_map, import_position_map, parse_position_map_document
from poseng.harness.model import ModelConfig, ToyModel
from poseng.harness.pipeline import dump_report, run_pipeline
from poseng.harness.scoring import exact_match_score, normalize
from poseng.harness.tasks import copy_oracle, load_jsonl, save_jsonl, synthetic_retrieval_task
from poseng.positions import GapVector, from_gaps, identity_map
from poseng.prompts import gaps_to_position_map
from poseng.tokenizer import ByteTokenizer

tok = ByteTokenizer()

SMALL_SPACE = {"axes": {"A": [0, 1000], "B": [0, 300]}}


def small_config(**over):
    obj = {
        "dataset": {"source": "synthetic", "seed": 7, "n_train": 4, "n_test": 4},
        "space": SMALL_SPACE,
    }
    obj.update(over)
    return config_from_dict(obj)


def test_exact_match_examples():
    assert exact_match_score("The answer is Paris.", ["paris"]) == 1
    assert exact_match_score("  LONDON ", ["Paris", "london"]) == 1
    assert exact_match_score("Berlin", ["Paris"]) == 0
    assert exact_match_score("anything", ["", "?"]) == 0
    with pytest.raises(ValueError):
        exact_match_score("x", [])
    assert normalize("  Hello,\n  World!! ") == "hello, world"


def test_byte_tokenizer_round_trip():
    text = "Document (Title: é) K7\n"
    assert tok.decode(tok.encode(text)) == text
    assert tok.decode([tok.BOS, 65, tok.EOS]) == "A"


def test_synthetic_task_is_seeded():
    a = synthetic_retrieval_task(3, 5)
    assert a.samples == synthetic_retrieval_task(3, 5).samples
    assert a.samples != synthetic_retrieval_task(4, 5).samples
    assert a.samples != synthetic_retrieval_task(3, 5, split="test").samples


@pytest.mark.parametrize("distractors", [0, 6])
def test_copy_oracle_is_perfect(distractors):
    ds = synthetic_retrieval_task(1, 20, distractor_count=distractors, n_documents=2)
    for s in ds.samples:
        assert exact_match_score(copy_oracle(s.slots), s.answers) == 1


def test_synthetic_validation():
    with pytest.raises(ConfigurationError):
        synthetic_retrieval_task(0, 0)
    with pytest.raises(ConfigurationError):
        synthetic_retrieval_task(0, 3, distractor_count=20)


def test_jsonl_round_trip(tmp_path):
    ds = synthetic_retrieval_task(2, 3)
    path = save_jsonl(ds, tmp_path / "d.jsonl")
    back = load_jsonl(path)
    assert [s.answers for s in back.samples] == [s.answers for s in ds.samples]
    assert back.template(0).render(tok).text == ds.template(0).render(tok).text
    (tmp_path / "bad.jsonl").write_text('{"slots": {}, "answer": ["x"]}\n')
    with pytest.raises(ConfigurationError):
        load_jsonl(tmp_path / "bad.jsonl")


def test_model_is_deterministic():
    ids = tok.encode("Document (Title: notes) K7 the river\n")
    a = ToyModel.build(ModelConfig(seed=5)).next_token_logits(ids, range(len(ids)))
    b = ToyModel.build(ModelConfig(seed=5)).next_token_logits(ids, range(len(ids)))
    c = ToyModel.build(ModelConfig(seed=6)).next_token_logits(ids, range(len(ids)))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


@pytest.mark.parametrize("scheme", ["linear_bias", "rotary", "sinusoidal"])
def test_last_row_shortcut_matches_full_pass(scheme):
    model = ToyModel.build(ModelConfig(scheme=scheme))
    ids = tok.encode("K7 the B3 a question?")
    pos = np.arange(len(ids)) * 2
    full = model.hidden_states(ids, pos)[-1] @ model.unembedding.T
    np.testing.assert_allclose(model.next_token_logits(ids, pos), full, atol=1e-10)


def test_model_config_validation():
    with pytest.raises(ConfigurationError):
        ModelConfig(n_layers=0)
    with pytest.raises(ConfigurationError):
        ModelConfig(scheme="alibi2")


def test_generation_respects_context_window():
    model = ToyModel.build(ModelConfig(context_window=64))
    ids = tok.encode("abc")
    model.generate(ids, identity_map(3), max_new_tokens=2)
    with pytest.raises(ContextOverflowError):
        model.generate(ids, from_gaps([1, 2], [61]), max_new_tokens=1)
    model.generate(ids, from_gaps([1, 2], [60]), max_new_tokens=1)


def test_evaluator_scores_synthetic_prompt():
    ds = synthetic_retrieval_task(7, 3)
    ev = ModelEvaluator(ToyModel.build(ModelConfig()))
    for s in ds.search_samples(tok):
        m = gaps_to_position_map(s.prompt, GapVector(A=0, B=0))
        out = ev.output(s.prompt, m)
        assert ev.score(s.prompt, m, s.answers) == float(exact_match_score(out, s.answers))


def test_pipeline_report_fields():
    report = run_pipeline(small_config())
    assert report["baseline"]["theta"] == {"A": 0, "B": 0}
    assert report["best"]["train"] >= report["baseline"]["train"]
    assert report["improvement"] == pytest.approx(report["best"]["test"] - report["baseline"]["test"])
    assert len(report["table"]) == 4 and report["invalid"] == []


def test_baseline_only_space_has_zero_improvement():
    report = run_pipeline(small_config(space={"axes": {"A": [0], "B": [0]}}))
    assert report["best"]["theta"] == report["baseline"]["theta"]
    assert report["improvement"] == 0


def test_overflowing_candidates_are_invalid():
    cfg = small_config(model={"context_window": 1024}, space={"axes": {"A": [0, 900], "B": [0]}})
    report = run_pipeline(cfg)
    assert [r["theta"] for r in report["invalid"]] == [{"A": 900, "B": 0}]
    assert "ContextOverflowError" in report["invalid"][0]["failures"][0]["error"]


def test_reports_identical_across_workers_and_cache(tmp_path):
    cfg = small_config()
    plain = dump_report(run_pipeline(cfg, workers=1))
    threaded = dump_report(run_pipeline(cfg, workers=4))
    cold = dump_report(run_pipeline(cfg, cache_path=tmp_path / "j.jsonl"))
    warm = dump_report(run_pipeline(cfg, cache_path=tmp_path / "j.jsonl"))
    assert plain == threaded == cold == warm


def test_cache_journal(tmp_path):
    path = tmp_path / "c.jsonl"
    c = ScoreCache(path, namespace="run1")
    c.put(GapVector(A=1), "s0", 1.0)
    c.put(GapVector(A=1), "s0", 0.0)
    with path.open("a") as fh:
        fh.write('{"ns": "run1", "theta": [["A"')
    again = ScoreCache(path, namespace="run1")
    assert again.get(GapVector(A=1), "s0") == 1.0
    assert again.hits == 1
    assert ScoreCache(path, namespace="run2").get(GapVector(A=1), "s0") is None
    assert again.scoped("run2").get(GapVector(A=1), "s0") is None


def test_export_round_trip(tmp_path):
    prompt = synthetic_retrieval_task(1, 1).template(0).render(tok)
    m = gaps_to_position_map(prompt, GapVector(A=1900, B=400))
    tokens, back = import_position_map(export_position_map(prompt, m, tmp_path / "p.json"))
    assert tokens == list(prompt.token_ids) and back == m
    assert back[len(prompt) - 1] == len(prompt) - 1 + 2300
    doc = json.loads((tmp_path / "p.json").read_text())
    assert [g["count"] for g in doc["placeholder_gaps"]] == [1900, 400]


def test_export_identity_has_no_gaps(tmp_path):
    tokens, back = import_position_map(export_position_map([5, 6, 7], identity_map(3), tmp_path / "p.json"))
    assert back == identity_map(3)
    assert json.loads((tmp_path / "p.json").read_text())["placeholder_gaps"] == []


def test_export_rejects_inconsistent_document():
    doc = {"version": 1, "tokens": [1, 2], "position_ids": [0, 5], "placeholder_gaps": [{"after_index": 0, "count": 3}]}
    with pytest.raises(ConfigurationError):
        parse_position_map_document(doc)
    with pytest.raises(PosengError):
        parse_position_map_document({**doc, "position_ids": [3, 3]})


def test_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        config_from_dict({"templat": "RAG"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"model": {"seeds": 1}})
    with pytest.raises(ConfigurationError):
        config_from_dict({"template": "ICL"})
    with pytest.raises(ConfigurationError):
        config_from_dict({"space": {"preset": "huge"}})
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "c.json")


def test_config_file_relative_paths(tmp_path):
    save_jsonl(synthetic_retrieval_task(0, 2), tmp_path / "train.jsonl")
    (tmp_path / "c.json").write_text(json.dumps({"dataset": {"source": "jsonl", "train": "train.jsonl"}, "out": "runs/x"}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.dataset["train"] == str(tmp_path / "train.jsonl")
    assert cfg.out == str(tmp_path / "runs/x")
    assert cfg.experiment_setting.dataset == "train"


def test_parse_theta():
    assert parse_theta("A=1900,B=400", ("A", "B")) == GapVector(A=1900, B=400)
    assert parse_theta("mid=20", ("A", "mid", "B")) == GapVector(A=0, mid=20, B=0)
    with pytest.raises(PosengError):
        parse_theta("C=1", ("A", "B"))


def test_cli_enumerate(capsys):
    assert main(["enumerate"]) == 0
    assert capsys.readouterr().out.strip() == "351"
    assert main(["enumerate", "--preset", "icl"]) == 0
    assert capsys.readouterr().out.strip() == "294"


def test_cli_search_aggregate_export(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": {"source": "synthetic", "seed": 7, "n_train": 3, "n_test": 3}, "space": SMALL_SPACE}))
    for seed in (1, 2):
        assert main(["search", "--config", str(cfg), "--seed", str(seed), "--out", str(tmp_path / f"r{seed}")]) == 0
    report = json.loads((tmp_path / "r1" / "report.json").read_text())
    assert report["config"]["model"]["seed"] == 1 and report["config"]["dataset"]["seed"] == 1
    # same setting twice is rejected
    assert main(["aggregate", str(tmp_path / "r1"), str(tmp_path / "r2"), "--out", str(tmp_path / "agg")]) == 2
    assert main(["eval", "--config", str(cfg), "--theta", "A=1000"]) == 0
    assert json.loads(capsys.readouterr().out.strip().splitlines()[-1])["theta"] == {"A": 1000, "B": 0}
    assert main(["export", "--config", str(cfg), "--theta", "A=5", "--out", str(tmp_path / "exp")]) == 0
    tokens, m = import_position_map(tmp_path / "exp" / "position_map_test_0.json")
    assert m[len(tokens) - 1] == len(tokens) + 4


def test_cli_aggregate_two_settings(tmp_path):
    runs = []
    for docs in (1, 2):
        cfg = small_config(dataset={"source": "synthetic", "seed": 7, "n_train": 2, "n_test": 2, "documents": docs})
        out = tmp_path / f"d{docs}"
        out.mkdir()
        (out / "report.json").write_text(dump_report(run_pipeline(cfg)))
        runs.append(str(out))
    assert main(["aggregate", *runs, "--out", str(tmp_path / "agg")]) == 0
    summary = json.loads((tmp_path / "agg" / "percentiles.json").read_text())
    assert len(summary["percentiles"]) == 4 and len(summary["settings"]) == 2
    assert (tmp_path / "agg" / "heatmap.csv").exists()


def test_cli_error_exit(tmp_path):
    assert main(["search", "--config", str(tmp_path / "missing.json")]) == 2
