"""Search on the train split, then apply the winner to the test split."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import replace
from pathlib import Path
from typing import Optional

from poseng.harness.cache import ScoreCache
from poseng.harness.config import RunConfig
from poseng.harness.evaluator import ModelEvaluator
from poseng.harness.model import ToyModel
from poseng.harness.tasks import TaskDataset, load_jsonl, synthetic_retrieval_task
from poseng.positions import GapVector
from poseng.prompts import gaps_to_position_map
from poseng.search import SearchResult, enumerate_space, grid_search
from poseng.tokenizer import ByteTokenizer

log = logging.getLogger(__name__)

REPORT_VERSION = 1


def load_split(config: RunConfig, split: str) -> TaskDataset:
    ds = config.dataset
    if ds.get("source", "synthetic") == "synthetic":
        n = int(ds.get("n_train" if split == "train" else "n_test", 20 if split == "train" else 50))
        return synthetic_retrieval_task(
            seed=int(ds.get("seed", 0)),
            n_samples=n,
            distractor_count=int(ds.get("distractors", 6)),
            split=split,
            n_documents=int(ds.get("documents", 1)),
            filler=int(ds.get("filler", 2)),
        )
    if split not in ds:
        raise KeyError(f"dataset has no {split!r} file")
    defaults = {k: ds[k] for k in ("instruction", "item", "label") if k in ds}
    return load_jsonl(ds[split], split=split, kind=config.template, name=ds.get("name"), **defaults)


def build_evaluator(config: RunConfig) -> ModelEvaluator:
    return ModelEvaluator(ToyModel.build(config.model), ByteTokenizer(), config.max_new_tokens)


def evaluate_theta(evaluator, dataset: TaskDataset, theta: GapVector, cache: Optional[ScoreCache] = None) -> float:
    """Mean exact match of one gap vector on a dataset split."""
    scores = []
    for sample in dataset.search_samples(evaluator.tokenizer):
        hit = cache.get(theta, sample.sample_id) if cache is not None else None
        if hit is None:
            hit = evaluator.score(sample.prompt, gaps_to_position_map(sample.prompt, theta), sample.answers)
            if cache is not None:
                cache.put(theta, sample.sample_id, hit)
        scores.append(hit)
    return math.fsum(scores) / len(scores)


def _try_eval(evaluator, dataset, theta, cache):
    try:
        return evaluate_theta(evaluator, dataset, theta, cache), None
    except Exception as exc:
        return None, f"{type(exc).__name__}: {exc}"


def run_pipeline(config: RunConfig, workers: Optional[int] = None, cache_path=None) -> dict:
    workers = workers or config.workers
    cache_path = cache_path or config.cache
    evaluator = build_evaluator(config)
    train = load_split(config, "train")
    test = load_split(config, "test")
    journal = ScoreCache(cache_path, namespace=config.fingerprint()) if cache_path else None

    log.info("searching %d candidates on %d train samples", len(enumerate_space(config.space)), len(train))
    result: SearchResult = grid_search(
        config.space, evaluator, train.search_samples(evaluator.tokenizer), workers=workers, cache=journal
    )
    baseline = config.space.baseline()
    best = result.best
    baseline_train = result.table[baseline].mean if baseline in result.table else None
    baseline_test, baseline_err = _try_eval(evaluator, test, baseline, journal)
    best_test, best_err = _try_eval(evaluator, test, best, journal)
    improvement = None if baseline_test is None or best_test is None else best_test - baseline_test

    return {
        "version": REPORT_VERSION,
        "config": {k: v for k, v in config.to_dict().items() if k not in ("workers", "out", "cache")},
        "fingerprint": config.fingerprint(),
        "setting": {"dataset": config.experiment_setting.dataset, "n_context": config.experiment_setting.n_context},
        "n_train": len(train),
        "n_test": len(test),
        "baseline": {"theta": baseline.to_dict(), "train": baseline_train, "test": baseline_test, "error": baseline_err},
        "best": {"theta": best.to_dict(), "train": result.table[best].mean, "test": best_test, "error": best_err},
        "improvement": improvement,
        "table": result.table.to_rows(),
        "invalid": [
            {"theta": theta.to_dict(), "failures": [{"sample": f.sample_id, "error": f.error} for f in fails]}
            for theta, fails in sorted(result.invalid.items(), key=lambda kv: kv[0].sort_key())
        ],
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: dict, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.json"
    path.write_text(dump_report(report), encoding="utf-8")
    return path


def read_report(path) -> dict:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    return json.loads(path.read_text(encoding="utf-8"))


def with_overrides(config: RunConfig, seed: Optional[int] = None, workers: Optional[int] = None, out=None, cache=None) -> RunConfig:
    """Apply CLI flags; ``seed`` reseeds both the model and a synthetic dataset."""
    if seed is not None:
        dataset = dict(config.dataset)
        if dataset.get("source", "synthetic") == "synthetic":
            dataset["seed"] = seed
        config = replace(config, model=replace(config.model, seed=seed), dataset=dataset)
    if workers is not None:
        config = replace(config, workers=workers)
    if out is not None:
        config = replace(config, out=str(out))
    if cache is not None:
        config = replace(config, cache=str(cache))
    return config
