"""Task datasets: seeded synthetic key-value retrieval and JSON Lines files."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from poseng.errors import ConfigurationError
from poseng.harness.model import KEY_ALPHABET, VALUE_ALPHABET
from poseng.prompts import TemplateConfig
from poseng.search import SearchSample
from poseng.tokenizer import Tokenizer

FILLER_WORDS = ("the", "river", "old", "stone", "near", "a", "quiet", "field", "with", "some", "small", "house", "on", "it")


@dataclass(frozen=True)
class TaskSample:
    slots: Mapping
    answers: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "answers", tuple(self.answers))
        if not self.answers:
            raise ConfigurationError("every sample needs at least one answer")


@dataclass(frozen=True)
class TaskDataset:
    samples: tuple[TaskSample, ...]
    split: str = "train"
    kind: str = "RAG"
    provenance: str = ""
    name: str = "task"
    template_defaults: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ConfigurationError("a dataset must contain at least one sample")
        if self.split not in ("train", "test"):
            raise ConfigurationError(f"split must be 'train' or 'test', got {self.split!r}")

    def __len__(self) -> int:
        return len(self.samples)

    def template(self, i: int) -> TemplateConfig:
        return TemplateConfig.from_slots(self.kind, self.samples[i].slots, **self.template_defaults)

    def search_samples(self, tokenizer: Tokenizer) -> list[SearchSample]:
        return [
            SearchSample(f"{self.split}-{i}", self.template(i).render(tokenizer), s.answers)
            for i, s in enumerate(self.samples)
        ]


def synthetic_retrieval_task(
    seed: int,
    n_samples: int,
    distractor_count: int = 6,
    split: str = "train",
    n_documents: int = 1,
    filler: int = 2,
) -> TaskDataset:
    """Key-value lookup with distractor facts.

    Each fact is a key letter immediately followed by a digit (``"K7"``).
    Facts are spread over ``n_documents`` passages with ``filler`` lowercase
    words between consecutive facts; the question asks for one key's value.
    """
    if n_samples < 1:
        raise ConfigurationError("n_samples must be >= 1")
    if not 0 <= distractor_count < len(KEY_ALPHABET):
        raise ConfigurationError(f"distractor_count must be in 0..{len(KEY_ALPHABET) - 1}")
    if n_documents < 1:
        raise ConfigurationError("n_documents must be >= 1")
    rng = random.Random(f"synthetic-retrieval:{seed}:{split}")
    samples = []
    for _ in range(n_samples):
        keys = rng.sample(KEY_ALPHABET, distractor_count + 1)
        facts = [(k, rng.choice(VALUE_ALPHABET)) for k in keys]
        target_key, target_value = facts[0]
        rng.shuffle(facts)
        docs = [[] for _ in range(n_documents)]
        for i, (k, v) in enumerate(facts):
            docs[i % n_documents].append(f"{k}{v}")
        passages = []
        for doc in docs:
            words = []
            for fact in doc:
                words.append(fact)
                words.extend(rng.choice(FILLER_WORDS) for _ in range(filler))
            passages.append(" ".join(words) if words else "empty")
        documents = [{"title": "notes", "passage": p} for p in passages]
        slots = {"documents": documents, "question": f"what is the value of {target_key}?"}
        samples.append(TaskSample(slots, (target_value,)))
    return TaskDataset(
        tuple(samples),
        split=split,
        kind="RAG",
        provenance=f"synthetic_retrieval(seed={seed}, n={n_samples}, distractors={distractor_count}, "
        f"documents={n_documents}, filler={filler})",
        name="synthetic",
    )


def load_jsonl(path, split: str = "train", kind: str = "RAG", name: str | None = None, **template_defaults) -> TaskDataset:
    path = Path(path)
    samples = []
    try:
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                obj = json.loads(line)
                extra = set(obj) - {"slots", "answers"}
                if extra or "slots" not in obj or "answers" not in obj:
                    raise ConfigurationError(f"{path}:{lineno}: expected keys 'slots' and 'answers'")
                samples.append(TaskSample(obj["slots"], tuple(obj["answers"])))
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    dataset = TaskDataset(tuple(samples), split, kind.upper(), str(path), name or path.stem, dict(template_defaults))
    for i in range(len(dataset)):
        dataset.template(i)  # surface slot errors at load time
    return dataset


def save_jsonl(dataset: TaskDataset, path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for s in dataset.samples:
            fh.write(json.dumps({"slots": s.slots, "answers": list(s.answers)}, sort_keys=True) + "\n")
    return path


def copy_oracle(slots: Mapping) -> str:
    """Answer a synthetic sample by reading the fact straight out of the text."""
    key = slots["question"].rstrip("?").split()[-1]
    for doc in slots["documents"]:
        for word in doc["passage"].split():
            if len(word) == 2 and word[0] == key and word[1] in VALUE_ALPHABET:
                return word[1]
    return ""
