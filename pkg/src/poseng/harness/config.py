"""Declarative run configuration (one JSON document per run).

Example::

    {
      "template": "RAG",
      "scheme": "linear_bias",
      "model": {"seed": 0, "n_layers": 2, "context_window": 4096},
      "max_new_tokens": 1,
      "dataset": {"source": "synthetic", "seed": 7, "n_train": 20, "n_test": 50,
                  "distractors": 6, "documents": 1, "filler": 2},
      "space": {"axes": {"A": {"start": 0, "step": 100, "stop": 2500},
                         "B": {"start": 0, "step": 100, "stop": 2500}},
                "constraint": {"labels": ["A", "B"], "bound": 2500}},
      "setting": {"dataset": "synthetic", "n_context": 1},
      "workers": 1,
      "out": "runs/demo",
      "cache": null
    }

``space`` may instead be ``{"preset": "rag"}`` or ``{"preset": "icl"}``; an
axis may be an explicit list. A file dataset is
``{"source": "jsonl", "train": PATH, "test": PATH, "name": ...}`` with
optional ``instruction``, ``item`` and ``label`` template defaults. Relative
paths resolve against the config file's directory. Unknown keys are errors.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Optional

from poseng.aggregate import ExperimentSetting
from poseng.errors import ConfigurationError
from poseng.harness.model import ModelConfig
from poseng.search import Axis, SearchSpace, SumConstraint, icl_space, rag_space

_TOP_KEYS = {"template", "scheme", "model", "max_new_tokens", "dataset", "space", "setting", "workers", "out", "cache"}
_SYNTH_KEYS = {"source", "seed", "n_train", "n_test", "distractors", "documents", "filler"}
_FILE_KEYS = {"source", "train", "test", "name", "instruction", "item", "label"}


def _reject_unknown(obj: Mapping, allowed: set, where: str):
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")


def parse_space(obj: Mapping) -> SearchSpace:
    if "preset" in obj:
        _reject_unknown(obj, {"preset"}, "space")
        presets = {"rag": rag_space, "icl": icl_space}
        if obj["preset"] not in presets:
            raise ConfigurationError(f"unknown space preset {obj['preset']!r}")
        return presets[obj["preset"]]()
    _reject_unknown(obj, {"axes", "constraint"}, "space")
    if "axes" not in obj:
        raise ConfigurationError("space needs 'axes' or 'preset'")
    axes = {}
    for label, ax in obj["axes"].items():
        if isinstance(ax, Mapping):
            _reject_unknown(ax, {"start", "step", "stop"}, f"axis {label}")
            axes[label] = Axis(int(ax["start"]), int(ax["step"]), int(ax["stop"]))
        else:
            axes[label] = [int(v) for v in ax]
    constraint = None
    if obj.get("constraint") is not None:
        c = obj["constraint"]
        _reject_unknown(c, {"labels", "bound"}, "constraint")
        constraint = SumConstraint(tuple(c["labels"]), int(c["bound"]))
    return SearchSpace.from_axes(axes, constraint)


@dataclass(frozen=True)
class RunConfig:
    template: str = "RAG"
    scheme: str = "linear_bias"
    model: ModelConfig = field(default_factory=ModelConfig)
    max_new_tokens: int = 1
    dataset: Mapping[str, Any] = field(default_factory=lambda: {"source": "synthetic"})
    space: SearchSpace = field(default_factory=rag_space)
    setting: Optional[ExperimentSetting] = None
    workers: int = 1
    out: Optional[str] = None
    cache: Optional[str] = None

    def __post_init__(self):
        if self.template.upper() not in ("RAG", "ICL"):
            raise ConfigurationError(f"template must be RAG or ICL, got {self.template!r}")
        object.__setattr__(self, "template", self.template.upper())
        if self.model.scheme != self.scheme:
            object.__setattr__(self, "model", replace(self.model, scheme=self.scheme))
        source = self.dataset.get("source", "synthetic")
        if source == "synthetic":
            _reject_unknown(self.dataset, _SYNTH_KEYS, "dataset")
            if self.template != "RAG":
                raise ConfigurationError("the synthetic retrieval task uses the RAG template")
        elif source == "jsonl":
            _reject_unknown(self.dataset, _FILE_KEYS, "dataset")
            if "train" not in self.dataset:
                raise ConfigurationError("a jsonl dataset needs a 'train' path")
        else:
            raise ConfigurationError(f"unknown dataset source {source!r}")
        if self.max_new_tokens < 1 or self.workers < 1:
            raise ConfigurationError("max_new_tokens and workers must be >= 1")

    @property
    def experiment_setting(self) -> ExperimentSetting:
        if self.setting is not None:
            return self.setting
        if self.dataset.get("source", "synthetic") == "synthetic":
            return ExperimentSetting("synthetic", int(self.dataset.get("documents", 1)))
        return ExperimentSetting(str(self.dataset.get("name", Path(self.dataset["train"]).stem)), 0)

    def to_dict(self) -> dict:
        out = {
            "template": self.template,
            "scheme": self.scheme,
            "model": {k: v for k, v in asdict(self.model).items() if k != "scheme"},
            "max_new_tokens": self.max_new_tokens,
            "dataset": dict(self.dataset),
            "space": self.space.to_dict(),
            "setting": {"dataset": self.experiment_setting.dataset, "n_context": self.experiment_setting.n_context},
            "workers": self.workers,
            "out": self.out,
            "cache": self.cache,
        }
        return out

    def fingerprint(self) -> str:
        """Hash of everything a per-sample score depends on."""
        relevant = {
            "template": self.template,
            "model": asdict(self.model),
            "max_new_tokens": self.max_new_tokens,
            "dataset": dict(self.dataset),
        }
        blob = json.dumps(relevant, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def config_from_dict(obj: Mapping, base_dir=None) -> RunConfig:
    _reject_unknown(obj, _TOP_KEYS, "config")
    model_obj = dict(obj.get("model", {}))
    model_fields = {f.name for f in fields(ModelConfig)} - {"scheme"}
    _reject_unknown(model_obj, model_fields, "model")
    scheme = obj.get("scheme", "linear_bias")
    model = ModelConfig(scheme=scheme, **model_obj)

    dataset = dict(obj.get("dataset", {"source": "synthetic"}))
    dataset.setdefault("source", "synthetic")
    if base_dir is not None and dataset["source"] == "jsonl":
        for key in ("train", "test"):
            if key in dataset and not Path(dataset[key]).is_absolute():
                dataset[key] = str(Path(base_dir) / dataset[key])

    setting = None
    if obj.get("setting") is not None:
        _reject_unknown(obj["setting"], {"dataset", "n_context"}, "setting")
        setting = ExperimentSetting(str(obj["setting"]["dataset"]), int(obj["setting"].get("n_context", 0)))

    def resolve(p):
        if p is None or base_dir is None or Path(p).is_absolute():
            return p
        return str(Path(base_dir) / p)

    return RunConfig(
        template=obj.get("template", "RAG"),
        scheme=scheme,
        model=model,
        max_new_tokens=int(obj.get("max_new_tokens", 1)),
        dataset=dataset,
        space=parse_space(obj.get("space", {"preset": "rag"})),
        setting=setting,
        workers=int(obj.get("workers", 1)),
        out=resolve(obj.get("out")),
        cache=resolve(obj.get("cache")),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(obj, base_dir=path.parent)
