"""Brute-force search over gap vectors.

Every candidate is scored on every training sample; the candidate with the
highest mean wins, ties going to the lexicographically smallest vector.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Mapping, Optional, Protocol, Sequence

from poseng.errors import ConfigurationError, DomainError
from poseng.positions import GapVector, PositionMap
from poseng.prompts import SegmentedPrompt, gaps_to_position_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Axis:
    """Inclusive arithmetic sequence ``start, start+step, ..., <= stop``."""

    start: int
    step: int
    stop: int

    def __post_init__(self):
        if self.start < 0 or self.step <= 0 or self.stop < self.start:
            raise ConfigurationError(f"invalid axis {self}")

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(range(self.start, self.stop + 1, self.step))


@dataclass(frozen=True)
class SumConstraint:
    """Sum of the listed labels must not exceed ``bound``."""

    labels: tuple[str, ...]
    bound: int

    def admits(self, theta: Mapping[str, int]) -> bool:
        return sum(theta[label] for label in self.labels) <= self.bound


@dataclass(frozen=True)
class SearchSpace:
    axes: tuple[tuple[str, tuple[int, ...]], ...]
    constraint: Optional[SumConstraint] = None

    def __post_init__(self):
        axes = tuple((str(label), tuple(int(v) for v in values)) for label, values in self.axes)
        labels = [label for label, _ in axes]
        if not axes:
            raise ConfigurationError("search space needs at least one axis")
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"duplicate axis labels in {labels}")
        for label, values in axes:
            if not values:
                raise ConfigurationError(f"axis {label!r} has no candidates")
            if any(v < 0 for v in values) or list(values) != sorted(set(values)):
                raise ConfigurationError(f"axis {label!r} must be non-negative and strictly ascending")
        if self.constraint is not None:
            constraint = SumConstraint(tuple(self.constraint.labels), int(self.constraint.bound))
            if not set(constraint.labels) <= set(labels):
                raise ConfigurationError(f"constraint labels {constraint.labels} not all in {labels}")
            object.__setattr__(self, "constraint", constraint)
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_axes(cls, axes: Mapping[str, Axis | Sequence[int]], constraint: Optional[SumConstraint] = None) -> SearchSpace:
        return cls(
            tuple((label, ax.values if isinstance(ax, Axis) else tuple(ax)) for label, ax in axes.items()),
            constraint,
        )

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.axes)

    def baseline(self) -> GapVector:
        return GapVector.zeros(self.labels)

    def __contains__(self, theta: object) -> bool:
        if not isinstance(theta, Mapping) or tuple(theta) != self.labels:
            return False
        values = dict(self.axes)
        if any(theta[label] not in values[label] for label in self.labels):
            return False
        return self.constraint is None or self.constraint.admits(theta)

    def to_dict(self) -> dict:
        out: dict = {"axes": {label: list(values) for label, values in self.axes}}
        if self.constraint is not None:
            out["constraint"] = {"labels": list(self.constraint.labels), "bound": self.constraint.bound}
        return out

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def rag_space(step: int = 100, limit: int = 2500) -> SearchSpace:
    """Two gaps on ``0..limit`` with their sum capped at ``limit``."""
    ax = Axis(0, step, limit)
    return SearchSpace.from_axes({"A": ax, "B": ax}, SumConstraint(("A", "B"), limit))


def icl_space() -> SearchSpace:
    return SearchSpace.from_axes({"A": Axis(0, 100, 600), "mid": Axis(0, 20, 100), "B": Axis(0, 100, 600)})


def enumerate_space(space: SearchSpace) -> list[GapVector]:
    """All admissible candidates in lexicographic order over declared labels."""
    labels = space.labels
    out = []
    for combo in product(*(values for _, values in space.axes)):
        theta = GapVector(zip(labels, combo))
        if space.constraint is None or space.constraint.admits(theta):
            out.append(theta)
    return out


@dataclass(frozen=True)
class ScoreEntry:
    mean: float
    count: int


class ScoreTable(Mapping):
    """Mean score per gap vector, iterated in lexicographic order."""

    def __init__(self, entries: Mapping[GapVector, ScoreEntry] | Iterable[tuple[GapVector, ScoreEntry]] = ()):
        items = entries.items() if isinstance(entries, Mapping) else entries
        self._entries = dict(sorted(items, key=lambda kv: kv[0].sort_key()))

    @classmethod
    def from_means(cls, means: Mapping[GapVector, float], count: int = 1) -> ScoreTable:
        return cls((theta, ScoreEntry(float(m), count)) for theta, m in means.items())

    def __getitem__(self, theta: GapVector) -> ScoreEntry:
        return self._entries[theta]

    def __iter__(self):
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def means(self) -> dict[GapVector, float]:
        return {theta: e.mean for theta, e in self._entries.items()}

    def to_rows(self) -> list[dict]:
        return [{"theta": theta.to_dict(), "mean": e.mean, "count": e.count} for theta, e in self._entries.items()]

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping]) -> ScoreTable:
        return cls((GapVector(r["theta"]), ScoreEntry(float(r["mean"]), int(r["count"]))) for r in rows)

    def __repr__(self) -> str:
        return f"ScoreTable({len(self)} candidates)"


def best_config(table: Mapping[GapVector, ScoreEntry | float]) -> GapVector:
    if not table:
        raise DomainError("cannot pick the best configuration of an empty table")

    def mean(theta):
        v = table[theta]
        return v.mean if isinstance(v, ScoreEntry) else float(v)

    return min(table, key=lambda theta: (-mean(theta), theta.sort_key()))


@dataclass(frozen=True)
class SearchSample:
    """One training item: a rendered prompt and its acceptable answers."""

    sample_id: str
    prompt: SegmentedPrompt
    answers: tuple[str, ...]


class Evaluator(Protocol):
    """Scores one prompt under one position map, in [0, 1].

    Implementations must be deterministic. Set ``thread_safe = False`` to
    force serial evaluation.
    """

    def score(self, prompt: SegmentedPrompt, position_map: PositionMap, answers: Sequence[str]) -> float: ...


@dataclass(frozen=True)
class Failure:
    theta: GapVector
    sample_id: str
    error: str


@dataclass
class SearchResult:
    table: ScoreTable
    best: GapVector
    space: SearchSpace
    invalid: dict[GapVector, list[Failure]] = field(default_factory=dict)

    @property
    def baseline(self) -> GapVector:
        return self.space.baseline()


class Cache(Protocol):
    def get(self, theta: GapVector, sample_id: str) -> Optional[float]: ...

    def put(self, theta: GapVector, sample_id: str, score: float) -> None: ...


def grid_search(
    space: SearchSpace,
    evaluator: Evaluator,
    samples: Sequence[SearchSample],
    workers: int = 1,
    cache: Optional[Cache] = None,
    candidates: Optional[Sequence[GapVector]] = None,
) -> SearchResult:
    """Score every candidate on every sample and pick the argmax mean.

    Any sample that raises marks its candidate invalid; invalid candidates
    are left out of the table and reported in ``SearchResult.invalid``.
    Means are computed with ``math.fsum`` over samples in input order, so the
    result does not depend on completion order or worker count.
    """
    if not samples:
        raise DomainError("grid search needs at least one sample")
    ids = [s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("sample ids must be unique")
    candidates = enumerate_space(space) if candidates is None else list(candidates)

    def run(job):
        theta, sample = job
        if cache is not None:
            hit = cache.get(theta, sample.sample_id)
            if hit is not None:
                return job, hit, None
        try:
            position_map = gaps_to_position_map(sample.prompt, theta)
            value = float(evaluator.score(sample.prompt, position_map, sample.answers))
        except Exception as exc:  # surfaced per candidate, never dropped
            return job, None, f"{type(exc).__name__}: {exc}"
        if cache is not None:
            cache.put(theta, sample.sample_id, value)
        return job, value, None

    jobs = [(theta, s) for theta in candidates for s in samples]
    if workers > 1 and getattr(evaluator, "thread_safe", True):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    scores: dict[tuple[GapVector, str], float] = {}
    invalid: dict[GapVector, list[Failure]] = {}
    for (theta, sample), value, error in results:
        if error is not None:
            invalid.setdefault(theta, []).append(Failure(theta, sample.sample_id, error))
        else:
            scores[theta, sample.sample_id] = value

    entries = []
    for theta in candidates:
        if theta in invalid:
            continue
        total = math.fsum(scores[theta, i] for i in ids)
        entries.append((theta, ScoreEntry(total / len(ids), len(ids))))
    if invalid:
        log.warning("%d of %d candidates invalid", len(invalid), len(candidates))
    table = ScoreTable(entries)
    if not table:
        raise DomainError("every candidate failed; see SearchResult.invalid")
    return SearchResult(table, best_config(table), space, invalid)
