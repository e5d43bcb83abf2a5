"""Percentile ranks of gap vectors across experiment settings.

Absolute scores differ between datasets, so each setting's scores are turned
into percentile ranks first and the ranks are averaged. The rank of ``s`` in
a multiset ``S`` is

    100 * (#{x < s} + 0.5 * #{x == s, other elements}) / (|S| - 1)

which puts the minimum at 0, the maximum at 100 and averages ties. Within one
setting the ranks always average to exactly 50.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from poseng.errors import ConfigurationError, DomainError
from poseng.positions import GapVector
from poseng.search import ScoreEntry, best_config


@dataclass(frozen=True, order=True)
class ExperimentSetting:
    dataset: str
    n_context: int = 0

    def __str__(self) -> str:
        return f"{self.dataset}/{self.n_context}"


def percentile_rank(scores: Sequence[float], s: float) -> float:
    if len(scores) < 2:
        raise DomainError("percentile rank needs at least two scores")
    below = sum(1 for x in scores if x < s)
    equal = sum(1 for x in scores if x == s)
    if equal == 0:
        raise DomainError(f"{s!r} is not one of the scores")
    return 100.0 * (below + 0.5 * (equal - 1)) / (len(scores) - 1)


def _setting_percentiles(means: Mapping[GapVector, float]) -> dict[GapVector, float]:
    ordered = sorted(means.values())
    n = len(ordered)
    out = {}
    for theta, s in means.items():
        lo = bisect.bisect_left(ordered, s)
        hi = bisect.bisect_right(ordered, s)
        out[theta] = 100.0 * (lo + 0.5 * (hi - lo - 1)) / (n - 1)
    return out


def _means(table) -> dict[GapVector, float]:
    return {t: (v.mean if isinstance(v, ScoreEntry) else float(v)) for t, v in table.items()}


@dataclass(frozen=True)
class PercentileReport:
    average: dict[GapVector, float]
    settings: tuple[ExperimentSetting, ...]
    per_setting: dict[ExperimentSetting, dict[GapVector, float]]

    def to_rows(self) -> list[dict]:
        return [{"theta": t.to_dict(), "percentile": p} for t, p in sorted(self.average.items(), key=lambda kv: kv[0].sort_key())]


def average_percentiles(tables: Mapping[ExperimentSetting, Mapping[GapVector, object]]) -> PercentileReport:
    """Per-setting percentile of every gap vector, then the mean over settings."""
    if not tables:
        raise DomainError("no experiment settings to aggregate")
    settings = tuple(tables)
    reference = set(tables[settings[0]])
    for setting in settings[1:]:
        other = set(tables[setting])
        if other != reference:
            diff = sorted(reference ^ other, key=lambda t: t.sort_key())
            raise ConfigurationError(f"setting {setting} covers a different gap set; symmetric difference: {diff}")
    if len(reference) < 2:
        raise DomainError("percentile ranks need at least two gap vectors per setting")

    per_setting = {s: _setting_percentiles(_means(tables[s])) for s in settings}
    average = {
        theta: sum(per_setting[s][theta] for s in settings) / len(settings)
        for theta in sorted(reference, key=lambda t: t.sort_key())
    }
    return PercentileReport(average, settings, per_setting)


def universal_config(report: PercentileReport) -> GapVector:
    return best_config(report.average)


@dataclass(frozen=True)
class HeatmapCell:
    theta_a: int
    theta_b: int
    percentile: Optional[float]


def heatmap_export(report: PercentileReport, label_a: str = "A", label_b: str = "B") -> list[HeatmapCell]:
    """Dense (A, B) grid over every observed value of each axis.

    Cells missing from the report (e.g. excluded by a sum constraint) have
    ``percentile=None``. Rows are ordered by A, then B.
    """
    for theta in report.average:
        if set(theta.labels) != {label_a, label_b}:
            raise ConfigurationError(f"heatmap needs exactly labels {{{label_a}, {label_b}}}, got {theta.labels}")
    lookup = {(t[label_a], t[label_b]): p for t, p in report.average.items()}
    a_values = sorted({a for a, _ in lookup})
    b_values = sorted({b for _, b in lookup})
    return [HeatmapCell(a, b, lookup.get((a, b))) for a in a_values for b in b_values]


def write_heatmap_csv(cells: Sequence[HeatmapCell], path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["theta_a", "theta_b", "percentile"])
        for c in cells:
            writer.writerow([c.theta_a, c.theta_b, "" if c.percentile is None else repr(c.percentile)])
    return path
