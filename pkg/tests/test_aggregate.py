import csv

import pytest
from hypothesis import given, settings, strategies as st

from poseng.aggregate import (
    ExperimentSetting,
    average_percentiles,
    heatmap_export,
    percentile_rank,
    universal_config,
    write_heatmap_csv,
)
from poseng.errors import ConfigurationError, DomainError
from poseng.positions import GapVector
from poseng.search import ScoreTable, enumerate_space, rag_space

scores_st = st.lists(st.integers(0, 10).map(lambda x: x / 10), min_size=2, max_size=30)


def test_percentile_examples():
    assert percentile_rank([0.1, 0.2, 0.3], 0.3) == 100
    assert percentile_rank([0.1, 0.2, 0.3], 0.1) == 0
    assert percentile_rank([0.1, 0.2, 0.3], 0.2) == 50
    assert percentile_rank([0.5, 0.5, 0.5, 0.5], 0.5) == 50
    assert percentile_rank([0.1, 0.5, 0.5], 0.5) == 75


def test_percentile_errors():
    with pytest.raises(DomainError):
        percentile_rank([0.3], 0.3)
    with pytest.raises(DomainError):
        percentile_rank([0.1, 0.2], 0.7)


@given(scores_st)
def test_mean_percentile_is_fifty(scores):
    mean = sum(percentile_rank(scores, s) for s in scores) / len(scores)
    assert mean == pytest.approx(50, abs=1e-9)


@given(scores_st)
def test_percentile_monotone(scores):
    ranked = sorted(scores)
    ps = [percentile_rank(scores, s) for s in ranked]
    assert ps == sorted(ps)


def _tables(values_per_setting):
    thetas = [GapVector(A=100 * i, B=0) for i in range(len(values_per_setting[0]))]
    return {
        ExperimentSetting(f"d{k}", 1): ScoreTable.from_means(dict(zip(thetas, vals)))
        for k, vals in enumerate(values_per_setting)
    }


@settings(max_examples=50)
@given(st.integers(2, 12).flatmap(lambda n: st.lists(st.lists(st.integers(0, 5), min_size=n, max_size=n), min_size=1, max_size=4)), st.floats(0.1, 10), st.floats(-5, 5))
def test_affine_invariance(values, scale, shift):
    base = average_percentiles(_tables(values))
    moved = average_percentiles(_tables([[scale * v + shift for v in row] for row in values]))
    assert base.average == moved.average
    assert universal_config(base) == universal_config(moved)


def test_universal_tie_breaks_lexicographically():
    report = average_percentiles(_tables([[0.1, 0.9, 0.9], [0.2, 0.9, 0.9]]))
    assert universal_config(report) == GapVector(A=100, B=0)


def test_mismatch_lists_difference():
    a = ScoreTable.from_means({GapVector(A=0): 0.1, GapVector(A=100): 0.2})
    b = ScoreTable.from_means({GapVector(A=0): 0.1, GapVector(A=200): 0.2})
    with pytest.raises(ConfigurationError, match="A.*100"):
        average_percentiles({ExperimentSetting("x", 1): a, ExperimentSetting("y", 1): b})


def test_too_few_thetas():
    with pytest.raises(DomainError):
        average_percentiles(_tables([[0.3]]))
    with pytest.raises(DomainError):
        average_percentiles({})


def test_all_equal_gives_fifty():
    report = average_percentiles(_tables([[0.4] * 5, [0.7] * 5]))
    assert set(report.average.values()) == {50.0}


def test_heatmap_dense_grid(tmp_path):
    thetas = enumerate_space(rag_space())
    means = {t: (t["A"] * 7 + t["B"] * 3) % 11 / 10 for t in thetas}
    report = average_percentiles({ExperimentSetting("toy", 1): ScoreTable.from_means(means)})
    cells = heatmap_export(report)
    assert len(cells) == 26 * 26
    present = [c for c in cells if c.percentile is not None]
    assert len(present) == 351
    lookup = {(c.theta_a, c.theta_b): c.percentile for c in cells}
    assert lookup[2500, 100] is None
    assert lookup[1900, 400] == report.average[GapVector(A=1900, B=400)]
    path = write_heatmap_csv(cells, tmp_path / "h.csv")
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 676 and sum(1 for r in rows if r["percentile"] == "") == 325


def test_heatmap_requires_two_labels():
    report = average_percentiles(_tables([[0.1, 0.2]]))
    with pytest.raises(ConfigurationError):
        heatmap_export(report, "A", "mid")
