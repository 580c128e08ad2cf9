import itertools

import numpy as np
import pytest

from parachute.errors import DanglingForeignKeyError, DescriptorError, NullValueError
from parachute.histogram import (
    NULL_BIN,
    EquiDepthHistogram,
    HistogramKind,
    WeightedSample,
    build_equidepth,
    estimate_distribution,
    min_max_partition,
)
from parachute.storage import TableData

from conftest import int_column


def brute_force_max(weights, groups):
    best = sum(weights)
    n = len(weights)
    for k in range(1, min(groups, n) + 1):
        for cuts in itertools.combinations(range(1, n), k - 1):
            bounds = (0,) + cuts + (n,)
            worst = max(sum(weights[a:b]) for a, b in zip(bounds, bounds[1:]))
            best = min(best, worst)
    return best


def group_weights(weights, ends):
    out, start = [], 0
    for end in ends:
        out.append(sum(weights[start:end]))
        start = end
    return out


def test_upper_inclusive_boundaries():
    hist = EquiDepthHistogram.from_boundaries([2000, 2004, 2020], pbw=2)
    assert [hist.bin(y) for y in (1995, 2000, 2001, 2004, 2015, 2020, 2021, 3000)] == [0, 0, 1, 1, 2, 2, 3, 3]
    codes = hist.bin_many(np.array([1995, 2015, 3000]))
    assert codes.tolist() == [0, 2, 3]


def test_boundaries_must_fit_and_increase():
    with pytest.raises(DescriptorError):
        EquiDepthHistogram.from_boundaries([1, 2, 3, 4], pbw=2)
    with pytest.raises(DescriptorError):
        EquiDepthHistogram.from_boundaries([5, 5], pbw=2)


def test_null_bin():
    hist = EquiDepthHistogram.from_boundaries([10, 20], pbw=2, nullable=True)
    assert hist.bin(None) == NULL_BIN
    assert hist.bin(3) == 1
    assert hist.last_value_bin == 3
    codes = hist.bin_many(np.array([3, 0, 25]), np.array([False, True, False]))
    assert codes.tolist() == [1, 0, 3]
    with pytest.raises(NullValueError):
        EquiDepthHistogram.from_boundaries([10], pbw=2).bin(None)


@pytest.mark.parametrize("seed", range(200))
def test_min_max_partition_is_optimal(seed):
    rng = np.random.default_rng(seed)
    weights = rng.integers(1, 50, size=int(rng.integers(1, 21))).tolist()
    groups = int(rng.integers(1, 5))
    ends = min_max_partition(weights, groups)
    assert ends[-1] == len(weights)
    # ties go to more groups: the budget is used up unless every value has its own
    assert len(ends) == min(groups, len(weights))
    assert ends == sorted(set(ends))
    assert max(group_weights(weights, ends)) == brute_force_max(weights, groups)


def test_equal_weights_spread_evenly():
    ends = min_max_partition([1] * 8, 4)
    assert group_weights([1] * 8, ends) == [2, 2, 2, 2]


def test_spare_groups_are_spent():
    # one heavy value forces the maximum; the rest still get their own bins
    ends = min_max_partition([100, 1, 1, 1], 4)
    assert ends == [1, 2, 3, 4]


def test_build_single_value():
    hist = build_equidepth(WeightedSample([5], [10]), pbw=4)
    assert hist.bins == 1
    assert hist.boundaries == []
    assert hist.bin(-100) == hist.bin(5) == hist.bin(100) == 0


def test_build_respects_budget():
    values = list(range(100))
    hist = build_equidepth(WeightedSample(values, [1] * 100), pbw=3)
    assert hist.bins == 8
    assert max(hist.bin_weights) == 13
    assert sorted({hist.bin(v) for v in values}) == list(range(8))


def test_build_with_null_and_reserved_marker():
    sample = WeightedSample(list(range(10)), [1] * 10, contains_null=True)
    hist = build_equidepth(sample, pbw=2, reserved_slots=1)
    assert hist.nullable
    assert hist.bins == 2
    assert hist.bin(None) == 0
    assert {hist.bin(v) for v in range(10)} == {1, 2}


def test_no_bins_left():
    with pytest.raises(DescriptorError):
        build_equidepth(WeightedSample([1], [1], contains_null=True), pbw=1, reserved_slots=1)


def test_lowcard_overflow_goes_to_heaviest_bin():
    hist = build_equidepth(WeightedSample(["a", "b", "c"], [5, 1, 1]), pbw=1, kind=HistogramKind.LOWCARD)
    assert hist.value_bins == {"a": 0, "b": 1, "c": 1}
    assert hist.overflow_bin == 0
    assert hist.bin("zzz") == 0


def test_per_value_bins():
    hist = build_equidepth(WeightedSample([1, 2, 3], [4, 4, 4]), pbw=2)
    assert hist.per_value_bins
    coarse = build_equidepth(WeightedSample(list(range(10)), [1] * 10), pbw=2)
    assert not coarse.per_value_bins


def test_histogram_dict_roundtrip():
    hist = build_equidepth(WeightedSample(["x", "y"], [3, 1], contains_null=True), pbw=2, kind=HistogramKind.LOWCARD)
    again = EquiDepthHistogram.from_dict(hist.to_dict())
    assert again.value_bins == hist.value_bins
    assert again.bin(None) == 0 and again.bin("x") == hist.bin("x")


def test_estimate_distribution(cast_database):
    sample = estimate_distribution(cast_database, "cast_info", "title", "production_year", m=100, seed=0)
    assert sample.pairs() == [(1995, 2), (2015, 2), (3000, 1)]
    assert not sample.contains_null


def test_estimate_distribution_dangling(cast_database):
    cast_info = cast_database.table("cast_info")
    cast_info.append_columns(TableData("cast_info", {
        "id": int_column("id", [6]),
        "movie_id": int_column("movie_id", [999]),
    }))
    with pytest.raises(DanglingForeignKeyError):
        estimate_distribution(cast_database, "cast_info", "title", "production_year", m=100, seed=0)
    relaxed = estimate_distribution(cast_database, "cast_info", "title", "production_year", m=100, seed=0,
                                    relaxed=True)
    assert relaxed.total_weight == 5
