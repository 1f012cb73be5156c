import math

import pytest
from hypothesis import given, settings, strategies as st

from fairrerank.core import ConfigError, UnknownIdError
from fairrerank.grouping import (
    GroupingConfig,
    activity_score,
    assign_groups,
    distribution_report,
    load_groups,
    save_groups,
)

from conftest import make_log


def log_with_counts(counts):
    """One user per entry, interacting `count` times with distinct items."""
    rows = []
    for idx, count in enumerate(counts):
        user = f"u{idx:05d}"
        rows.extend((user, f"i{idx:05d}_{j}", 5, j) for j in range(count))
    return make_log(rows)


class TestActivityScore:
    def test_interaction_count(self):
        log = make_log([("u1", f"i{j}", 5, j) for j in range(7)])
        assert activity_score(log, "u1", "interactions") == 7.0

    def test_total_consumption(self):
        log = make_log([("u1", "a", 5, 0, 3.0), ("u1", "b", 5, 1, 5.5)])
        assert activity_score(log, "u1", "total_consumption") == pytest.approx(8.5)

    def test_max_price(self):
        log = make_log([("u1", "a", 5, 0, 3.0), ("u1", "b", 5, 1, 5.5)])
        assert activity_score(log, "u1", "max_price") == pytest.approx(5.5)

    def test_missing_prices_contribute_zero(self):
        log = make_log([("u1", "a", 5, 0), ("u1", "b", 5, 1, 2.0)])
        assert activity_score(log, "u1", "total_consumption") == pytest.approx(2.0)
        assert activity_score(log, "u1", "max_price") == pytest.approx(2.0)

    def test_unknown_method_and_user(self):
        log = make_log([("u1", "a", 5, 0)])
        with pytest.raises(ConfigError):
            activity_score(log, "u1", "popularity")
        with pytest.raises(UnknownIdError):
            activity_score(log, "u2", "interactions")


class TestAssignGroups:
    def test_hundred_users_five_percent(self):
        log = log_with_counts(range(1, 101))
        groups = assign_groups(log, GroupingConfig("interactions", 0.05))
        assert len(groups.advantaged) == 5
        assert len(groups.disadvantaged) == 95
        # the five highest-count users
        assert groups.advantaged == {f"u{i:05d}" for i in range(95, 100)}

    def test_ceiling_at_grocery_scale(self):
        """ceil(0.05 * 14681) users in the advantaged group."""
        log = log_with_counts([1] * 14681)
        groups = assign_groups(log, GroupingConfig("interactions", 0.05))
        assert len(groups.advantaged) == math.ceil(0.05 * 14681) == 735

    def test_ties_break_lexicographically(self):
        log = log_with_counts([3] * 100)
        groups = assign_groups(log, GroupingConfig("interactions", 0.05))
        assert groups.advantaged == {f"u{i:05d}" for i in range(5)}

    def test_partition_invariants_hold(self):
        log = log_with_counts([5, 1, 9, 9, 2, 7, 1])
        groups = assign_groups(log, GroupingConfig("interactions", 0.3))
        assert groups.advantaged | groups.disadvantaged == set(log.user_ids)
        assert not groups.advantaged & groups.disadvantaged

    @given(
        st.lists(st.integers(1, 12), min_size=2, max_size=25),
        st.integers(1, 19),
        st.integers(1, 19),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_top_fraction(self, counts, pct_a, pct_b):
        """Raising the fraction never evicts anyone from the advantaged group."""
        lo, hi = sorted((pct_a, pct_b))
        log = log_with_counts(counts)
        small = assign_groups(log, GroupingConfig("interactions", lo / 20))
        large = assign_groups(log, GroupingConfig("interactions", hi / 20))
        assert small.advantaged <= large.advantaged


class TestDistributionReport:
    def test_threshold_zero_includes_everyone(self):
        log = log_with_counts([1, 5, 9])
        assert distribution_report(log, [0], "interactions") == [(0.0, 1.0)]

    def test_uniform_nine_count_log(self):
        log = log_with_counts([9] * 6)
        (_, at_ten), = distribution_report(log, [10], "interactions")
        assert at_ten == 0.0

    def test_fraction_values(self):
        log = log_with_counts([2, 5, 5, 11])
        report = distribution_report(log, [5, 10], "interactions")
        assert report == [(5.0, 0.75), (10.0, 0.25)]

    def test_requires_sorted_thresholds(self):
        log = log_with_counts([3])
        with pytest.raises(ConfigError):
            distribution_report(log, [10, 5], "interactions")

    @given(st.lists(st.integers(1, 30), min_size=1, max_size=20))
    @settings(max_examples=50, deadline=None)
    def test_fractions_non_increasing(self, counts):
        log = log_with_counts(counts)
        report = distribution_report(log, [0, 2, 5, 10, 20], "interactions")
        fractions = [f for _, f in report]
        assert all(a >= b for a, b in zip(fractions, fractions[1:]))


class TestGroupFile:
    def test_roundtrip(self, tmp_path):
        log = log_with_counts([4, 9, 1, 6])
        groups = assign_groups(log, GroupingConfig("interactions", 0.25))
        path = tmp_path / "groups.csv"
        save_groups(groups, path)
        loaded = load_groups(path)
        assert loaded.advantaged == groups.advantaged
        assert loaded.disadvantaged == groups.disadvantaged
