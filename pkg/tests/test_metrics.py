import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrerank import metrics
from fairrerank.core import MetricUndefinedError, ValidationError

from conftest import make_candidate_set, make_groups


class TestF1:
    def test_perfect_list(self):
        items = [f"i{j}" for j in range(10)]
        assert metrics.f1_at_k(items, items, 10, 10) == 1.0

    def test_closed_form(self):
        # 2 hits in the top 10, 4 relevant overall -> 2*2 / (10+4)
        reclist = ["r1", "r2"] + [f"x{j}" for j in range(8)]
        assert metrics.f1_at_k(reclist, {"r1", "r2", "r3", "r4"}, 10, 4) == pytest.approx(4 / 14)

    def test_no_hits(self):
        assert metrics.f1_at_k(["a", "b"], {"z"}, 2, 3) == 0.0

    def test_undefined_without_relevant(self):
        with pytest.raises(MetricUndefinedError):
            metrics.f1_at_k(["a"], set(), 1, 0)

    def test_list_shorter_than_k(self):
        with pytest.raises(ValidationError):
            metrics.f1_at_k(["a"], {"a"}, 2, 1)

    @given(st.data())
    def test_matches_classic_harmonic_mean(self, data):
        """2h/(K+T) equals 2PR/(P+R) with P = h/K, R = h/T."""
        k = data.draw(st.integers(1, 12))
        t = data.draw(st.integers(1, 12))
        n_extra = data.draw(st.integers(0, 8))
        universe = [f"i{j}" for j in range(k + n_extra)]
        relevant = set(data.draw(st.permutations(universe))[:t])
        value = metrics.f1_at_k(universe, relevant, k, t)
        h = len(set(universe[:k]) & relevant)
        if h == 0:
            assert value == 0.0
        else:
            p, r = h / k, h / t
            assert value == pytest.approx(2 * p * r / (p + r))
        assert 0.0 <= value <= 1.0


class TestNdcg:
    def test_single_relevant_at_rank_one(self):
        assert metrics.ndcg_at_k(["hit", "x", "y"], {"hit"}, 3) == 1.0

    def test_single_relevant_at_rank_two(self):
        value = metrics.ndcg_at_k(["x", "hit", "y"], {"hit"}, 3)
        assert value == pytest.approx(1.0 / math.log2(3), abs=1e-5)
        assert value == pytest.approx(0.63093, abs=1e-5)

    def test_no_relevant_in_top_k(self):
        assert metrics.ndcg_at_k(["x", "y"], {"hit"}, 2) == 0.0

    def test_undefined_without_relevant(self):
        with pytest.raises(MetricUndefinedError):
            metrics.ndcg_at_k(["a"], set(), 1)

    @given(st.data())
    @settings(max_examples=200)
    def test_range_and_ideal_characterization(self, data):
        """0 <= NDCG <= 1, with 1 iff the top min(T, K) slots are all relevant."""
        k = data.draw(st.integers(1, 8))
        n = data.draw(st.integers(k, 14))
        universe = [f"i{j:02d}" for j in range(n)]
        order = data.draw(st.permutations(universe))
        t = data.draw(st.integers(1, n))
        relevant = set(universe[:t])
        value = metrics.ndcg_at_k(order, relevant, k)
        assert 0.0 <= value <= 1.0 + 1e-12
        ideal_prefix = all(item in relevant for item in order[: min(t, k)])
        assert (abs(value - 1.0) < 1e-12) == ideal_prefix


class TestF1LinearCoeffs:
    def test_formula(self):
        cand = make_candidate_set(
            "u1", [("a", 0.9, True), ("b", 0.5, False)], n_relevant_total=4
        )
        coeffs = metrics.f1_linear_coeffs(cand, 10)
        by_item = dict(zip([c.item_id for c in cand.candidates], coeffs))
        assert by_item["a"] == pytest.approx(2 / 14)
        assert by_item["b"] == 0.0

    def test_undefined_for_zero_relevant_total(self):
        cand = make_candidate_set("u1", [("a", 0.9, False)], n_relevant_total=0)
        with pytest.raises(MetricUndefinedError):
            metrics.f1_linear_coeffs(cand, 10)

    def test_identity_against_direct_f1(self):
        """The linear form reproduces F1 exactly on random size-K selections."""
        rng = np.random.default_rng(42)
        for _ in range(300):
            n = int(rng.integers(3, 12))
            k = int(rng.integers(1, n + 1))
            rel = rng.random(n) < 0.5
            total = max(1, int(rel.sum()) + int(rng.integers(0, 3)))
            cand = make_candidate_set(
                "u",
                [(f"i{j:02d}", float(rng.random()), bool(rel[j])) for j in range(n)],
                n_relevant_total=total,
            )
            coeffs = metrics.f1_linear_coeffs(cand, k)
            slots = rng.choice(n, size=k, replace=False)
            linear = float(coeffs[slots].sum())
            items = [cand.candidates[s].item_id for s in slots]
            direct = metrics.f1_at_k(items, cand.relevant_items, k, total)
            assert abs(linear - direct) <= 1e-12


class TestGroupReport:
    def test_gap_is_absolute_difference_of_means(self):
        groups = make_groups(["a1"], ["d1"])
        report = metrics.group_report({"a1": 36.02, "d1": 12.51}, groups, "F1", 10)
        assert report.ugf == pytest.approx(23.51, abs=0.005)
        report = metrics.group_report({"a1": 50.02, "d1": 39.17}, groups, "NDCG", 10)
        assert report.ugf == pytest.approx(10.85, abs=0.005)

    def test_identical_means_give_zero_gap(self):
        groups = make_groups(["a1"], ["d1", "d2"])
        report = metrics.group_report({"a1": 0.4, "d1": 0.3, "d2": 0.5}, groups, "F1", 10)
        assert report.ugf == 0.0

    def test_overall_is_mean_over_all_users(self):
        groups = make_groups(["a1"], ["d1", "d2"])
        report = metrics.group_report({"a1": 0.9, "d1": 0.1, "d2": 0.2}, groups, "F1", 10)
        assert report.overall == pytest.approx((0.9 + 0.1 + 0.2) / 3)
        assert report.n_advantaged == 1
        assert report.n_disadvantaged == 2

    def test_empty_group_rejected(self):
        groups = make_groups(["a1"], ["d1"])
        with pytest.raises(ValidationError):
            metrics.group_report({"a1": 0.5}, groups, "F1", 10)

    def test_ungrouped_user_rejected(self):
        groups = make_groups(["a1"], ["d1"])
        with pytest.raises(ValidationError):
            metrics.group_report({"a1": 0.5, "d1": 0.2, "ghost": 0.1}, groups, "F1", 10)

    @given(
        st.lists(st.floats(0, 1, width=32), min_size=1, max_size=6),
        st.lists(st.floats(0, 1, width=32), min_size=1, max_size=6),
        st.floats(-0.5, 0.5, width=32),
    )
    def test_symmetry_and_shift_invariance(self, adv_values, dis_values, shift):
        """Swapping groups or shifting every user by a constant keeps the gap."""
        adv = {f"a{i}": v for i, v in enumerate(adv_values)}
        dis = {f"d{i}": v for i, v in enumerate(dis_values)}
        groups = make_groups(list(adv), list(dis))
        swapped = make_groups(list(dis), list(adv))
        base = metrics.group_report({**adv, **dis}, groups, "F1", 10)
        mirror = metrics.group_report({**adv, **dis}, swapped, "F1", 10)
        assert base.ugf == pytest.approx(mirror.ugf, abs=1e-9)
        shifted = {u: v + shift for u, v in {**adv, **dis}.items()}
        assert metrics.group_report(shifted, groups, "F1", 10).ugf == pytest.approx(
            base.ugf, abs=1e-7
        )


class TestReportJson:
    def test_percent_rendering_with_full_precision(self):
        groups = make_groups(["a1"], ["d1"])
        report = metrics.group_report({"a1": 0.123456, "d1": 0.1}, groups, "F1", 10)
        payload = metrics.report_to_json(report)
        assert payload["advantaged"] == 12.35
        assert payload["precise"]["advantaged"] == pytest.approx(12.3456)
        assert payload["n_users_per_group"] == {"advantaged": 1, "disadvantaged": 1}
