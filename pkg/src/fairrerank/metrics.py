"""Top-K ranking metrics and their group-level aggregation.

F1@K has the closed form 2h/(K+T) for h hits among the first K positions
and T total relevant items, which is linear in the selection indicators
for fixed K. That linearity is what lets the re-ranker express the
fairness gap as a linear constraint; ``f1_linear_coeffs`` exposes the
per-candidate coefficients of that exact identity.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    ADVANTAGED,
    CandidateSet,
    GroupAssignment,
    GroupReport,
    MetricUndefinedError,
    UnknownIdError,
    ValidationError,
)

METRIC_F1 = "F1"
METRIC_NDCG = "NDCG"


def f1_at_k(
    reclist: Sequence[str],
    relevant: Iterable[str],
    k: int,
    n_relevant_total: int,
) -> float:
    """F1 of the first ``k`` recommendations: 2h / (k + T).

    ``n_relevant_total`` (T) is the user's total relevant-item count in
    the ground truth, which may exceed the relevant items present in
    ``reclist``.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if len(reclist) < k:
        raise ValidationError(f"recommendation list has {len(reclist)} < k={k} items")
    if n_relevant_total < 1:
        raise MetricUndefinedError("F1@K is undefined for a user with no relevant items")
    relevant = set(relevant)
    hits = sum(1 for item in reclist[:k] if item in relevant)
    return 2.0 * hits / (k + n_relevant_total)


def ndcg_at_k(reclist: Sequence[str], relevant: Iterable[str], k: int) -> float:
    """Binary-gain NDCG of the first ``k`` recommendations.

    DCG uses the standard log2(position + 1) discount; the ideal ranking
    places all relevant items first, capped at ``k``.
    """
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if len(reclist) < k:
        raise ValidationError(f"recommendation list has {len(reclist)} < k={k} items")
    relevant = set(relevant)
    if not relevant:
        raise MetricUndefinedError("NDCG@K is undefined for a user with no relevant items")
    dcg = 0.0
    for pos, item in enumerate(reclist[:k], start=1):
        if item in relevant:
            dcg += 1.0 / math.log2(pos + 1)
    ideal_hits = min(len(relevant), k)
    idcg = sum(1.0 / math.log2(pos + 1) for pos in range(1, ideal_hits + 1))
    return dcg / idcg


def f1_linear_coeffs(cand: CandidateSet, k: int) -> np.ndarray:
    """Per-candidate coefficients whose selected sum equals F1@k exactly.

    For any size-k selection W of the candidate slots,
    sum_j W_j * coeff_j == f1_at_k(selected items), with coeff_j =
    (2 / (k + T)) * relevant_j. This is an identity, not an approximation.
    """
    if cand.n_relevant_total < 1:
        raise MetricUndefinedError(
            f"user {cand.user_id!r} has n_relevant_total == 0; F1 coefficients undefined"
        )
    scale = 2.0 / (k + cand.n_relevant_total)
    return np.array([scale if c.relevant else 0.0 for c in cand.candidates])


def group_report(
    per_user_metric: Mapping[str, float],
    groups: GroupAssignment,
    metric_name: str,
    k: int,
) -> GroupReport:
    """Aggregate a per-user metric into overall/group means and the gap.

    Every evaluated user must belong to exactly one group and both groups
    must contain at least one evaluated user; the gap (``ugf``) is the
    absolute difference of the two group means.
    """
    if not per_user_metric:
        raise ValidationError("no evaluated users")
    adv_values: list[float] = []
    dis_values: list[float] = []
    for user_id in sorted(per_user_metric):
        value = per_user_metric[user_id]
        try:
            group = groups.group_of(user_id)
        except UnknownIdError:
            raise ValidationError(
                f"evaluated user {user_id!r} is missing from the group assignment"
            ) from None
        (adv_values if group == ADVANTAGED else dis_values).append(value)
    if not adv_values or not dis_values:
        empty = "advantaged" if not adv_values else "disadvantaged"
        raise ValidationError(f"no evaluated users in the {empty} group")
    adv_mean = float(np.mean(adv_values))
    dis_mean = float(np.mean(dis_values))
    overall = float(np.mean(adv_values + dis_values))
    return GroupReport(
        metric=metric_name,
        k=k,
        overall=overall,
        advantaged=adv_mean,
        disadvantaged=dis_mean,
        ugf=abs(adv_mean - dis_mean),
        n_advantaged=len(adv_values),
        n_disadvantaged=len(dis_values),
    )


def per_user_f1(
    lists: Mapping[str, Sequence[str]],
    candidate_sets: Mapping[str, CandidateSet],
    k: int,
) -> dict[str, float]:
    """F1@k of each user's recommendation list against its candidate labels."""
    return {
        u: f1_at_k(lists[u], candidate_sets[u].relevant_items, k,
                   candidate_sets[u].n_relevant_total)
        for u in lists
    }


def per_user_ndcg(
    lists: Mapping[str, Sequence[str]],
    candidate_sets: Mapping[str, CandidateSet],
    k: int,
) -> dict[str, float]:
    """NDCG@k of each user's recommendation list against its candidate labels."""
    return {
        u: ndcg_at_k(lists[u], candidate_sets[u].relevant_items, k)
        for u in lists
    }


def report_to_json(report: GroupReport) -> dict:
    """External rendering of a group report: percent values, 2-decimal
    headline numbers, full precision preserved in a parallel field."""
    precise = {
        "overall": report.overall * 100.0,
        "advantaged": report.advantaged * 100.0,
        "disadvantaged": report.disadvantaged * 100.0,
        "ugf": report.ugf * 100.0,
    }
    return {
        "metric": report.metric,
        "k": report.k,
        "overall": round(precise["overall"], 2),
        "advantaged": round(precise["advantaged"], 2),
        "disadvantaged": round(precise["disadvantaged"], 2),
        "ugf": round(precise["ugf"], 2),
        "n_users_per_group": {
            "advantaged": report.n_advantaged,
            "disadvantaged": report.n_disadvantaged,
        },
        "precise": precise,
    }
