"""Shared builders for tests: small logs, candidate pools, random problem
instances for solver cross-checks."""

from __future__ import annotations

import numpy as np
import pytest

from fairrerank.core import Candidate, CandidateSet, GroupAssignment, Interaction, InteractionLog
from fairrerank.rerank import build_problem


def make_log(rows) -> InteractionLog:
    """rows: iterable of (user, item, rating, timestamp[, price])."""
    return InteractionLog.from_interactions(
        Interaction(
            user_id=r[0],
            item_id=r[1],
            rating=float(r[2]),
            timestamp=int(r[3]),
            price=float(r[4]) if len(r) > 4 and r[4] is not None else None,
        )
        for r in rows
    )


def make_candidate_set(user_id, triples, n_relevant_total=None) -> CandidateSet:
    """triples: iterable of (item, score, relevant); sorted here."""
    cands = sorted(
        (Candidate(item, float(score), bool(rel)) for item, score, rel in triples),
        key=lambda c: (-c.score, c.item_id),
    )
    if n_relevant_total is None:
        n_relevant_total = sum(1 for c in cands if c.relevant)
    return CandidateSet(user_id=user_id, candidates=tuple(cands), n_relevant_total=n_relevant_total)


def make_groups(advantaged, disadvantaged, method="interactions") -> GroupAssignment:
    n = len(advantaged) + len(disadvantaged)
    return GroupAssignment(
        advantaged=frozenset(advantaged),
        disadvantaged=frozenset(disadvantaged),
        method=method,
        top_fraction=max(len(advantaged) - 0.5, 0.5) / n,
    )


def random_problem(rng: np.random.Generator, epsilon, max_users=4, max_candidates=5, max_k=2):
    """A small random instance with at least one user per group."""
    n_users = int(rng.integers(2, max_users + 1))
    k = int(rng.integers(1, max_k + 1))
    users = [f"u{i:02d}" for i in range(n_users)]
    n_adv = int(rng.integers(1, n_users))
    groups = make_groups(users[:n_adv], users[n_adv:])
    cands = []
    for u in users:
        n = int(rng.integers(k, max_candidates + 1))
        scores = rng.random(n)
        relevant = rng.random(n) < 0.4
        total = max(1, int(relevant.sum()) + int(rng.integers(0, 3)))
        cands.append(
            make_candidate_set(
                u,
                [(f"i{j:02d}", float(scores[j]), bool(relevant[j])) for j in range(n)],
                n_relevant_total=total,
            )
        )
    return build_problem(cands, groups, k=k, epsilon=epsilon)


@pytest.fixture
def two_user_problem():
    """The canonical 2x2 instance: one advantaged user holding the top
    relevant item, one disadvantaged user whose relevant item ranks second."""
    groups = make_groups(["u1"], ["u2"])
    c1 = make_candidate_set("u1", [("a", 0.9, True), ("b", 0.5, False)], n_relevant_total=1)
    c2 = make_candidate_set("u2", [("c", 0.8, False), ("d", 0.7, True)], n_relevant_total=1)

    def build(epsilon):
        return build_problem([c1, c2], groups, k=1, epsilon=epsilon)

    return build
