"""Advantaged/disadvantaged user partitioning by activity level.

Users are ranked on the training split by one of three activity criteria
(interaction count, total consumption, maximum purchase price) and the
top fraction forms the advantaged group. Ties at the boundary are broken
lexicographically by user id so the partition is deterministic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .core import (
    ADVANTAGED,
    DISADVANTAGED,
    GROUPING_METHODS,
    ConfigError,
    GroupAssignment,
    InteractionLog,
    ParseError,
    UnknownIdError,
    ValidationError,
)


@dataclass(frozen=True)
class GroupingConfig:
    method: str = "interactions"
    top_fraction: float = 0.05

    def __post_init__(self):
        if self.method not in GROUPING_METHODS:
            raise ConfigError(
                f"unknown grouping method {self.method!r}; expected one of {GROUPING_METHODS}"
            )
        if not (0.0 < self.top_fraction < 1.0):
            raise ConfigError(f"top_fraction {self.top_fraction} outside (0, 1)")


def activity_score(train: InteractionLog, user_id: str, method: str) -> float:
    """A user's activity level on the training data under one criterion.

    Missing prices contribute 0 to the consumption criteria so the score
    is total over all users.
    """
    if user_id not in train.user_index:
        raise UnknownIdError(f"user {user_id!r} not present in the training log")
    rows = train.user_index[user_id]
    if method == "interactions":
        return float(len(rows))
    if method == "total_consumption":
        return float(sum(x.price or 0.0 for x in rows))
    if method == "max_price":
        return float(max((x.price or 0.0) for x in rows))
    raise ConfigError(f"unknown grouping method {method!r}; expected one of {GROUPING_METHODS}")


def assign_groups(train: InteractionLog, cfg: GroupingConfig) -> GroupAssignment:
    """Split training users into top-fraction advantaged vs the rest.

    The advantaged group holds the first ceil(top_fraction * n) users by
    activity score descending (user-id ascending on ties), so it is never
    empty and the partition is exhaustive over training users.
    """
    if train.n_users == 0:
        raise ValidationError("cannot assign groups on an empty log")
    ranked = sorted(
        train.user_ids,
        key=lambda u: (-activity_score(train, u, cfg.method), u),
    )
    n_adv = math.ceil(cfg.top_fraction * len(ranked))
    return GroupAssignment(
        advantaged=frozenset(ranked[:n_adv]),
        disadvantaged=frozenset(ranked[n_adv:]),
        method=cfg.method,
        top_fraction=cfg.top_fraction,
    )


def distribution_report(
    train: InteractionLog, thresholds: Sequence[float], method: str
) -> list[tuple[float, float]]:
    """Fraction of users whose activity score reaches each threshold.

    Thresholds must be sorted ascending; the returned fractions are
    monotone non-increasing.
    """
    if list(thresholds) != sorted(thresholds):
        raise ConfigError("thresholds must be sorted ascending")
    scores = [activity_score(train, u, method) for u in train.user_ids]
    n = len(scores)
    out = []
    for t in thresholds:
        frac = sum(1 for s in scores if s >= t) / n if n else 0.0
        out.append((float(t), frac))
    return out


def n_users_without_price(train: InteractionLog) -> int:
    """Data-quality count: users none of whose training rows carry a price."""
    return sum(
        1
        for u in train.user_ids
        if all(x.price is None for x in train.user_index[u])
    )


def save_groups(groups: GroupAssignment, path: str | Path) -> None:
    """Write the group file (CSV ``user_id,group`` with adv/disadv labels)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "group"])
        for user_id in sorted(groups.all_users):
            writer.writerow([user_id, groups.group_of(user_id)])


def load_groups(
    path: str | Path, method: str = "interactions", top_fraction: float | None = None
) -> GroupAssignment:
    """Read a group file produced by :func:`save_groups` or an external tool.

    The file does not carry the grouping metadata, so ``method`` is taken
    at face value and ``top_fraction`` defaults to the observed advantaged
    share (which keeps the partition invariant satisfiable).
    """
    advantaged: set[str] = set()
    disadvantaged: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["user_id", "group"]:
            raise ParseError("expected header 'user_id,group'", line_no=1, path=str(path))
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line_no, str(path))
            user_id, group = row
            if group == ADVANTAGED:
                advantaged.add(user_id)
            elif group == DISADVANTAGED:
                disadvantaged.add(user_id)
            else:
                raise ParseError(f"unknown group label {group!r}", line_no, str(path))
    n = len(advantaged) + len(disadvantaged)
    if n == 0:
        raise ParseError("empty group file", path=str(path))
    if top_fraction is None:
        # Nudged below |adv|/n so ceil(top_fraction * n) lands exactly on |adv|.
        top_fraction = max(len(advantaged) - 0.5, 0.5) / n
    return GroupAssignment(
        advantaged=frozenset(advantaged),
        disadvantaged=frozenset(disadvantaged),
        method=method,
        top_fraction=top_fraction,
    )
