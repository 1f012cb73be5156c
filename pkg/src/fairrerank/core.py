"""Shared domain types for the fair re-ranking pipeline.

Everything here is immutable after construction and safe to share across
workers. User and item ids are opaque strings at the API surface; dense
integer handles (positions in the sorted id tables) are used internally
where solver speed matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class FairRerankError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FairRerankError):
    """A domain type invariant was violated at construction time."""


class ParseError(FairRerankError):
    """Malformed input file; carries the offending line number."""

    def __init__(self, message: str, line_no: int | None = None, path: str | None = None):
        self.line_no = line_no
        self.path = path
        prefix = f"{path or '<input>'}:{line_no}: " if line_no is not None else ""
        super().__init__(prefix + message)


class DuplicateInteractionsError(ParseError):
    """Duplicate (user, item, timestamp) triples in an interaction file."""

    def __init__(self, duplicates: Sequence[tuple[str, str, int]], path: str | None = None):
        self.duplicates = list(duplicates)
        shown = ", ".join(f"({u},{i},{t})" for u, i, t in self.duplicates[:10])
        more = "" if len(self.duplicates) <= 10 else f" and {len(self.duplicates) - 10} more"
        super().__init__(
            f"{len(self.duplicates)} duplicate (user,item,timestamp) triples: {shown}{more}",
            path=path,
        )


class SplitError(FairRerankError):
    """A dataset split precondition failed."""


class SamplingError(FairRerankError):
    """Candidate sampling could not be completed (e.g. item universe too small)."""


class ConfigError(FairRerankError):
    """Invalid configuration value."""


class UnknownIdError(FairRerankError):
    """A user or item id is not part of the model's id space."""


class MetricUndefinedError(FairRerankError):
    """A ranking metric was requested for a user with no relevant items."""


class ProblemBuildError(FairRerankError):
    """The re-ranking problem could not be constructed from its inputs."""


class BudgetExceededError(FairRerankError):
    """Exhaustive enumeration refused because the search space is too large."""


class TimeLimitError(FairRerankError):
    """The solver hit its time limit before finding any feasible solution."""


class TrainingDivergedError(FairRerankError):
    """Model parameters became non-finite during training."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"non-finite parameters after epoch {epoch}")


GROUPING_METHODS = ("interactions", "total_consumption", "max_price")

ADVANTAGED = "adv"
DISADVANTAGED = "disadv"


@dataclass(frozen=True)
class Interaction:
    """One timestamped (user, item, rating, price) event."""

    user_id: str
    item_id: str
    rating: float
    timestamp: int
    price: float | None = None

    def __post_init__(self):
        if not self.user_id:
            raise ValidationError("user_id must be non-empty")
        if not self.item_id:
            raise ValidationError("item_id must be non-empty")
        if not (1.0 <= self.rating <= 5.0):
            raise ValidationError(f"rating {self.rating} outside [1, 5]")
        if self.timestamp < 0:
            raise ValidationError(f"negative timestamp {self.timestamp}")
        if self.price is not None and not (self.price >= 0):
            raise ValidationError(f"negative price {self.price}")

    def to_payload(self) -> dict:
        return {
            "user_id": self.user_id,
            "item_id": self.item_id,
            "rating": self.rating,
            "timestamp": self.timestamp,
            "price": self.price,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "Interaction":
        return cls(
            user_id=payload["user_id"],
            item_id=payload["item_id"],
            rating=float(payload["rating"]),
            timestamp=int(payload["timestamp"]),
            price=None if payload.get("price") is None else float(payload["price"]),
        )


def _interaction_sort_key(x: Interaction) -> tuple:
    return (x.user_id, x.timestamp, x.item_id)


@dataclass(frozen=True)
class InteractionLog:
    """An immutable interaction dataset with per-user and per-item indexes.

    Interactions are stored sorted by (user_id, timestamp, item_id); each
    per-user list is therefore in chronological order with item-id
    tie-breaking. ``user_ids`` and ``item_ids`` are the sorted id tables
    whose positions serve as dense integer handles.
    """

    interactions: tuple[Interaction, ...]
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    user_index: Mapping[str, tuple[Interaction, ...]]
    item_index: Mapping[str, tuple[Interaction, ...]]
    _user_handles: Mapping[str, int] = field(repr=False, default_factory=dict)
    _item_handles: Mapping[str, int] = field(repr=False, default_factory=dict)

    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction]) -> "InteractionLog":
        rows = sorted(interactions, key=_interaction_sort_key)
        user_index: dict[str, list[Interaction]] = {}
        item_index: dict[str, list[Interaction]] = {}
        for x in rows:
            user_index.setdefault(x.user_id, []).append(x)
            item_index.setdefault(x.item_id, []).append(x)
        user_ids = tuple(sorted(user_index))
        item_ids = tuple(sorted(item_index))
        return cls(
            interactions=tuple(rows),
            user_ids=user_ids,
            item_ids=item_ids,
            user_index={u: tuple(v) for u, v in user_index.items()},
            item_index={i: tuple(v) for i, v in item_index.items()},
            _user_handles={u: h for h, u in enumerate(user_ids)},
            _item_handles={i: h for h, i in enumerate(item_ids)},
        )

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_actions(self) -> int:
        return len(self.interactions)

    @property
    def sparsity(self) -> float:
        """Fraction of the user-item matrix that is empty, in [0, 1]."""
        cells = self.n_users * self.n_items
        return 1.0 - self.n_actions / cells if cells else 0.0

    def user_handle(self, user_id: str) -> int:
        try:
            return self._user_handles[user_id]
        except KeyError:
            raise UnknownIdError(f"unknown user id {user_id!r}") from None

    def item_handle(self, item_id: str) -> int:
        try:
            return self._item_handles[item_id]
        except KeyError:
            raise UnknownIdError(f"unknown item id {item_id!r}") from None

    def items_of(self, user_id: str) -> set[str]:
        return {x.item_id for x in self.user_index.get(user_id, ())}

    def to_payload(self) -> dict:
        return {"interactions": [x.to_payload() for x in self.interactions]}

    @classmethod
    def from_payload(cls, payload: Mapping) -> "InteractionLog":
        return cls.from_interactions(
            Interaction.from_payload(p) for p in payload["interactions"]
        )


@dataclass(frozen=True)
class DatasetSplit:
    """Train/validation/test partition of an interaction log."""

    train: InteractionLog
    validation: InteractionLog
    test: InteractionLog

    def __post_init__(self):
        def triples(log: InteractionLog) -> set[tuple[str, str, int]]:
            return {(x.user_id, x.item_id, x.timestamp) for x in log.interactions}

        tr, va, te = triples(self.train), triples(self.validation), triples(self.test)
        if tr & va or tr & te or va & te:
            raise ValidationError("split parts are not disjoint")
        train_users = set(self.train.user_ids)
        for part_name, log in (("validation", self.validation), ("test", self.test)):
            missing = set(log.user_ids) - train_users
            if missing:
                raise ValidationError(
                    f"{part_name} users missing from train: {sorted(missing)[:5]}"
                )

    @property
    def all_user_ids(self) -> tuple[str, ...]:
        users = set(self.train.user_ids) | set(self.validation.user_ids) | set(self.test.user_ids)
        return tuple(sorted(users))

    @property
    def all_item_ids(self) -> tuple[str, ...]:
        items = set(self.train.item_ids) | set(self.validation.item_ids) | set(self.test.item_ids)
        return tuple(sorted(items))

    def part(self, name: str) -> InteractionLog:
        if name not in ("train", "validation", "test"):
            raise ConfigError(f"unknown split part {name!r}")
        return getattr(self, name)

    def to_payload(self) -> dict:
        return {
            "train": self.train.to_payload(),
            "validation": self.validation.to_payload(),
            "test": self.test.to_payload(),
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "DatasetSplit":
        return cls(
            train=InteractionLog.from_payload(payload["train"]),
            validation=InteractionLog.from_payload(payload["validation"]),
            test=InteractionLog.from_payload(payload["test"]),
        )


@dataclass(frozen=True)
class GroupAssignment:
    """Partition of users into an advantaged and a disadvantaged group."""

    advantaged: frozenset[str]
    disadvantaged: frozenset[str]
    method: str
    top_fraction: float

    def __post_init__(self):
        if self.method not in GROUPING_METHODS:
            raise ConfigError(f"unknown grouping method {self.method!r}")
        if not (0.0 < self.top_fraction < 1.0):
            raise ValidationError(f"top_fraction {self.top_fraction} outside (0, 1)")
        if self.advantaged & self.disadvantaged:
            raise ValidationError("advantaged and disadvantaged groups overlap")
        if not self.advantaged:
            raise ValidationError("advantaged group is empty")
        n = len(self.advantaged) + len(self.disadvantaged)
        expected = math.ceil(self.top_fraction * n)
        if len(self.advantaged) != expected:
            raise ValidationError(
                f"advantaged group has {len(self.advantaged)} users, "
                f"expected ceil({self.top_fraction} * {n}) = {expected}"
            )

    def group_of(self, user_id: str) -> str:
        if user_id in self.advantaged:
            return ADVANTAGED
        if user_id in self.disadvantaged:
            return DISADVANTAGED
        raise UnknownIdError(f"user {user_id!r} not present in the group assignment")

    def sign(self, user_id: str) -> int:
        """+1 for advantaged members, -1 for disadvantaged members."""
        return 1 if self.group_of(user_id) == ADVANTAGED else -1

    @property
    def all_users(self) -> frozenset[str]:
        return self.advantaged | self.disadvantaged

    def to_payload(self) -> dict:
        return {
            "advantaged": sorted(self.advantaged),
            "disadvantaged": sorted(self.disadvantaged),
            "method": self.method,
            "top_fraction": self.top_fraction,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "GroupAssignment":
        return cls(
            advantaged=frozenset(payload["advantaged"]),
            disadvantaged=frozenset(payload["disadvantaged"]),
            method=payload["method"],
            top_fraction=float(payload["top_fraction"]),
        )


@dataclass(frozen=True)
class Candidate:
    """One scored candidate item with its binary relevance label."""

    item_id: str
    score: float
    relevant: bool

    def to_payload(self) -> dict:
        return {"item_id": self.item_id, "score": self.score, "relevant": self.relevant}

    @classmethod
    def from_payload(cls, payload: Mapping) -> "Candidate":
        return cls(payload["item_id"], float(payload["score"]), bool(payload["relevant"]))


def candidate_order_key(c: Candidate) -> tuple:
    return (-c.score, c.item_id)


@dataclass(frozen=True)
class CandidateSet:
    """A user's scored candidate pool, sorted by score descending.

    ``n_relevant_total`` is the user's total relevant-item count in the
    evaluation ground truth; it may exceed the number of relevant
    candidates when the pool was produced by an external recommender
    that dropped some positives.
    """

    user_id: str
    candidates: tuple[Candidate, ...]
    n_relevant_total: int

    def __post_init__(self):
        if not self.user_id:
            raise ValidationError("user_id must be non-empty")
        if self.n_relevant_total < 0:
            raise ValidationError("n_relevant_total must be >= 0")
        items = [c.item_id for c in self.candidates]
        if len(set(items)) != len(items):
            raise ValidationError(f"duplicate candidate items for user {self.user_id!r}")
        ordered = sorted(self.candidates, key=candidate_order_key)
        if tuple(ordered) != self.candidates:
            raise ValidationError(
                f"candidates for user {self.user_id!r} not sorted by score desc / item id"
            )
        if self.n_relevant_candidates > self.n_relevant_total:
            raise ValidationError(
                f"user {self.user_id!r} has more relevant candidates "
                f"({self.n_relevant_candidates}) than n_relevant_total ({self.n_relevant_total})"
            )

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def n_relevant_candidates(self) -> int:
        return sum(1 for c in self.candidates if c.relevant)

    @property
    def relevant_items(self) -> frozenset[str]:
        return frozenset(c.item_id for c in self.candidates if c.relevant)

    def top_k_items(self, k: int) -> tuple[str, ...]:
        return tuple(c.item_id for c in self.candidates[:k])

    def to_payload(self) -> dict:
        return {
            "user_id": self.user_id,
            "candidates": [c.to_payload() for c in self.candidates],
            "n_relevant_total": self.n_relevant_total,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "CandidateSet":
        return cls(
            user_id=payload["user_id"],
            candidates=tuple(Candidate.from_payload(p) for p in payload["candidates"]),
            n_relevant_total=int(payload["n_relevant_total"]),
        )


@dataclass(frozen=True)
class RerankProblem:
    """A 0-1 selection problem: pick exactly K candidates per user,
    maximizing total preference score subject to a two-sided bound on the
    group fairness gap.

    ``fairness_coeffs[u][j]`` is the candidate's signed contribution to the
    gap: (+1 for advantaged, -1 for disadvantaged) * (2 / (K + T_u)) *
    relevant[j] / (evaluated group size). The constraint |sum c*W| <= epsilon
    realizes the absolute-value bound as two linear inequalities.
    """

    users: tuple[str, ...]
    groups: GroupAssignment
    k: int
    epsilon: float
    candidate_sets: Mapping[str, CandidateSet]
    objective: Mapping[str, tuple[float, ...]]
    fairness_coeffs: Mapping[str, tuple[float, ...]]
    n_advantaged_evaluated: int
    n_disadvantaged_evaluated: int

    @property
    def unconstrained(self) -> bool:
        return math.isinf(self.epsilon)

    @property
    def n_users(self) -> int:
        return len(self.users)

    def to_payload(self) -> dict:
        return {
            "users": list(self.users),
            "groups": self.groups.to_payload(),
            "k": self.k,
            "epsilon": "inf" if math.isinf(self.epsilon) else self.epsilon,
            "candidate_sets": {u: self.candidate_sets[u].to_payload() for u in self.users},
            "objective": {u: list(self.objective[u]) for u in self.users},
            "fairness_coeffs": {u: list(self.fairness_coeffs[u]) for u in self.users},
            "n_advantaged_evaluated": self.n_advantaged_evaluated,
            "n_disadvantaged_evaluated": self.n_disadvantaged_evaluated,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "RerankProblem":
        eps = payload["epsilon"]
        return cls(
            users=tuple(payload["users"]),
            groups=GroupAssignment.from_payload(payload["groups"]),
            k=int(payload["k"]),
            epsilon=math.inf if eps == "inf" else float(eps),
            candidate_sets={
                u: CandidateSet.from_payload(p) for u, p in payload["candidate_sets"].items()
            },
            objective={u: tuple(v) for u, v in payload["objective"].items()},
            fairness_coeffs={u: tuple(v) for u, v in payload["fairness_coeffs"].items()},
            n_advantaged_evaluated=int(payload["n_advantaged_evaluated"]),
            n_disadvantaged_evaluated=int(payload["n_disadvantaged_evaluated"]),
        )


SOLVER_LABELS = ("oracle", "exact", "lagrangian", "passthrough")

STATUS_OPTIMAL = "optimal"
STATUS_FEASIBLE = "feasible"
STATUS_INFEASIBLE = "infeasible"
STATUS_INFEASIBLE_SUSPECTED = "infeasibility_suspected"
STATUS_TIME_LIMIT = "time_limit"


@dataclass(frozen=True)
class RerankSolution:
    """Solver output: per-user selected candidate slots plus the final
    score-ordered lists and diagnostics.

    For infeasible outcomes (``status`` in {infeasible,
    infeasibility_suspected}) the selection and lists are empty and
    ``best_violation`` carries the smallest constraint violation seen.
    """

    selection: Mapping[str, tuple[int, ...]]
    final_lists: Mapping[str, tuple[str, ...]]
    objective_value: float
    achieved_ugf: float
    solver: str
    status: str
    optimality_gap: float
    wall_time: float
    dual_bound: float | None = None
    nodes: int = 0
    best_violation: float | None = None

    def __post_init__(self):
        if self.solver not in SOLVER_LABELS:
            raise ValidationError(f"unknown solver label {self.solver!r}")

    @property
    def feasible(self) -> bool:
        return self.status in (STATUS_OPTIMAL, STATUS_FEASIBLE, STATUS_TIME_LIMIT)

    def to_payload(self) -> dict:
        return {
            "selection": {u: list(s) for u, s in self.selection.items()},
            "final_lists": {u: list(v) for u, v in self.final_lists.items()},
            "objective_value": self.objective_value,
            "achieved_ugf": self.achieved_ugf,
            "solver": self.solver,
            "status": self.status,
            "optimality_gap": self.optimality_gap,
            "wall_time": self.wall_time,
            "dual_bound": self.dual_bound,
            "nodes": self.nodes,
            "best_violation": self.best_violation,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "RerankSolution":
        return cls(
            selection={u: tuple(s) for u, s in payload["selection"].items()},
            final_lists={u: tuple(v) for u, v in payload["final_lists"].items()},
            objective_value=float(payload["objective_value"]),
            achieved_ugf=float(payload["achieved_ugf"]),
            solver=payload["solver"],
            status=payload["status"],
            optimality_gap=float(payload["optimality_gap"]),
            wall_time=float(payload["wall_time"]),
            dual_bound=None if payload.get("dual_bound") is None else float(payload["dual_bound"]),
            nodes=int(payload.get("nodes", 0)),
            best_violation=(
                None if payload.get("best_violation") is None else float(payload["best_violation"])
            ),
        )


@dataclass(frozen=True)
class GroupReport:
    """Group-level summary of a per-user quality metric.

    Values are on the same scale as the per-user metric they aggregate
    (the library works in [0, 1]; external reports render percent).
    """

    metric: str
    k: int
    overall: float
    advantaged: float
    disadvantaged: float
    ugf: float
    n_advantaged: int
    n_disadvantaged: int

    def __post_init__(self):
        if abs(self.ugf - abs(self.advantaged - self.disadvantaged)) > 1e-12:
            raise ValidationError("ugf must equal |advantaged - disadvantaged|")
        lo = min(self.advantaged, self.disadvantaged)
        hi = max(self.advantaged, self.disadvantaged)
        if not (lo - 1e-12 <= self.overall <= hi + 1e-12):
            raise ValidationError("overall mean must lie between the group means")

    def to_payload(self) -> dict:
        return {
            "metric": self.metric,
            "k": self.k,
            "overall": self.overall,
            "advantaged": self.advantaged,
            "disadvantaged": self.disadvantaged,
            "ugf": self.ugf,
            "n_advantaged": self.n_advantaged,
            "n_disadvantaged": self.n_disadvantaged,
        }

    @classmethod
    def from_payload(cls, payload: Mapping) -> "GroupReport":
        return cls(
            metric=payload["metric"],
            k=int(payload["k"]),
            overall=float(payload["overall"]),
            advantaged=float(payload["advantaged"]),
            disadvantaged=float(payload["disadvantaged"]),
            ugf=float(payload["ugf"]),
            n_advantaged=int(payload["n_advantaged"]),
            n_disadvantaged=int(payload["n_disadvantaged"]),
        )
