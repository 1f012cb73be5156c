"""Interaction parsing, chronological splitting, and evaluation-candidate
sampling.

File formats (all UTF-8 CSV with a header row):

* interactions: ``user_id,item_id,rating,timestamp`` (an optional trailing
  ``part`` column, as written by the split command, is accepted and ignored)
* item prices:  ``item_id,price`` (empty price -> missing)
* candidates:   ``user_id,item_id,score,relevant`` with relevant in {0,1},
  one block per user, score-descending; this is also the import format for
  externally produced recommender scores.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .core import (
    Candidate,
    CandidateSet,
    ConfigError,
    DatasetSplit,
    DuplicateInteractionsError,
    Interaction,
    InteractionLog,
    ParseError,
    SamplingError,
    SplitError,
    ValidationError,
    candidate_order_key,
)
from .rng import STREAM_SAMPLING, STREAM_SPLIT, stream_rng

INTERACTIONS_HEADER = ["user_id", "item_id", "rating", "timestamp"]
PRICES_HEADER = ["item_id", "price"]
CANDIDATES_HEADER = ["user_id", "item_id", "score", "relevant"]

ScoreFn = Callable[[str, str], float]


@dataclass(frozen=True)
class NegativeSamplingConfig:
    """Evaluation protocol: how many never-interacted items accompany each
    user's positives, and the seed the per-user draws derive from."""

    n_negatives: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n_negatives < 1:
            raise ConfigError(f"n_negatives must be >= 1, got {self.n_negatives}")
        if not (0 <= self.seed < 2**64):
            raise ConfigError("seed must fit in 64 unsigned bits")


def parse_prices(path: str | Path) -> dict[str, float]:
    """Read the item price file; rows with an empty price are skipped."""
    prices: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PRICES_HEADER:
            raise ParseError(f"expected header {','.join(PRICES_HEADER)!r}", 1, str(path))
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise ParseError(f"expected 2 fields, got {len(row)}", line_no, str(path))
            item_id, raw = row
            if raw.strip() == "":
                continue
            try:
                price = float(raw)
            except ValueError:
                raise ParseError(f"bad price {raw!r}", line_no, str(path)) from None
            if price < 0:
                raise ParseError(f"negative price {price}", line_no, str(path))
            prices[item_id] = price
    return prices


def parse_interactions(path: str | Path, price_path: str | Path | None = None) -> InteractionLog:
    """Parse the interactions CSV, optionally joining item prices.

    Malformed rows raise :class:`ParseError` with the line number;
    duplicate (user, item, timestamp) triples are rejected with a report
    of the offending triples. Items absent from the price file keep a
    missing price.
    """
    prices = parse_prices(price_path) if price_path is not None else {}
    interactions: list[Interaction] = []
    seen: set[tuple[str, str, int]] = set()
    duplicates: list[tuple[str, str, int]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", 1, str(path))
        if header != INTERACTIONS_HEADER and header != INTERACTIONS_HEADER + ["part"]:
            raise ParseError(
                f"expected header {','.join(INTERACTIONS_HEADER)!r}", 1, str(path)
            )
        n_fields = len(header)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_fields:
                raise ParseError(f"expected {n_fields} fields, got {len(row)}", line_no, str(path))
            user_id, item_id, raw_rating, raw_ts = row[:4]
            try:
                rating = float(raw_rating)
                timestamp = int(raw_ts)
            except ValueError:
                raise ParseError(f"bad rating/timestamp in {row[:4]!r}", line_no, str(path)) from None
            try:
                interaction = Interaction(
                    user_id=user_id,
                    item_id=item_id,
                    rating=rating,
                    timestamp=timestamp,
                    price=prices.get(item_id),
                )
            except ValidationError as exc:
                raise ParseError(str(exc), line_no, str(path)) from None
            triple = (user_id, item_id, timestamp)
            if triple in seen:
                duplicates.append(triple)
                continue
            seen.add(triple)
            interactions.append(interaction)
    if duplicates:
        raise DuplicateInteractionsError(duplicates, path=str(path))
    return InteractionLog.from_interactions(interactions)


def split_counts(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    """Per-user (train, validation, test) sizes for ``n`` interactions.

    Validation and test sizes are floor(ratio * n) with test floored at 1
    (a user without a test interaction cannot be evaluated); the remainder
    goes to train, which keeps every user present in train.
    """
    r_train, r_val, r_test = ratios
    n_test = max(1, int(r_test * n)) if r_test > 0 else 0
    n_val = int(r_val * n)
    n_train = n - n_val - n_test
    return n_train, n_val, n_test


def split_dataset(
    log: InteractionLog,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    *,
    mode: str = "chronological",
    seed: int = 0,
) -> DatasetSplit:
    """Split each user's interactions into train/validation/test parts.

    The default mode assigns the earliest interactions to train and the
    most recent to test (per user); ``mode="random"`` shuffles each user's
    rows first, as an escape hatch for parity experiments against random
    splitters. Users with fewer than 3 interactions are a hard error.
    """
    if log.n_actions == 0:
        raise SplitError("cannot split an empty log")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    if mode not in ("chronological", "random"):
        raise ConfigError(f"unknown split mode {mode!r}")

    train_rows: list[Interaction] = []
    val_rows: list[Interaction] = []
    test_rows: list[Interaction] = []
    for user_id in log.user_ids:
        rows = list(log.user_index[user_id])
        if len(rows) < 3:
            raise SplitError(
                f"user {user_id!r} has only {len(rows)} interactions; need >= 3 to split"
            )
        if mode == "random":
            rng = stream_rng(seed, STREAM_SPLIT, log.user_handle(user_id))
            rng.shuffle(rows)
        n_train, n_val, n_test = split_counts(len(rows), ratios)
        if n_train < 1:
            raise SplitError(f"user {user_id!r} would keep no train interactions")
        train_rows.extend(rows[:n_train])
        val_rows.extend(rows[n_train:n_train + n_val])
        test_rows.extend(rows[n_train + n_val:])
    return DatasetSplit(
        train=InteractionLog.from_interactions(train_rows),
        validation=InteractionLog.from_interactions(val_rows),
        test=InteractionLog.from_interactions(test_rows),
    )


def sample_candidates(
    split: DatasetSplit,
    score_fn: ScoreFn,
    cfg: NegativeSamplingConfig,
    part: str = "test",
) -> list[CandidateSet]:
    """Build each evaluable user's candidate pool for the chosen part.

    A user's pool is their distinct positives in the part plus
    ``cfg.n_negatives`` items they never interacted with anywhere in the
    split, drawn uniformly without replacement from a per-(seed, user)
    stream; users with no positives in the part are omitted. The result
    is a pure function of (split, cfg, part).
    """
    if part not in ("validation", "test"):
        raise ConfigError(f"part must be 'validation' or 'test', got {part!r}")
    part_log = split.part(part)
    all_items = split.all_item_ids
    all_users = split.all_user_ids
    user_handles = {u: h for h, u in enumerate(all_users)}

    out: list[CandidateSet] = []
    for user_id in part_log.user_ids:
        positives = sorted({x.item_id for x in part_log.user_index[user_id]})
        if not positives:
            continue
        history = (
            split.train.items_of(user_id)
            | split.validation.items_of(user_id)
            | split.test.items_of(user_id)
        )
        eligible = [item for item in all_items if item not in history]
        if len(eligible) < cfg.n_negatives:
            raise SamplingError(
                f"user {user_id!r}: only {len(eligible)} never-interacted items "
                f"available, need {cfg.n_negatives}"
            )
        rng = stream_rng(cfg.seed, STREAM_SAMPLING, user_handles[user_id])
        picked = rng.choice(len(eligible), size=cfg.n_negatives, replace=False)
        negatives = [eligible[i] for i in sorted(picked)]
        candidates = [
            Candidate(item_id=item, score=float(score_fn(user_id, item)), relevant=True)
            for item in positives
        ] + [
            Candidate(item_id=item, score=float(score_fn(user_id, item)), relevant=False)
            for item in negatives
        ]
        candidates.sort(key=candidate_order_key)
        out.append(
            CandidateSet(
                user_id=user_id,
                candidates=tuple(candidates),
                n_relevant_total=len(positives),
            )
        )
    return out


def dataset_stats(log: InteractionLog) -> dict:
    """Headline dataset statistics (actions, users, items, sparsity %)."""
    return {
        "n_actions": log.n_actions,
        "n_users": log.n_users,
        "n_items": log.n_items,
        "sparsity_pct": round(log.sparsity * 100.0, 2),
        "sparsity": log.sparsity,
    }


def _format_float(x: float) -> str:
    return repr(float(x))


def write_split(split: DatasetSplit, out_dir: str | Path) -> dict[str, Path]:
    """Write train/validation/test CSVs (interactions schema + part column)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    for part in ("train", "validation", "test"):
        path = out_dir / f"{part}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(INTERACTIONS_HEADER + ["part"])
            for x in split.part(part).interactions:
                writer.writerow([x.user_id, x.item_id, _format_float(x.rating), x.timestamp, part])
        paths[part] = path
    return paths


def read_split(
    train_path: str | Path,
    validation_path: str | Path,
    test_path: str | Path,
    price_path: str | Path | None = None,
) -> DatasetSplit:
    return DatasetSplit(
        train=parse_interactions(train_path, price_path),
        validation=parse_interactions(validation_path, price_path),
        test=parse_interactions(test_path, price_path),
    )


def write_candidates(candidate_sets: Iterable[CandidateSet], path: str | Path) -> None:
    """Write candidate pools, one score-descending block per user."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CANDIDATES_HEADER)
        for cand in sorted(candidate_sets, key=lambda c: c.user_id):
            for c in cand.candidates:
                writer.writerow(
                    [cand.user_id, c.item_id, _format_float(c.score), int(c.relevant)]
                )


def read_candidates(path: str | Path) -> list[CandidateSet]:
    """Read a candidate file (ours or an external recommender's export).

    The file carries no explicit total-relevant count, so each user's
    count of relevant rows is taken as their ground-truth total.
    """
    rows_by_user: dict[str, list[Candidate]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CANDIDATES_HEADER:
            raise ParseError(f"expected header {','.join(CANDIDATES_HEADER)!r}", 1, str(path))
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"expected 4 fields, got {len(row)}", line_no, str(path))
            user_id, item_id, raw_score, raw_rel = row
            try:
                score = float(raw_score)
            except ValueError:
                raise ParseError(f"bad score {raw_score!r}", line_no, str(path)) from None
            if raw_rel not in ("0", "1"):
                raise ParseError(f"relevant must be 0 or 1, got {raw_rel!r}", line_no, str(path))
            rows_by_user.setdefault(user_id, []).append(
                Candidate(item_id=item_id, score=score, relevant=raw_rel == "1")
            )
    out = []
    for user_id in sorted(rows_by_user):
        candidates = sorted(rows_by_user[user_id], key=candidate_order_key)
        try:
            out.append(
                CandidateSet(
                    user_id=user_id,
                    candidates=tuple(candidates),
                    n_relevant_total=sum(1 for c in candidates if c.relevant),
                )
            )
        except ValidationError as exc:
            raise ParseError(str(exc), path=str(path)) from None
    return out
