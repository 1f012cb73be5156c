"""Biased matrix factorization trained with a pairwise ranking loss.

The model scores a (user, item) pair as global bias + user bias + item
bias + dot(user vector, item vector). Training iterates all observed
(user, positive) pairs per epoch in shuffled order, draws one
never-interacted negative per pair, and applies one stochastic gradient
step of the pairwise logistic loss with L2 weight decay. The user and
global biases cancel inside the pairwise difference, so only item biases
and the factor matrices receive ranking gradients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    ConfigError,
    InteractionLog,
    TrainingDivergedError,
    UnknownIdError,
    ValidationError,
)
from .rng import STREAM_TRAINING, stream_rng


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    l2: float = 0.00001
    epochs: int = 100
    seed: int = 0
    embedding_dim: int = 64
    validation_k: int = 10
    validation_negatives: int = 100

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.l2 < 0:
            raise ConfigError(f"l2 must be >= 0, got {self.l2}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.embedding_dim < 1:
            raise ConfigError(f"embedding_dim must be >= 1, got {self.embedding_dim}")


@dataclass(frozen=True)
class FactorModel:
    """Learned parameters plus the id tables that define their index space."""

    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]
    user_vectors: np.ndarray
    item_vectors: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_bias: float

    def __post_init__(self):
        n, m = len(self.user_ids), len(self.item_ids)
        if self.user_vectors.shape[0] != n or self.item_vectors.shape[0] != m:
            raise ValidationError("factor matrix shapes do not match the id tables")
        if self.user_vectors.shape[1] != self.item_vectors.shape[1]:
            raise ValidationError("user and item factors have different dimensions")
        if self.user_vectors.shape[1] < 1:
            raise ValidationError("embedding dimension must be >= 1")
        for arr in (self.user_vectors, self.item_vectors, self.user_bias, self.item_bias):
            if not np.all(np.isfinite(arr)):
                raise ValidationError("model parameters must be finite")
        if not math.isfinite(self.global_bias):
            raise ValidationError("global bias must be finite")
        object.__setattr__(self, "_user_lookup", {u: h for h, u in enumerate(self.user_ids)})
        object.__setattr__(self, "_item_lookup", {i: h for h, i in enumerate(self.item_ids)})

    @property
    def d(self) -> int:
        return self.user_vectors.shape[1]

    def user_handle(self, user_id: str) -> int:
        try:
            return self._user_lookup[user_id]
        except KeyError:
            raise UnknownIdError(f"unknown user id {user_id!r}") from None

    def item_handle(self, item_id: str) -> int:
        try:
            return self._item_lookup[item_id]
        except KeyError:
            raise UnknownIdError(f"unknown item id {item_id!r}") from None

    def score(self, user_id: str, item_id: str) -> float:
        u = self.user_handle(user_id)
        v = self.item_handle(item_id)
        return float(
            self.global_bias
            + self.user_bias[u]
            + self.item_bias[v]
            + self.user_vectors[u] @ self.item_vectors[v]
        )

    def score_handles(self, u: int, item_handles: np.ndarray) -> np.ndarray:
        return (
            self.global_bias
            + self.user_bias[u]
            + self.item_bias[item_handles]
            + self.item_vectors[item_handles] @ self.user_vectors[u]
        )

    def scorer(self):
        """Score provider callable for candidate sampling."""
        return self.score

    def save(self, path: str | Path) -> None:
        np.savez(
            path,
            d=np.int64(self.d),
            user_ids=np.array(self.user_ids, dtype=np.str_),
            item_ids=np.array(self.item_ids, dtype=np.str_),
            user_vectors=self.user_vectors,
            item_vectors=self.item_vectors,
            user_bias=self.user_bias,
            item_bias=self.item_bias,
            global_bias=np.float64(self.global_bias),
        )

    @classmethod
    def load(cls, path: str | Path) -> "FactorModel":
        with np.load(path, allow_pickle=False) as data:
            return cls(
                user_ids=tuple(str(u) for u in data["user_ids"]),
                item_ids=tuple(str(i) for i in data["item_ids"]),
                user_vectors=data["user_vectors"],
                item_vectors=data["item_vectors"],
                user_bias=data["user_bias"],
                item_bias=data["item_bias"],
                global_bias=float(data["global_bias"]),
            )


def score(model: FactorModel, user_id: str, item_id: str) -> float:
    """Module-level alias for :meth:`FactorModel.score`."""
    return model.score(user_id, item_id)


def init_model(
    user_ids: tuple[str, ...], item_ids: tuple[str, ...], cfg: TrainConfig
) -> FactorModel:
    """Seeded Gaussian initialization (std 0.01) with zero biases."""
    rng = stream_rng(cfg.seed, STREAM_TRAINING, 0)
    return FactorModel(
        user_ids=tuple(user_ids),
        item_ids=tuple(item_ids),
        user_vectors=rng.normal(0.0, 0.01, (len(user_ids), cfg.embedding_dim)),
        item_vectors=rng.normal(0.0, 0.01, (len(item_ids), cfg.embedding_dim)),
        user_bias=np.zeros(len(user_ids)),
        item_bias=np.zeros(len(item_ids)),
        global_bias=0.0,
    )


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _softplus(z: float) -> float:
    # log(1 + exp(z)) without overflow
    if z > 0:
        return z + math.log1p(math.exp(-z))
    return math.log1p(math.exp(z))


def bpr_loss(
    model: FactorModel, user_id: str, pos_item: str, neg_item: str, l2: float
) -> float:
    """Pairwise logistic loss of one (user, positive, negative) triple,
    including the (l2/2) * ||params||^2 decay term over the parameters the
    triple touches."""
    u = model.user_handle(user_id)
    i = model.item_handle(pos_item)
    j = model.item_handle(neg_item)
    x = float(
        model.item_bias[i]
        - model.item_bias[j]
        + model.user_vectors[u] @ (model.item_vectors[i] - model.item_vectors[j])
    )
    reg = 0.5 * l2 * (
        float(model.user_vectors[u] @ model.user_vectors[u])
        + float(model.item_vectors[i] @ model.item_vectors[i])
        + float(model.item_vectors[j] @ model.item_vectors[j])
        + float(model.item_bias[i]) ** 2
        + float(model.item_bias[j]) ** 2
    )
    return _softplus(-x) + reg


def bpr_gradients(
    model: FactorModel, user_id: str, pos_item: str, neg_item: str, l2: float
) -> dict[str, np.ndarray | float]:
    """Analytic gradients of :func:`bpr_loss` w.r.t. the touched parameters.

    One SGD step subtracts learning_rate times each of these from the
    corresponding parameter.
    """
    u = model.user_handle(user_id)
    i = model.item_handle(pos_item)
    j = model.item_handle(neg_item)
    pu = model.user_vectors[u]
    qi = model.item_vectors[i]
    qj = model.item_vectors[j]
    x = float(model.item_bias[i] - model.item_bias[j] + pu @ (qi - qj))
    g = _sigmoid(-x)
    return {
        "user_vector": -g * (qi - qj) + l2 * pu,
        "pos_vector": -g * pu + l2 * qi,
        "neg_vector": g * pu + l2 * qj,
        "pos_bias": -g + l2 * float(model.item_bias[i]),
        "neg_bias": g + l2 * float(model.item_bias[j]),
    }


def _validation_fixture(
    train: InteractionLog,
    validation: InteractionLog,
    user_ids: tuple[str, ...],
    item_ids: tuple[str, ...],
    cfg: TrainConfig,
) -> list[tuple[int, np.ndarray, np.ndarray, int]]:
    """Fixed per-user validation candidates: (user handle, item handles,
    relevance flags, total positives). Sampled once so epoch-to-epoch
    comparisons see the same pools."""
    user_lookup = {u: h for h, u in enumerate(user_ids)}
    item_lookup = {i: h for h, i in enumerate(item_ids)}
    fixture = []
    for user_id in validation.user_ids:
        if user_id not in user_lookup:
            continue
        positives = sorted(
            {x.item_id for x in validation.user_index[user_id] if x.item_id in item_lookup}
        )
        if not positives:
            continue
        history = train.items_of(user_id) | validation.items_of(user_id)
        eligible = [i for i in item_ids if i not in history]
        n_neg = min(cfg.validation_negatives, len(eligible))
        rng = stream_rng(cfg.seed, STREAM_TRAINING, 2, user_lookup[user_id])
        picked = rng.choice(len(eligible), size=n_neg, replace=False) if n_neg else []
        items = positives + [eligible[i] for i in sorted(picked)]
        handles = np.array([item_lookup[i] for i in items], dtype=np.int64)
        flags = np.zeros(len(items), dtype=bool)
        flags[: len(positives)] = True
        fixture.append((user_lookup[user_id], handles, flags, len(positives)))
    return fixture


def _fixture_ndcg(
    fixture: list[tuple[int, np.ndarray, np.ndarray, int]],
    user_vectors: np.ndarray,
    item_vectors: np.ndarray,
    item_bias: np.ndarray,
    k: int,
) -> float:
    if not fixture:
        return 0.0
    idcg_cache = np.cumsum(1.0 / np.log2(np.arange(2, k + 2)))
    total = 0.0
    for u, handles, flags, n_pos in fixture:
        scores = item_bias[handles] + item_vectors[handles] @ user_vectors[u]
        order = np.lexsort((handles, -scores))[:k]
        discounts = 1.0 / np.log2(np.arange(2, len(order) + 2))
        dcg = float(np.sum(flags[order] * discounts))
        total += dcg / idcg_cache[min(n_pos, k) - 1]
    return total / len(fixture)


def train_bpr(
    train: InteractionLog,
    cfg: TrainConfig,
    validation: InteractionLog | None = None,
    user_vocabulary: tuple[str, ...] | None = None,
    item_vocabulary: tuple[str, ...] | None = None,
) -> FactorModel:
    """Train the factor model with pairwise ranking SGD.

    When ``validation`` is given, the model with the best validation
    NDCG@k across epochs is returned; otherwise the final epoch's
    parameters are. Vocabularies default to the training log's id tables;
    pass supersets (e.g. the full split's items) so later scoring covers
    cold items, which then simply keep their initialization.

    Deterministic given ``cfg.seed``: the same call returns bit-identical
    parameters. Negative draws come from the model's item vocabulary minus
    the user's training items.
    """
    if train.n_actions == 0:
        raise ValidationError("cannot train on an empty log")
    user_ids = tuple(sorted(user_vocabulary)) if user_vocabulary else train.user_ids
    item_ids = tuple(sorted(item_vocabulary)) if item_vocabulary else train.item_ids
    model = init_model(user_ids, item_ids, cfg)
    U = model.user_vectors.copy()
    V = model.item_vectors.copy()
    bu = model.user_bias.copy()
    bi = model.item_bias.copy()

    user_lookup = {u: h for h, u in enumerate(user_ids)}
    item_lookup = {i: h for h, i in enumerate(item_ids)}
    missing_users = set(train.user_ids) - set(user_ids)
    missing_items = set(train.item_ids) - set(item_ids)
    if missing_users or missing_items:
        raise UnknownIdError(
            "vocabulary does not cover the training log "
            f"(missing users: {len(missing_users)}, items: {len(missing_items)})"
        )
    pairs_u = np.array([user_lookup[x.user_id] for x in train.interactions], dtype=np.int64)
    pairs_i = np.array([item_lookup[x.item_id] for x in train.interactions], dtype=np.int64)
    seen: dict[int, set[int]] = {}
    for u, i in zip(pairs_u, pairs_i):
        seen.setdefault(int(u), set()).add(int(i))
    saturated = [u for u, items in seen.items() if len(items) >= len(item_ids)]
    if saturated:
        raise ValidationError(
            f"user {user_ids[saturated[0]]!r} has interacted with every item in the "
            "vocabulary; no negative samples exist"
        )

    fixture = (
        _validation_fixture(train, validation, user_ids, item_ids, cfg)
        if validation is not None and validation.n_actions > 0
        else []
    )

    lr = cfg.learning_rate
    l2 = cfg.l2
    m = len(item_ids)
    best_ndcg = -math.inf
    best = (U.copy(), V.copy(), bu.copy(), bi.copy())
    for epoch in range(cfg.epochs):
        rng = stream_rng(cfg.seed, STREAM_TRAINING, 1, epoch)
        perm = rng.permutation(len(pairs_u))
        for t in perm:
            u = int(pairs_u[t])
            i = int(pairs_i[t])
            user_seen = seen[u]
            j = int(rng.integers(m))
            while j in user_seen:
                j = int(rng.integers(m))
            pu = U[u]
            qi = V[i]
            qj = V[j]
            diff = qi - qj
            x = bi[i] - bi[j] + pu @ diff
            g = _sigmoid(-x)
            du = lr * (g * diff - l2 * pu)
            di = lr * (g * pu - l2 * qi)
            dj = lr * (-g * pu - l2 * qj)
            dbi = lr * (g - l2 * bi[i])
            dbj = lr * (-g - l2 * bi[j])
            U[u] = pu + du
            V[i] = qi + di
            V[j] = qj + dj
            bi[i] += dbi
            bi[j] += dbj
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(V)) and np.all(np.isfinite(bi))):
            raise TrainingDivergedError(epoch)
        if fixture:
            ndcg = _fixture_ndcg(fixture, U, V, bi, cfg.validation_k)
            if ndcg > best_ndcg:
                best_ndcg = ndcg
                best = (U.copy(), V.copy(), bu.copy(), bi.copy())

    if not fixture:
        best = (U, V, bu, bi)
    return FactorModel(
        user_ids=user_ids,
        item_ids=item_ids,
        user_vectors=best[0],
        item_vectors=best[1],
        user_bias=best[2],
        item_bias=best[3],
        global_bias=model.global_bias,
    )
