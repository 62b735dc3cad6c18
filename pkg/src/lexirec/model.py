"""Generalized matrix factorization trained by SGD on explicit ratings.

A prediction is ``sum_f h[f] * u[f] * v[f]`` for user row ``u``, item
row ``v`` and output weights ``h``. The per-dimension terms are the
preference features used by lexicase selection, and they add up to the
prediction exactly because both go through :func:`_features`.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .dataset import Dataset, Split
from .errors import DataError, DivergenceError, SearchError

log = logging.getLogger(__name__)

MAGIC = b"LEXIGMF\x00"
VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 16
    learning_rate: float = 0.01
    l2_penalty: float = 1e-4
    epochs: int = 10
    init_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not self.l2_penalty >= 0:
            raise ValueError("l2_penalty must be nonnegative")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")


@dataclass(frozen=True, eq=False)
class GmfModel:
    user_embeddings: np.ndarray
    item_embeddings: np.ndarray
    output_weights: np.ndarray
    loss_history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        for name in ("user_embeddings", "item_embeddings", "output_weights"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        d = self.output_weights.shape[0]
        if self.user_embeddings.ndim != 2 or self.user_embeddings.shape[1] != d:
            raise ValueError("user_embeddings must be num_users x dim")
        if self.item_embeddings.ndim != 2 or self.item_embeddings.shape[1] != d:
            raise ValueError("item_embeddings must be num_items x dim")

    @property
    def dim(self) -> int:
        return self.output_weights.shape[0]

    @property
    def num_users(self) -> int:
        return self.user_embeddings.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_embeddings.shape[0]

    def same_parameters(self, other: "GmfModel") -> bool:
        return all(
            np.array_equal(a, b)
            for a, b in (
                (self.user_embeddings, other.user_embeddings),
                (self.item_embeddings, other.item_embeddings),
                (self.output_weights, other.output_weights),
            )
        )


def _features(h, u, v):
    # broadcasts over leading axes of v; always the same operand order
    return (h * u) * v


def _check_pair(model: GmfModel, user: int, item: int):
    if not 0 <= user < model.num_users:
        raise IndexError(f"user index {user} out of range [0, {model.num_users})")
    if not 0 <= item < model.num_items:
        raise IndexError(f"item index {item} out of range [0, {model.num_items})")


def deaggregate(model: GmfModel, user: int, item: int) -> np.ndarray:
    """Per-dimension preference features ``h * u * v`` of one pair."""
    _check_pair(model, user, item)
    return _features(model.output_weights, model.user_embeddings[user], model.item_embeddings[item])


def predict(model: GmfModel, user: int, item: int) -> float:
    return float(deaggregate(model, user, item).sum())


def user_features(model: GmfModel, user: int, items: np.ndarray) -> np.ndarray:
    """Feature matrix for ``user`` against each of ``items`` (rows align with items)."""
    if not 0 <= user < model.num_users:
        raise IndexError(f"user index {user} out of range [0, {model.num_users})")
    return _features(model.output_weights, model.user_embeddings[user],
                     model.item_embeddings[np.asarray(items, dtype=np.int64)])


def predict_many(model: GmfModel, users: np.ndarray, items: np.ndarray) -> np.ndarray:
    feats = _features(model.output_weights, model.user_embeddings[users], model.item_embeddings[items])
    return feats.sum(axis=1)


def evaluate_mae(model: GmfModel, data: Dataset) -> float:
    if len(data) == 0:
        raise DataError("cannot evaluate MAE on an empty test set")
    users, items, ratings = data.arrays
    return float(np.mean(np.abs(predict_many(model, users, items) - ratings)))


def batch_loss(model_or_params, users, items, ratings, l2_penalty) -> float:
    """Mean over samples of ``(pred - r)^2 + l2 * (|u|^2 + |v|^2)``."""
    P, Q, h = _unpack(model_or_params)
    U, V = P[users], Q[items]
    err = ((h * U) * V).sum(axis=1) - ratings
    reg = (U * U).sum(axis=1) + (V * V).sum(axis=1)
    return float(np.mean(err * err + l2_penalty * reg))


def batch_gradients(model_or_params, users, items, ratings, l2_penalty):
    """Analytic gradients of :func:`batch_loss` w.r.t. (P, Q, h)."""
    P, Q, h = _unpack(model_or_params)
    n = len(ratings)
    U, V = P[users], Q[items]
    err = ((h * U) * V).sum(axis=1) - ratings
    gP = np.zeros_like(P)
    gQ = np.zeros_like(Q)
    np.add.at(gP, users, 2.0 * err[:, None] * h * V + 2.0 * l2_penalty * U)
    np.add.at(gQ, items, 2.0 * err[:, None] * h * U + 2.0 * l2_penalty * V)
    gh = (2.0 * err[:, None] * U * V).sum(axis=0)
    return gP / n, gQ / n, gh / n


def _unpack(m):
    if isinstance(m, GmfModel):
        return m.user_embeddings, m.item_embeddings, m.output_weights
    return m


@numba.njit(cache=True)
def _sgd_epoch(P, Q, h, users, items, ratings, order, lr, l2):
    d = h.shape[0]
    gu = np.empty(d)
    gv = np.empty(d)
    gh = np.empty(d)
    for n in range(order.shape[0]):
        s = order[n]
        u = users[s]
        i = items[s]
        pred = 0.0
        for f in range(d):
            pred += h[f] * P[u, f] * Q[i, f]
        e2 = 2.0 * (pred - ratings[s])
        for f in range(d):
            gu[f] = e2 * h[f] * Q[i, f] + 2.0 * l2 * P[u, f]
            gv[f] = e2 * h[f] * P[u, f] + 2.0 * l2 * Q[i, f]
            gh[f] = e2 * P[u, f] * Q[i, f]
        for f in range(d):
            P[u, f] -= lr * gu[f]
            Q[i, f] -= lr * gv[f]
            h[f] -= lr * gh[f]


def init_params(num_users: int, num_items: int, config: TrainConfig):
    rng = np.random.default_rng(config.seed)
    s = config.init_scale
    P = rng.uniform(-s, s, size=(num_users, config.dim))
    Q = rng.uniform(-s, s, size=(num_items, config.dim))
    h = np.ones(config.dim)
    return P, Q, h, rng


def train(data: Dataset, config: TrainConfig) -> GmfModel:
    """Fit a GMF model; one epoch is a full pass in seeded shuffled order.

    Raises :class:`DivergenceError` as soon as an epoch ends with a
    non-finite loss or parameters.
    """
    if len(data) == 0:
        raise DataError("cannot train on an empty dataset")
    users, items, ratings = data.arrays
    P, Q, h, rng = init_params(data.num_users, data.num_items, config)
    history = []
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(ratings))
            _sgd_epoch(P, Q, h, users, items, ratings, order, config.learning_rate, config.l2_penalty)
            loss = batch_loss((P, Q, h), users, items, ratings, config.l2_penalty)
            if not math.isfinite(loss) or not (np.isfinite(h).all() and np.isfinite(P).all()
                                               and np.isfinite(Q).all()):
                raise DivergenceError(epoch)
            history.append(loss)
    return GmfModel(P, Q, h, tuple(history))


@dataclass(frozen=True)
class SearchSpace:
    """Ranges for random search. Tuples are (low, high) sampled log-uniformly;
    lists are discrete choices sampled uniformly."""

    dim: Sequence[int] = (8, 16, 32)
    learning_rate: tuple[float, float] = (1e-3, 1e-1)
    l2_penalty: tuple[float, float] = (1e-5, 1e-2)
    epochs: Sequence[int] = (5, 10, 20)
    init_scale: tuple[float, float] = (0.1, 0.1)
    seed: int | None = None  # fixed training seed; None derives one per trial

    def sample(self, rng: np.random.Generator, seed: int) -> TrainConfig:
        def log_uniform(lo, hi):
            if lo == hi:
                return float(lo)
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))

        return TrainConfig(
            dim=int(rng.choice(np.asarray(self.dim))),
            learning_rate=log_uniform(*self.learning_rate),
            l2_penalty=log_uniform(*self.l2_penalty),
            epochs=int(rng.choice(np.asarray(self.epochs))),
            init_scale=log_uniform(*self.init_scale),
            seed=seed if self.seed is None else self.seed,
        )


def random_search(data: Split, space: SearchSpace | None = None, trials: int = 10,
                  seed: int = 0, return_trials: bool = False):
    """Train ``trials`` sampled configs on the train half; keep the lowest test MAE.

    Ties keep the earliest trial. Diverging trials are skipped. Returns
    ``(model, config)``, plus a list of ``(config, mae or None)`` per trial
    when ``return_trials`` is set.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    space = space or SearchSpace()
    rng = np.random.default_rng(seed)
    seeds = np.random.SeedSequence(seed).generate_state(trials)
    best = None
    attempted = []
    history = []
    for t in range(trials):
        config = space.sample(rng, int(seeds[t]))
        attempted.append(config)
        try:
            model = train(data.train, config)
        except DivergenceError as exc:
            log.info("trial %d diverged (%s): %s", t, exc, config)
            history.append((config, None))
            continue
        mae = evaluate_mae(model, data.test)
        history.append((config, mae))
        log.info("trial %d mae=%.4f %s", t, mae, config)
        if best is None or mae < best[0]:
            best = (mae, model, config)
    if best is None:
        raise SearchError(attempted)
    if return_trials:
        return best[1], best[2], history
    return best[1], best[2]


def save_model(model: GmfModel, path: str | Path):
    """Binary layout: magic(8) version(1) num_users num_items dim (uint64 LE),
    then user rows, item rows and output weights as float64 LE row-major."""
    header = MAGIC + bytes([VERSION]) + struct.pack("<QQQ", model.num_users, model.num_items, model.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        for arr in (model.user_embeddings, model.item_embeddings, model.output_weights):
            fh.write(arr.astype("<f8").tobytes(order="C"))


def load_model(path: str | Path) -> GmfModel:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path}: not a lexirec model file")
    if raw[8] != VERSION:
        raise DataError(f"{path}: unsupported model version {raw[8]}")
    nu, ni, d = struct.unpack_from("<QQQ", raw, 9)
    offset = 9 + 24
    expected = offset + 8 * (nu * d + ni * d + d)
    if len(raw) != expected:
        raise DataError(f"{path}: truncated or oversized model file")
    values = np.frombuffer(raw, dtype="<f8", offset=offset).astype(np.float64)
    P = values[: nu * d].reshape(nu, d)
    Q = values[nu * d: nu * d + ni * d].reshape(ni, d)
    h = values[nu * d + ni * d:]
    return GmfModel(P, Q, h)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
