"""Top-k list construction: ranking, epsilon-lexicase, interleaved mix, random."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

STRATEGIES = ("r", "l", "m-50", "random")
EPSILON_MODES = ("mad", "absolute")


@dataclass(frozen=True, eq=False)
class CandidateSet:
    items: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        items = np.asarray(self.items, dtype=np.int64)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.shape[0] != items.shape[0]:
            raise ValueError("features must have one row per item")
        if not np.isfinite(feats).all():
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "features", feats)

    def __len__(self):
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def scores(self) -> np.ndarray:
        return self.features.sum(axis=1)

    def shortlist(self, n: int) -> "CandidateSet":
        """The ``n`` candidates with the highest aggregate score."""
        if n >= len(self):
            return self
        keep = np.sort(_rank_order(self.items, self.scores())[:n])
        return CandidateSet(self.items[keep], self.features[keep])


@dataclass(frozen=True)
class LexicaseConfig:
    max_features: int = 10
    epsilon_mode: str = "mad"
    epsilon_value: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.max_features < 1:
            raise ValueError("max_features must be >= 1")
        if self.epsilon_mode not in EPSILON_MODES:
            raise ValueError(f"epsilon_mode must be one of {EPSILON_MODES}")
        if not self.epsilon_value >= 0:
            raise ValueError("epsilon_value must be nonnegative")


@dataclass(frozen=True)
class RecommendationList:
    user: int
    items: tuple[int, ...]
    strategy: str
    k: int

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(int(i) for i in self.items))
        if len(set(self.items)) != len(self.items):
            raise ValueError("recommendation list contains duplicates")

    def __len__(self):
        return len(self.items)

    @property
    def is_short(self) -> bool:
        return len(self.items) < self.k

    def truncated(self, k: int) -> "RecommendationList":
        return RecommendationList(self.user, self.items[:k], self.strategy, k)


def _rank_order(items, scores):
    # descending score, ascending item index on ties
    return np.lexsort((items, -scores))


def rank_topk(candidates: CandidateSet, k: int, user: int = -1) -> RecommendationList:
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = _rank_order(candidates.items, candidates.scores())[:k]
    return RecommendationList(user, candidates.items[order], "r", k)


def _mad(values):
    return float(np.median(np.abs(values - np.median(values))))


def _select_row(feats, config: LexicaseConfig, rng, order=None) -> int:
    survivors = np.arange(feats.shape[0])
    if order is None:
        order = rng.permutation(feats.shape[1])
    for f in list(order)[: config.max_features]:
        if len(survivors) == 1:
            return int(survivors[0])
        col = feats[survivors, f]
        eps = _mad(col) if config.epsilon_mode == "mad" else config.epsilon_value
        # >= so that epsilon 0 keeps the whole argmax set
        survivors = survivors[col >= col.max() - eps]
    if len(survivors) == 1:
        return int(survivors[0])
    return int(survivors[rng.integers(len(survivors))])


def lexicase_select_one(candidates: CandidateSet, config: LexicaseConfig,
                        rng: np.random.Generator, order: Sequence[int] | None = None) -> int:
    """Pick one item by epsilon-lexicase over the feature columns.

    Features are visited in a shuffled order (or ``order`` when given, in
    which case ``rng`` is only used for the final tie-break); at most
    ``config.max_features`` are visited. Each step keeps the survivors whose
    value is within epsilon of the best survivor on that feature.
    """
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    return int(candidates.items[_select_row(candidates.features, config, rng, order)])


def lexicase_topk(candidates: CandidateSet, k: int, config: LexicaseConfig, user: int = -1,
                  orders: Iterable[Sequence[int]] | None = None) -> RecommendationList:
    """Repeated lexicase selection without replacement.

    One generator seeded from ``config.seed`` drives every selection, so a
    shorter list is always a prefix of a longer one. ``orders`` fixes the
    feature order of each successive selection.
    """
    if len(candidates) == 0:
        raise ValueError("empty candidate set")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(config.seed)
    orders_it: Iterator | None = iter(orders) if orders is not None else None
    items, feats = candidates.items, candidates.features
    remaining = np.arange(len(items))
    chosen = []
    for _ in range(min(k, len(items))):
        order = next(orders_it) if orders_it is not None else None
        row = _select_row(feats[remaining], config, rng, order)
        chosen.append(int(items[remaining[row]]))
        remaining = np.delete(remaining, row)
    return RecommendationList(user, chosen, "l", k)


def mix_interleave(list_r: RecommendationList, list_l: RecommendationList, k: int) -> RecommendationList:
    """Alternate turns between the two lists, ranking first.

    On its turn a list contributes its next item not already taken. A list
    that runs dry hands its turns to the other; if both are exhausted the
    result is shorter than ``k`` (see ``RecommendationList.is_short``).
    """
    if list_r.user != list_l.user:
        raise ValueError("lists belong to different users")
    sources = [list(list_r.items), list(list_l.items)]
    cursors = [0, 0]
    taken: list[int] = []
    seen: set[int] = set()
    turn = 0
    while len(taken) < k:
        progressed = False
        for attempt in range(2):
            src = (turn + attempt) % 2
            seq = sources[src]
            while cursors[src] < len(seq) and seq[cursors[src]] in seen:
                cursors[src] += 1
            if cursors[src] < len(seq):
                item = seq[cursors[src]]
                cursors[src] += 1
                taken.append(item)
                seen.add(item)
                progressed = True
                break
        if not progressed:
            break
        turn = 1 - turn
    return RecommendationList(list_r.user, taken, "m-50", k)


def random_topk(pool: Iterable[int], k: int, seed: int, user: int = -1) -> RecommendationList:
    pool = np.sort(np.fromiter(pool, dtype=np.int64))
    if len(pool) == 0:
        raise ValueError("empty candidate pool")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    return RecommendationList(user, pool[rng.permutation(len(pool))[:k]], "random", k)


def dump_lists(lists: Iterable[RecommendationList], item_ids: Sequence[int],
               user_ids: Sequence[int], path: str | Path):
    """Write ``user_id<TAB>strategy<TAB>k<TAB>item,item,...`` lines (raw ids)."""
    with open(path, "w") as fh:
        for rec in lists:
            items = ",".join(str(int(item_ids[i])) for i in rec.items)
            fh.write(f"{int(user_ids[rec.user])}\t{rec.strategy}\t{rec.k}\t{items}\n")


def load_lists(path: str | Path, user_index, item_index) -> list[RecommendationList]:
    """Read a dump written by :func:`dump_lists`, mapping raw ids back to indices."""
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ValueError(f"line {lineno}: expected 4 tab-separated fields")
            user_id, strategy, k, items = fields
            item_list = [item_index[int(x)] for x in items.split(",") if x]
            out.append(RecommendationList(user_index[int(user_id)], item_list, strategy, int(k)))
    return out
