"""MovieLens rating ingestion, train/test splitting and per-user lookups."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, ValidationError

FORMATS = ("ml-1m", "ml-100k")
_SEPARATORS = {"ml-1m": "::", "ml-100k": "\t"}
DEFAULT_SCALE = (1.0, 5.0)


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    rating: float
    timestamp: int = 0


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable interaction corpus with contiguous user/item indices.

    ``user_index`` and ``item_index`` may contain ids that have no
    interaction in this particular dataset (the halves of a split share
    the source's maps), so ``num_users``/``num_items`` count index
    entries, not observed ids.
    """

    interactions: tuple[Interaction, ...]
    user_index: Mapping[int, int]
    item_index: Mapping[int, int]
    rating_scale: tuple[float, float] = DEFAULT_SCALE

    def __post_init__(self):
        object.__setattr__(self, "interactions", tuple(self.interactions))
        for name in ("user_index", "item_index"):
            index = getattr(self, name)
            if sorted(index.values()) != list(range(len(index))):
                raise ValidationError(f"{name} is not contiguous from 0")
        lo, hi = self.rating_scale
        seen = set()
        for it in self.interactions:
            if it.user_id not in self.user_index or it.item_id not in self.item_index:
                raise ValidationError(
                    f"interaction ({it.user_id}, {it.item_id}) missing from index maps"
                )
            if not lo <= it.rating <= hi:
                raise ValidationError(f"rating {it.rating} outside [{lo}, {hi}]")
            pair = (it.user_id, it.item_id)
            if pair in seen:
                raise ValidationError(f"duplicate (user, item) pair {pair}")
            seen.add(pair)

    def __len__(self):
        return len(self.interactions)

    @property
    def num_users(self) -> int:
        return len(self.user_index)

    @property
    def num_items(self) -> int:
        return len(self.item_index)

    @cached_property
    def user_ids(self) -> np.ndarray:
        """Index -> raw user id."""
        out = np.empty(self.num_users, dtype=np.int64)
        for uid, idx in self.user_index.items():
            out[idx] = uid
        return out

    @cached_property
    def item_ids(self) -> np.ndarray:
        """Index -> raw item id."""
        out = np.empty(self.num_items, dtype=np.int64)
        for iid, idx in self.item_index.items():
            out[idx] = iid
        return out

    @cached_property
    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(user indices, item indices, ratings) aligned with ``interactions``."""
        users = np.fromiter(
            (self.user_index[it.user_id] for it in self.interactions), dtype=np.int64,
            count=len(self.interactions),
        )
        items = np.fromiter(
            (self.item_index[it.item_id] for it in self.interactions), dtype=np.int64,
            count=len(self.interactions),
        )
        ratings = np.fromiter(
            (it.rating for it in self.interactions), dtype=np.float64,
            count=len(self.interactions),
        )
        return users, items, ratings

    @cached_property
    def _histories(self) -> list[list[tuple[int, float]]]:
        histories: list[list[tuple[int, float]]] = [[] for _ in range(self.num_users)]
        users, items, ratings = self.arrays
        for u, i, r in zip(users.tolist(), items.tolist(), ratings.tolist()):
            histories[u].append((i, r))
        return histories

    def with_interactions(self, interactions: Iterable[Interaction]) -> "Dataset":
        """A dataset over different interactions sharing this one's index maps."""
        return Dataset(tuple(interactions), self.user_index, self.item_index, self.rating_scale)


@dataclass(frozen=True)
class Split:
    train: Dataset
    test: Dataset
    seed: int
    train_fraction: float
    stratified: bool = field(default=False)


def parse_ratings(
    source: BinaryIO | bytes | str,
    format: str = "ml-100k",
    rating_scale: tuple[float, float] = DEFAULT_SCALE,
) -> Dataset:
    """Parse a MovieLens ratings file.

    ``source`` is a binary stream, raw bytes or already-decoded text.
    Indices are assigned in order of first appearance.
    """
    if format not in _SEPARATORS:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}")
    sep = _SEPARATORS[format]
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read().decode("utf-8")

    lo, hi = rating_scale
    interactions = []
    user_index: dict[int, int] = {}
    item_index: dict[int, int] = {}
    seen: set[tuple[int, int]] = set()
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split(sep)
        if len(fields) != 4:
            raise ParseError(lineno, f"expected 4 fields separated by {sep!r}, got {len(fields)}")
        try:
            user_id = int(fields[0])
            item_id = int(fields[1])
            rating = float(fields[2])
            timestamp = int(fields[3])
        except ValueError as exc:
            raise ParseError(lineno, f"non-numeric field ({exc})") from None
        if not lo <= rating <= hi:
            raise ValidationError(f"rating {rating} outside [{lo}, {hi}]", lineno)
        if (user_id, item_id) in seen:
            raise ValidationError(f"duplicate rating for ({user_id}, {item_id})", lineno)
        seen.add((user_id, item_id))
        user_index.setdefault(user_id, len(user_index))
        item_index.setdefault(item_id, len(item_index))
        interactions.append(Interaction(user_id, item_id, rating, timestamp))
    return Dataset(tuple(interactions), user_index, item_index, rating_scale)


def load_ratings(path: str | Path, format: str | None = None, **kwargs) -> Dataset:
    """Read a ratings file from disk; the format is guessed from the content if omitted."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if format is None:
        format = "ml-1m" if b"::" in raw[:4096] else "ml-100k"
    return parse_ratings(raw, format, **kwargs)


def format_ratings(data: Dataset, format: str = "ml-100k") -> str:
    sep = _SEPARATORS[format]
    lines = []
    for it in data.interactions:
        rating = int(it.rating) if float(it.rating).is_integer() else it.rating
        lines.append(sep.join(str(v) for v in (it.user_id, it.item_id, rating, it.timestamp)))
    return "".join(line + "\n" for line in lines)


def split(data: Dataset, train_fraction: float = 0.7, seed: int = 0, stratified: bool = False) -> Split:
    """Shuffle interactions with a seeded permutation and cut at ``floor(fraction * N)``.

    With ``stratified=True`` the cut is made inside every user's own
    interactions instead of over the whole corpus.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if len(data) == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    if not stratified:
        perm = rng.permutation(len(data))
        cut = int(np.floor(train_fraction * len(data)))
        train_pos, test_pos = np.sort(perm[:cut]), np.sort(perm[cut:])
    else:
        users = data.arrays[0]
        train_parts, test_parts = [], []
        order = np.argsort(users, kind="stable")
        bounds = np.flatnonzero(np.diff(users[order])) + 1
        for group in np.split(order, bounds):
            group = group[rng.permutation(len(group))]
            cut = int(np.floor(train_fraction * len(group)))
            train_parts.append(group[:cut])
            test_parts.append(group[cut:])
        train_pos = np.sort(np.concatenate(train_parts))
        test_pos = np.sort(np.concatenate(test_parts))
    inter = data.interactions
    return Split(
        train=data.with_interactions(inter[i] for i in train_pos.tolist()),
        test=data.with_interactions(inter[i] for i in test_pos.tolist()),
        seed=seed,
        train_fraction=train_fraction,
        stratified=stratified,
    )


def _check_user(data: Dataset, user: int):
    if not 0 <= user < data.num_users:
        raise IndexError(f"user index {user} out of range [0, {data.num_users})")


def user_history(data: Dataset, user: int) -> list[tuple[int, float]]:
    """All (item index, rating) pairs of ``user`` in ``data``, in corpus order."""
    _check_user(data, user)
    return list(data._histories[user])


def candidate_pool(data: Dataset, user: int) -> set[int]:
    """Item indices ``user`` has not rated in ``data``."""
    _check_user(data, user)
    rated = {i for i, _ in data._histories[user]}
    return set(range(data.num_items)) - rated


def candidate_array(data: Dataset, user: int) -> np.ndarray:
    """Sorted array form of :func:`candidate_pool`."""
    _check_user(data, user)
    mask = np.ones(data.num_items, dtype=bool)
    rated = [i for i, _ in data._histories[user]]
    mask[rated] = False
    return np.flatnonzero(mask)


def users_with_interactions(data: Dataset) -> Sequence[int]:
    return sorted({u for u in data.arrays[0].tolist()})
