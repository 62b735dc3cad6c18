"""Block-structured synthetic ratings with planted user/item groups."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .dataset import Dataset, Interaction, parse_ratings

FIXTURE = "synthetic_50x40.tsv"


@dataclass(frozen=True)
class SyntheticParams:
    num_users: int = 50
    num_items: int = 40
    num_latent_groups: int = 4
    seed: int = 0
    noise: float = 0.3
    density: float = 1.0
    high: float = 5.0
    low: float = 2.0

    def __post_init__(self):
        if self.num_users < 1 or self.num_items < 1:
            raise ValueError("num_users and num_items must be positive")
        if not 1 <= self.num_latent_groups <= min(self.num_users, self.num_items):
            raise ValueError("num_latent_groups must lie in [1, min(num_users, num_items)]")
        if self.noise < 0 or not 0 < self.density <= 1:
            raise ValueError("noise must be >= 0 and density in (0, 1]")

    def user_groups(self) -> np.ndarray:
        return np.arange(self.num_users) % self.num_latent_groups

    def item_groups(self) -> np.ndarray:
        return np.arange(self.num_items) % self.num_latent_groups


def generate_synthetic(params: SyntheticParams = SyntheticParams()) -> Dataset:
    """Users of group g rate items of group g near ``high`` and the rest near ``low``.

    Ratings are rounded to one decimal and clipped to [1, 5]. User ``u``
    and item ``i`` (0-based) get raw ids ``u + 1`` and ``i + 1`` and the
    planted groups ``u % G`` and ``i % G``.
    """
    rng = np.random.default_rng(params.seed)
    ug, ig = params.user_groups(), params.item_groups()
    same = ug[:, None] == ig[None, :]
    jitter = params.noise * rng.standard_normal((params.num_users, params.num_items))
    ratings = np.where(same, params.high - np.abs(jitter), params.low + jitter)
    ratings = np.clip(np.round(ratings, 1), 1.0, 5.0)
    observed = rng.random((params.num_users, params.num_items)) < params.density
    interactions = []
    user_index, item_index = {}, {}
    for u in range(params.num_users):
        for i in range(params.num_items):
            if observed[u, i]:
                user_index.setdefault(u + 1, len(user_index))
                item_index.setdefault(i + 1, len(item_index))
                t = 1_000_000_000 + u * params.num_items + i
                interactions.append(Interaction(u + 1, i + 1, float(ratings[u, i]), t))
    # keep ids for users/items that drew no observation
    for u in range(params.num_users):
        user_index.setdefault(u + 1, len(user_index))
    for i in range(params.num_items):
        item_index.setdefault(i + 1, len(item_index))
    return Dataset(tuple(interactions), user_index, item_index)


def load_fixture() -> Dataset:
    """The bundled 50-user x 40-item fixture (ml-100k layout)."""
    raw = resources.files("lexirec.data").joinpath(FIXTURE).read_bytes()
    return parse_ratings(raw, "ml-100k")
