"""Coverage, personalization, hit rate and the cluster serendipity score."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .clustering import ClusterModel, RelevantClusters
from .dataset import Dataset
from .selection import RecommendationList

METRICS = ("coverage", "personalization", "hit_rate", "serendipity")


@dataclass(frozen=True)
class MetricReport:
    strategy: str
    k: int
    coverage: float
    personalization: float
    hit_rate: float
    serendipity: float
    num_users: int
    fingerprint: str = ""
    context: Mapping = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        """One JSON object; metric values carry exactly six decimals."""
        parts = [f'"strategy": {json.dumps(self.strategy)}', f'"k": {self.k}']
        parts += [f'"{m}": {getattr(self, m):.6f}' for m in METRICS]
        parts.append(f'"num_users": {self.num_users}')
        parts.append(f'"fingerprint": {json.dumps(self.fingerprint)}')
        if self.context:
            parts.append(f'"context": {json.dumps(self.context, sort_keys=True)}')
        return "{" + ", ".join(parts) + "}"

    @classmethod
    def from_json(cls, line: str) -> "MetricReport":
        rec = json.loads(line)
        return cls(rec["strategy"], rec["k"], *(rec[m] for m in METRICS), rec["num_users"],
                   rec.get("fingerprint", ""), rec.get("context", {}))


def coverage(lists: Sequence[RecommendationList], num_items: int) -> float:
    if num_items < 1:
        raise ValueError("num_items must be >= 1")
    if not lists:
        raise ValueError("no recommendation lists")
    union = set()
    for rec in lists:
        union.update(rec.items)
    return len(union) / num_items


def personalization(lists: Sequence[RecommendationList]) -> float:
    """1 minus the mean cosine similarity over all unordered pairs of users'
    binary item-incidence vectors. A pair involving an empty list has
    similarity 0."""
    if len(lists) < 2:
        raise ValueError("personalization needs at least two lists")
    vocab = {}
    rows, cols = [], []
    for r, rec in enumerate(lists):
        for item in rec.items:
            rows.append(r)
            cols.append(vocab.setdefault(item, len(vocab)))
    X = np.zeros((len(lists), max(len(vocab), 1)))
    X[rows, cols] = 1.0
    overlap = X @ X.T
    sizes = np.diag(overlap).copy()
    norms = np.sqrt(np.outer(sizes, sizes))
    with np.errstate(divide="ignore", invalid="ignore"):
        cos = np.where(norms > 0, overlap / norms, 0.0)
    iu = np.triu_indices(len(lists), k=1)
    return float(1.0 - cos[iu].mean())


def hit_rate(lists: Sequence[RecommendationList], test: Dataset) -> float:
    """Macro-averaged per-user recall of held-out items, over the listed
    users that have at least one test interaction."""
    if len(test) == 0:
        raise ValueError("empty test set")
    held_out: dict[int, set[int]] = {}
    users, items, _ = test.arrays
    for u, i in zip(users.tolist(), items.tolist()):
        held_out.setdefault(u, set()).add(i)
    by_user = {rec.user: set(rec.items) for rec in lists}
    evaluated = [u for u in held_out if u in by_user]
    if not evaluated:
        raise ValueError("no listed user has test interactions")
    scores = [len(held_out[u] & by_user[u]) / len(held_out[u]) for u in evaluated]
    return float(np.mean(scores))


def serendipity_fraction(items: Sequence[int], clusters: ClusterModel,
                         relevant: RelevantClusters) -> Fraction:
    """Exact ``n / min(|C|, |R|)`` where ``n`` counts distinct relevant
    clusters among the listed items; 0 when nothing is relevant."""
    if len(items) == 0:
        raise ValueError("empty recommendation list")
    if not relevant.clusters:
        return Fraction(0)
    represented = {int(clusters.assignments[i]) for i in items}
    n = len(represented & relevant.clusters)
    return Fraction(n, min(len(relevant.clusters), len(items)))


def serendipity(rec: RecommendationList, clusters: ClusterModel, relevant: RelevantClusters) -> float:
    return float(serendipity_fraction(rec.items, clusters, relevant))


def mean_serendipity(lists: Sequence[RecommendationList], clusters: ClusterModel,
                     per_user_relevant: Mapping[int, RelevantClusters]) -> float:
    if not lists:
        raise ValueError("no recommendation lists")
    return float(np.mean([serendipity(rec, clusters, per_user_relevant[rec.user]) for rec in lists]))


def score_lists(lists: Sequence[RecommendationList], test: Dataset, clusters: ClusterModel,
                per_user_relevant: Mapping[int, RelevantClusters], strategy: str, k: int,
                fingerprint: str = "", context: Mapping | None = None) -> MetricReport:
    return MetricReport(
        strategy=strategy,
        k=k,
        coverage=coverage(lists, test.num_items),
        personalization=personalization(lists),
        hit_rate=hit_rate(lists, test),
        serendipity=mean_serendipity(lists, clusters, per_user_relevant),
        num_users=len(lists),
        fingerprint=fingerprint,
        context=dict(context or {}),
    )
