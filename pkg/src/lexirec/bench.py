"""End-to-end experiment: ingest, split, tune, cluster, recommend, score."""

from __future__ import annotations

import contextlib
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import clustering, dataset, metrics, model, selection
from .errors import LexirecError
from .selection import LexicaseConfig, RecommendationList

log = logging.getLogger(__name__)

DEFAULT_K = (5, 10, 15, 20, 25)

# stage tags for derived seeds
SPLIT, SEARCH, CLUSTER, LEXICASE, RANDOM, SAMPLE = range(6)


def derive_seed(seed: int, *key: int) -> int:
    """A 32-bit seed that depends only on ``seed`` and ``key``."""
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentConfig:
    data_path: str
    format: str | None = None
    train_fraction: float = 0.7
    seed: int = 0
    k_values: tuple[int, ...] = DEFAULT_K
    strategies: tuple[str, ...] = selection.STRATEGIES
    relevance_threshold: float = clustering.DEFAULT_THRESHOLD
    lexicase: LexicaseConfig = LexicaseConfig()
    search_trials: int = 10
    search_space: model.SearchSpace = model.SearchSpace()
    train_config: model.TrainConfig | None = None
    user_sample: int | None = None
    stratified: bool = False
    shortlist: int | None = None
    k_meta: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "strategies", tuple(self.strategies))
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ValueError("k_values must be nonempty and positive")
        if list(self.k_values) != sorted(set(self.k_values)):
            raise ValueError("k_values must be strictly ascending")
        if not self.strategies:
            raise ValueError("strategies must be nonempty")
        unknown = set(self.strategies) - set(selection.STRATEGIES)
        if unknown:
            raise ValueError(f"unknown strategies {sorted(unknown)}")
        if self.format is not None and self.format not in dataset.FORMATS:
            raise ValueError(f"unknown format {self.format!r}")
        if self.search_trials < 1 and self.train_config is None:
            raise ValueError("search_trials must be >= 1 unless a train_config is given")

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentRun:
    """Every intermediate artifact of one experiment."""

    config: ExperimentConfig
    split: dataset.Split
    model: model.GmfModel
    train_config: model.TrainConfig
    test_mae: float
    clusters: clustering.ClusterModel
    users: list[int]
    relevant: dict[int, clustering.RelevantClusters]
    lists: dict[tuple[str, int], list[RecommendationList]] = field(default_factory=dict)
    reports: list[metrics.MetricReport] = field(default_factory=list)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except (LexirecError, ValueError) as exc:
        exc.stage = name
        exc.args = (f"[{name}] {exc}",) + exc.args[1:]
        raise


def sample_users(train: dataset.Dataset, sample: int | None, seed: int) -> list[int]:
    users = list(range(train.num_users))
    if sample is None or sample >= len(users):
        return users
    rng = np.random.default_rng(derive_seed(seed, SAMPLE))
    return sorted(rng.choice(len(users), size=sample, replace=False).tolist())


def build_lists(gmf: model.GmfModel, train: dataset.Dataset, users: Sequence[int],
                config: ExperimentConfig) -> dict[tuple[str, int], list[RecommendationList]]:
    """Lists for every (strategy, k) cell.

    Each strategy builds one list of length ``max(k_values)`` per user;
    shorter cells take its prefix. All four constructions are
    prefix-consistent, so this equals building every cell separately.
    """
    kmax = config.k_values[-1]
    wanted = set(config.strategies)
    need_r = bool(wanted & {"r", "m-50"})
    need_l = bool(wanted & {"l", "m-50"})
    full: dict[str, list[RecommendationList]] = {s: [] for s in selection.STRATEGIES}
    for u in users:
        pool = dataset.candidate_array(train, u)
        if len(pool) == 0:
            log.warning("user %d has rated every item; skipped", u)
            continue
        cands = selection.CandidateSet(pool, model.user_features(gmf, u, pool))
        if need_r:
            full["r"].append(selection.rank_topk(cands, kmax, user=u))
        if need_l:
            lex_cands = cands.shortlist(config.shortlist) if config.shortlist else cands
            lex_cfg = replace(config.lexicase, seed=derive_seed(config.seed, LEXICASE, u))
            full["l"].append(selection.lexicase_topk(lex_cands, kmax, lex_cfg, user=u))
        if "m-50" in wanted:
            full["m-50"].append(selection.mix_interleave(full["r"][-1], full["l"][-1], kmax))
        if "random" in wanted:
            full["random"].append(
                selection.random_topk(pool, kmax, derive_seed(config.seed, RANDOM, u), user=u))
    cells = {}
    for strategy in config.strategies:
        for k in config.k_values:
            cells[(strategy, k)] = [rec.truncated(k) for rec in full[strategy]]
    return cells


def prepare(config: ExperimentConfig) -> ExperimentRun:
    """Everything up to (not including) list generation."""
    with _stage("parse"):
        data = dataset.load_ratings(config.data_path, config.format)
    with _stage("split"):
        parts = dataset.split(data, config.train_fraction, derive_seed(config.seed, SPLIT),
                              stratified=config.stratified)
    with _stage("train"):
        if config.train_config is not None:
            train_cfg = config.train_config
            gmf = model.train(parts.train, train_cfg)
        else:
            gmf, train_cfg = model.random_search(parts, config.search_space, config.search_trials,
                                                 derive_seed(config.seed, SEARCH))
        mae = model.evaluate_mae(gmf, parts.test)
    log.info("model: %s test MAE %.4f", train_cfg, mae)
    with _stage("cluster"):
        clusters = clustering.build_cluster_model(
            gmf.item_embeddings, seed=derive_seed(config.seed, CLUSTER), k_meta=config.k_meta)
    users = sample_users(parts.train, config.user_sample, config.seed)
    relevant = {
        u: clustering.relevant_clusters(clusters, dataset.user_history(parts.train, u),
                                        config.relevance_threshold)
        for u in users
    }
    return ExperimentRun(config, parts, gmf, train_cfg, mae, clusters, users, relevant)


def run_pipeline(config: ExperimentConfig) -> ExperimentRun:
    run = prepare(config)
    with _stage("recommend"):
        run.lists = build_lists(run.model, run.split.train, run.users, config)
    context = {
        "train_config": asdict(run.train_config),
        "test_mae": round(run.test_mae, 6),
        "user_sample": config.user_sample,
        "k_items": run.clusters.k_items,
        "k_meta": run.clusters.k_meta,
    }
    fp = config.fingerprint()
    with _stage("score"):
        for (strategy, k), lists in run.lists.items():
            run.reports.append(metrics.score_lists(
                lists, run.split.test, run.clusters, run.relevant, strategy, k, fp, context))
    return run


def run_experiment(config: ExperimentConfig) -> list[metrics.MetricReport]:
    return run_pipeline(config).reports


def format_table(reports: Sequence[metrics.MetricReport]) -> str:
    ks = sorted({r.k for r in reports})
    strategies = list(dict.fromkeys(r.strategy for r in reports))
    cell = {(r.strategy, r.k): r for r in reports}
    label_w = max(len("metric"), *(len(m) for m in metrics.METRICS))
    strat_w = max(len("strategy"), *(len(s) for s in strategies))
    header = f"{'metric':<{label_w}}  {'strategy':<{strat_w}}" + "".join(f"  {'k=' + str(k):>9}" for k in ks)
    lines = [header, "-" * len(header)]
    for m in metrics.METRICS:
        for s in strategies:
            row = f"{m:<{label_w}}  {s:<{strat_w}}"
            for k in ks:
                r = cell.get((s, k))
                row += f"  {getattr(r, m):9.6f}" if r else f"  {'-':>9}"
            lines.append(row)
    first = reports[0]
    if first.context:
        lines.append("")
        lines.append(f"users: {first.num_users}  fingerprint: {first.fingerprint}")
        for key in sorted(first.context):
            lines.append(f"{key}: {json.dumps(first.context[key], sort_keys=True)}")
    return "\n".join(lines) + "\n"


def format_jsonl(reports: Sequence[metrics.MetricReport]) -> str:
    return "".join(r.to_json() + "\n" for r in reports)


def emit_report(reports: Sequence[metrics.MetricReport], destination: str | Path = "-",
                format: str = "table"):
    """Write reports as an aligned table or as JSON Lines (``format="jsonl"``).

    ``destination="-"`` writes to stdout.
    """
    if not reports:
        raise ValueError("no reports to emit")
    if format == "table":
        text = format_table(reports)
    elif format in ("jsonl", "machine-readable"):
        text = format_jsonl(reports)
    else:
        raise ValueError(f"unknown report format {format!r}")
    if str(destination) == "-":
        sys.stdout.write(text)
        return
    Path(destination).write_text(text)
