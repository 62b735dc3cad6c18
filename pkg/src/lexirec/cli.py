"""Command-line entry point: ``lexirec {train,bench,score,synth}``.

Any long flag may also be given in a ``--config`` file of ``key = value``
lines (``#`` starts a comment; keys use the flag name with either dashes
or underscores). Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import bench, clustering, dataset, metrics, model, selection, synthetic
from .errors import DataError, DivergenceError, SearchError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text):
    return tuple(int(x) for x in str(text).replace(",", " ").split())


def _str_list(text):
    return tuple(x for x in str(text).replace(",", " ").split())


def _optional_int(text):
    return None if str(text).lower() in ("", "none", "off") else int(text)


def _bool(text):
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def read_config_file(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _add_data_args(p):
    p.add_argument("--data", dest="data_path", help="ratings file")
    p.add_argument("--format", choices=dataset.FORMATS, default=None,
                   help="ratings layout (guessed from the file when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--stratified", type=_bool, nargs="?", const=True, default=False,
                   help="split inside each user's history instead of globally")


def _add_train_args(p):
    p.add_argument("--search-trials", type=int, default=10)
    p.add_argument("--dim", type=int, help="fix the model instead of searching")
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--l2-penalty", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--init-scale", type=float)


def _add_metric_args(p):
    p.add_argument("--relevance-threshold", type=float, default=clustering.DEFAULT_THRESHOLD)
    p.add_argument("--k-meta", type=_optional_int, default=None)
    p.add_argument("--output", default="-", help="report destination ('-' for stdout)")
    p.add_argument("--report-format", choices=("table", "jsonl"), default="table")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lexirec", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="fit a model (random search unless fixed) and save it")
    p.add_argument("--config")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=False, help="model file to write")

    p = sub.add_parser("bench", help="run the full strategy x k experiment")
    p.add_argument("--config")
    _add_data_args(p)
    _add_train_args(p)
    _add_metric_args(p)
    p.add_argument("--k-values", type=_int_list, default=bench.DEFAULT_K)
    p.add_argument("--strategies", type=_str_list, default=selection.STRATEGIES)
    p.add_argument("--user-sample", type=_optional_int, default=None)
    p.add_argument("--shortlist", type=_optional_int, default=None)
    p.add_argument("--max-features", type=int, default=10)
    p.add_argument("--epsilon-mode", choices=selection.EPSILON_MODES, default="mad")
    p.add_argument("--epsilon-value", type=float, default=0.0)
    p.add_argument("--dump-lists", help="write recommendation lists here")
    p.add_argument("--save-model", help="write the trained model here")
    p.add_argument("--dump-clusters", help="write item cluster assignments here")

    p = sub.add_parser("score", help="score a recommendation dump against a saved model")
    p.add_argument("--config")
    _add_data_args(p)
    _add_metric_args(p)
    p.add_argument("--lists", required=False, help="dump written by 'bench --dump-lists'")
    p.add_argument("--model", dest="model_path", required=False)

    p = sub.add_parser("synth", help="write a synthetic ratings file (ml-100k layout)")
    p.add_argument("--config")
    p.add_argument("--users", type=int, default=50)
    p.add_argument("--items", type=int, default=40)
    p.add_argument("--groups", type=int, default=4)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--density", type=float, default=0.6)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        file_values = read_config_file(args.config)
        defaults = {}
        for key, raw in file_values.items():
            dest = "data_path" if key == "data" else "model_path" if key == "model" else key
            if dest not in known or dest == "config":
                raise UsageError(f"unknown config key {key!r}")
            action = known[dest]
            defaults[dest] = action.type(raw) if action.type else raw
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _train_config(args) -> model.TrainConfig | None:
    fixed = {name: getattr(args, name) for name in
             ("dim", "learning_rate", "l2_penalty", "epochs", "init_scale")
             if getattr(args, name) is not None}
    if not fixed:
        return None
    return model.TrainConfig(seed=bench.derive_seed(args.seed, bench.SEARCH), **fixed)


def _require(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            flag = {"data_path": "data", "model_path": "model"}.get(name, name)
            raise UsageError(f"--{flag.replace('_', '-')} is required")


def cmd_train(args):
    _require(args, "data_path", "out")
    data = dataset.load_ratings(args.data_path, args.format)
    parts = dataset.split(data, args.train_fraction, bench.derive_seed(args.seed, bench.SPLIT),
                          stratified=args.stratified)
    fixed = _train_config(args)
    if fixed is not None:
        gmf, cfg = model.train(parts.train, fixed), fixed
    else:
        gmf, cfg = model.random_search(parts, model.SearchSpace(), args.search_trials,
                                       bench.derive_seed(args.seed, bench.SEARCH))
    model.save_model(gmf, args.out)
    mae = model.evaluate_mae(gmf, parts.test)
    print(json.dumps({"model": str(args.out), "test_mae": round(mae, 6), "train_config": asdict(cfg)},
                     sort_keys=True))


def experiment_config(args) -> bench.ExperimentConfig:
    return bench.ExperimentConfig(
        data_path=args.data_path,
        format=args.format,
        train_fraction=args.train_fraction,
        seed=args.seed,
        k_values=args.k_values,
        strategies=args.strategies,
        relevance_threshold=args.relevance_threshold,
        lexicase=selection.LexicaseConfig(args.max_features, args.epsilon_mode, args.epsilon_value),
        search_trials=args.search_trials,
        train_config=_train_config(args),
        user_sample=args.user_sample,
        stratified=args.stratified,
        shortlist=args.shortlist,
        k_meta=args.k_meta,
    )


def cmd_bench(args):
    _require(args, "data_path")
    run = bench.run_pipeline(experiment_config(args))
    bench.emit_report(run.reports, args.output, args.report_format)
    train = run.split.train
    if args.save_model:
        model.save_model(run.model, args.save_model)
    if args.dump_clusters:
        clustering.dump_clusters(run.clusters, train.item_ids, args.dump_clusters)
    if args.dump_lists:
        every = [rec for cell in run.lists.values() for rec in cell]
        selection.dump_lists(every, train.item_ids, train.user_ids, args.dump_lists)


def cmd_score(args):
    _require(args, "data_path", "lists", "model_path")
    data = dataset.load_ratings(args.data_path, args.format)
    parts = dataset.split(data, args.train_fraction, bench.derive_seed(args.seed, bench.SPLIT),
                          stratified=args.stratified)
    gmf = model.load_model(args.model_path)
    if gmf.num_items != data.num_items:
        raise DataError("model item count does not match the dataset")
    clusters = clustering.build_cluster_model(
        gmf.item_embeddings, seed=bench.derive_seed(args.seed, bench.CLUSTER), k_meta=args.k_meta)
    try:
        lists = selection.load_lists(args.lists, data.user_index, data.item_index)
    except (KeyError, ValueError) as exc:
        raise DataError(f"{args.lists}: {exc}") from exc
    cells: dict[tuple[str, int], list] = {}
    for rec in lists:
        cells.setdefault((rec.strategy, rec.k), []).append(rec)
    relevant = {}
    reports = []
    for (strategy, k), recs in cells.items():
        for rec in recs:
            if rec.user not in relevant:
                relevant[rec.user] = clustering.relevant_clusters(
                    clusters, dataset.user_history(parts.train, rec.user), args.relevance_threshold)
        reports.append(metrics.score_lists(recs, parts.test, clusters, relevant, strategy, k))
    bench.emit_report(reports, args.output, args.report_format)


def cmd_synth(args):
    params = synthetic.SyntheticParams(args.users, args.items, args.groups, args.seed,
                                       args.noise, args.density)
    text = dataset.format_ratings(synthetic.generate_synthetic(params), "ml-100k")
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)


COMMANDS = {"train": cmd_train, "bench": cmd_bench, "score": cmd_score, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        # argparse exits on --help and on usage errors
        return EXIT_OK if exc.code in (None, 0) else EXIT_USAGE
    except UsageError as exc:
        print(f"lexirec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"lexirec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lexirec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DivergenceError, SearchError) as exc:
        print(f"lexirec: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, OSError) as exc:
        print(f"lexirec: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"lexirec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
