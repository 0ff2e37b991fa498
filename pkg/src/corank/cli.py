"""Command-line front end.

Commands: split | synth | encode | train | eval | bench. Every option can come
from (highest precedence first) a command-line flag, a key=value line in the
--config file, or a CORANK_<KEY> environment variable; names match one to one.
Logs go to stderr, artifacts to files under --out. Exit codes: 0 success,
1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import bench as bench_mod
from . import bloom, graphs, listwise, metrics, pairwise, pointwise, report
from .data import (CONTINUOUS, EXPLICIT, IMPLICIT, SyntheticSpec, binarize,
                   generate_synthetic, load_ratings, save_mapping, save_ratings,
                   split_fixed_count)
from .errors import (ConfigError, CorankError, DataError, MetricError,
                     ParseError, TrainingError)
from .factors import load_model, save_model, save_training_log

logger = logging.getLogger("corank")

ENV_PREFIX = "CORANK_"

ALGORITHMS = ("mf", "grmf", "grwmf", "cofactor", "primal-cr", "primal-crpp", "sql-rank")


class UsageError(CorankError):
    pass


@dataclass
class Opt:
    name: str
    conv: object
    default: object = None
    help: str = ""
    required: bool = False


def _bool(text):
    if isinstance(text, bool):
        return text
    if text.lower() in ("1", "true", "yes", "on"):
        return True
    if text.lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    return [int(p) for p in text.split(",") if p]


def _str_list(text):
    return [p.strip() for p in text.split(",") if p.strip()]


_COMMON = [
    Opt("out", str, ".", "output directory"),
    Opt("seed", int, 0, "random seed"),
    Opt("threads", int, 1, "worker threads for solver pools"),
    Opt("deterministic", _bool, True, "deterministic mode"),
]

_OPTIONS = {
    "split": _COMMON + [
        Opt("ratings", str, required=True, help="ratings file to split"),
        Opt("mode", str, EXPLICIT, "explicit|implicit|continuous"),
        Opt("n-train", int, required=True, help="train ratings per user"),
        Opt("min-test", int, 10, "minimum test ratings per kept user"),
    ],
    "synth": _COMMON + [
        Opt("users", int, 1000), Opt("items", int, 200), Opt("rank", int, 10),
        Opt("influence-weight", float, 0.6, "neighbor influence weight"),
        Opt("steps", int, 3, "propagation steps"),
        Opt("edge-prob", float, 0.001, "random graph edge probability"),
        Opt("train-frac", float, 0.05), Opt("test-frac", float, 0.02),
    ],
    "encode": _COMMON + [
        Opt("graph", str, required=True, help="edge list file"),
        Opt("depth", int, 3, "propagation depth"),
        Opt("bits", int, None, "bit array length c (overrides capacity sizing)"),
        Opt("hashes", int, None, "hash count k (with --bits)"),
        Opt("capacity", int, None, "target elements per filter"),
        Opt("fp-rate", float, 0.1, "false positive rate for capacity sizing"),
        Opt("theta", float, None, "saturation cap (defaults to capacity, else inf)"),
    ],
    "train": _COMMON + [
        Opt("algorithm", str, required=True, help="|".join(ALGORITHMS)),
        Opt("train", str, required=True, help="training ratings file"),
        Opt("train-mode", str, EXPLICIT, "explicit|implicit|continuous"),
        Opt("pairs", str, None, "explicit comparison file (primal-cr only)"),
        Opt("graph", str, None, "side graph file"),
        Opt("encoding", str, None, "node sketch file"),
        Opt("binarize-threshold", int, None, "binarize explicit input at this level"),
        Opt("rank", int, 10), Opt("lam", float, 0.1), Opt("mu", float, 0.1),
        Opt("rho-zero", float, 0.01, "confidence weight of zero entries"),
        Opt("step-size", float, 0.05), Opt("decay", float, 0.97),
        Opt("epochs", int, 40),
        Opt("outer-iters", int, 30, "outer iterations (primal-cr)"),
        Opt("cg-iters", int, 25), Opt("cg-tol", float, 1e-2),
        Opt("top-k", int, None, "list truncation (sql-rank)"),
        Opt("rho-neg", float, 3.0, "negatives per positive (sql-rank implicit)"),
        Opt("eval", str, None, "held-out ratings file for per-epoch metrics"),
        Opt("eval-mode", str, None, "mode of the eval file (defaults to train-mode)"),
    ],
    "eval": _COMMON + [
        Opt("model", str, required=True),
        Opt("train", str, None, "training ratings (candidate exclusion)"),
        Opt("train-mode", str, EXPLICIT),
        Opt("test", str, None, "test ratings file"),
        Opt("test-mode", str, None, "defaults to train-mode"),
        Opt("metrics", _str_list, ["ndcg@10", "rmse"],
            "comma list, e.g. ndcg@10,precision@5,pairwise-error,map,hlu"),
        Opt("relevance-threshold", int, 4, "explicit precision relevance level"),
        Opt("rgg", _str_list, None,
            "three RMSE values: baseline,with-graph,with-x"),
    ],
    "bench": _COMMON + [
        Opt("kind", str, "kernels", "kernels|encode"),
        Opt("users", int, 2000), Opt("rank", int, 32), Opt("levels", int, 5),
        Opt("per-user-grid", _int_list, [50, 100, 200, 400]),
        Opt("kernels", _str_list, ["naive", "fast", "scan"]),
        Opt("repeats", int, 3),
        Opt("nodes", int, 2000), Opt("edge-prob", float, 0.005),
        Opt("depth-grid", _int_list, [1, 2, 3, 4]),
        Opt("bits", int, 256), Opt("hashes", int, 3),
    ],
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _build_parser():
    parser = _Parser(prog="corank", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    for command, opts in _OPTIONS.items():
        p = sub.add_parser(command)
        p.error = parser.error
        p.add_argument("--config", default=None, help="key=value config file")
        for opt in opts:
            p.add_argument(f"--{opt.name}", default=None, help=opt.help)
    return parser


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"config line {line_no}: expected key=value")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def resolve_config(command, args):
    """Merge defaults, environment, config file, and flags (rising precedence)."""
    opts = _OPTIONS[command]
    file_values = _read_config_file(args.config) if args.config else {}
    resolved = {}
    for opt in opts:
        key = opt.name.replace("-", "_")
        raw = getattr(args, key, None)
        if raw is None:
            raw = file_values.get(opt.name)
        if raw is None:
            raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            if opt.required:
                raise UsageError(f"missing required option --{opt.name}")
            resolved[key] = opt.default
            continue
        try:
            resolved[key] = opt.conv(raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            raise UsageError(f"bad value for --{opt.name}: {exc}") from None
    unknown = set(file_values) - {o.name for o in opts}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return resolved


def _outpath(cfg, name):
    os.makedirs(cfg["out"], exist_ok=True)
    return os.path.join(cfg["out"], name)


def _write_manifest(cfg, path, extra=None):
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            if cfg[key] is not None:
                fh.write(f"{key}={cfg[key]}\n")
        for key, val in (extra or {}).items():
            fh.write(f"{key}={val}\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_split(cfg):
    matrix = load_ratings(cfg["ratings"], mode=cfg["mode"])
    split = split_fixed_count(matrix, cfg["n_train"], cfg["min_test"], cfg["seed"])
    save_ratings(split.train, _outpath(cfg, "train.tsv"))
    save_ratings(split.test, _outpath(cfg, "test.tsv"))
    if matrix.user_ids is not None:
        save_mapping(_outpath(cfg, "user-map.txt"), matrix.user_ids)
        save_mapping(_outpath(cfg, "item-map.txt"), matrix.item_ids)
    _write_manifest(cfg, _outpath(cfg, "split-manifest.txt"), {
        "train_nnz": split.train.nnz, "test_nnz": split.test.nnz})
    logger.info("split: %d train / %d test ratings", split.train.nnz, split.test.nnz)
    return 0


def cmd_synth(cfg):
    spec = SyntheticSpec(cfg["users"], cfg["items"], cfg["rank"],
                         cfg["influence_weight"], cfg["steps"], cfg["edge_prob"],
                         cfg["train_frac"], cfg["test_frac"])
    train, test, graph = generate_synthetic(spec, cfg["seed"])
    save_ratings(train, _outpath(cfg, "train.tsv"))
    save_ratings(test, _outpath(cfg, "test.tsv"))
    graphs.save_graph(graph, _outpath(cfg, "graph.txt"))
    _write_manifest(cfg, _outpath(cfg, "synth-manifest.txt"), {
        "train_nnz": train.nnz, "test_nnz": test.nnz, "edges": graph.edge_count})
    logger.info("synth: %d train / %d test ratings, %d edges",
                train.nnz, test.nnz, graph.edge_count)
    return 0


def cmd_encode(cfg):
    graph = graphs.load_graph(cfg["graph"])
    theta = cfg["theta"]
    if cfg["bits"] is not None:
        c = cfg["bits"]
        k = cfg["hashes"] if cfg["hashes"] is not None else 3
        if theta is None:
            theta = math.inf
    elif cfg["capacity"] is not None:
        c, k = bloom.bloom_params(cfg["capacity"], cfg["fp_rate"])
        if theta is None:
            theta = float(cfg["capacity"])
    else:
        raise UsageError("encode needs --bits or --capacity")
    encoding = bloom.dna_encode(graph, c, k, cfg["depth"], theta=theta,
                                seed=cfg["seed"])
    bloom.save_encoding(encoding, _outpath(cfg, "encoding.txt"))
    logger.info("encode: %d nodes -> %d bits, %d set (%.3f%% dense)",
                graph.n, c, encoding.nnz, 100.0 * encoding.nnz / (graph.n * c))
    return 0


def _load_side_graph(cfg, n_users):
    graph = graphs.load_graph(cfg["graph"]) if cfg["graph"] else None
    if cfg["encoding"]:
        encoding = bloom.load_encoding(cfg["encoding"])
        base = graph if graph is not None else graphs.Graph.from_edges(
            encoding.n, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
        graph = bloom.augment_graph(base, encoding)
    return graph


def cmd_train(cfg):
    algorithm = cfg["algorithm"]
    if algorithm not in ALGORITHMS:
        raise UsageError(f"unknown algorithm {cfg['algorithm']!r}; expected one of {ALGORITHMS}")
    train = load_ratings(cfg["train"], mode=cfg["train_mode"])
    if cfg["binarize_threshold"] is not None:
        train = binarize(train, cfg["binarize_threshold"])
    eval_matrix = None
    if cfg["eval"]:
        eval_matrix = load_ratings(cfg["eval"], mode=cfg["eval_mode"] or cfg["train_mode"])

    if algorithm in ("mf", "grmf", "grwmf", "cofactor"):
        hyper = pointwise.HyperParams(
            rank=cfg["rank"], lam=cfg["lam"], mu=cfg["mu"],
            rho_zero=cfg["rho_zero"], step_size=cfg["step_size"],
            decay=cfg["decay"], epochs=cfg["epochs"], seed=cfg["seed"])
        if algorithm == "mf":
            model = pointwise.mf_train(train, hyper)
        elif algorithm == "grmf":
            model = pointwise.grmf_train(train, _load_side_graph(cfg, train.n_users), hyper)
        elif algorithm == "grwmf":
            model = pointwise.grwmf_train(train, _load_side_graph(cfg, train.n_users), hyper)
        else:
            if cfg["encoding"]:
                side = bloom.bipartite_view(bloom.load_encoding(cfg["encoding"]))
            elif cfg["graph"]:
                side = pointwise.graph_as_ratings(graphs.load_graph(cfg["graph"]))
            else:
                side = None
            model = pointwise.cofactor_train(train, side, hyper)
    elif algorithm in ("primal-cr", "primal-crpp"):
        hyper = pairwise.CrHyper(rank=cfg["rank"], lam=cfg["lam"],
                                 outer_iters=cfg["outer_iters"],
                                 cg_max_iters=cfg["cg_iters"], cg_tol=cfg["cg_tol"],
                                 seed=cfg["seed"])
        variant = "cr" if algorithm == "primal-cr" else "cr++"
        source = train
        if cfg["pairs"]:
            if variant != "cr":
                raise UsageError("comparison files require --algorithm primal-cr")
            source = pairwise.load_pairs(cfg["pairs"])
        model = pairwise.train_primal_cr(source, hyper, variant=variant,
                                         eval_data=eval_matrix)
    else:
        hyper = listwise.ListHyper(rank=cfg["rank"], lam=cfg["lam"],
                                   top_k=cfg["top_k"], rho_neg=cfg["rho_neg"],
                                   step_size=cfg["step_size"], decay=cfg["decay"],
                                   epochs=cfg["epochs"], seed=cfg["seed"])
        mode = IMPLICIT if train.mode == IMPLICIT else EXPLICIT
        model = listwise.train_sql_rank(train, hyper, mode=mode,
                                        eval_train=train, eval_test=eval_matrix)

    save_model(model, _outpath(cfg, "model.txt"))
    log_rows = model.meta.get("log", [])
    save_training_log(log_rows, _outpath(cfg, "train-log.tsv"))
    if log_rows:
        report.save_training_curves(log_rows, _outpath(cfg, "train-curves.png"),
                                    title=algorithm)
    logger.info("train: %s finished %d epochs", algorithm, len(log_rows))
    return 0


def _metric_rows(model, train, test, cfg):
    rows = []
    for token in cfg["metrics"]:
        name, _, keq = token.partition("@")
        k = int(keq) if keq else None
        if name == "ndcg":
            rows.append((name, k or 10, metrics.ndcg_at_k(model, test, k or 10)))
        elif name == "precision":
            if test.mode == IMPLICIT:
                val = metrics.precision_at_k_implicit(model, train, test, k or 10)
            else:
                val = metrics.precision_at_k_explicit(
                    model, train, test, k or 10,
                    relevance_threshold=cfg["relevance_threshold"])
            rows.append((name, k or 10, val))
        elif name == "recall":
            rows.append((name, k or 10, metrics.recall_at_k(model, train, test, k or 10)))
        elif name == "map":
            rows.append((name, None, metrics.map_score(model, train, test)))
        elif name == "hlu":
            rows.append((name, None, metrics.hlu(model, train, test)))
        elif name == "rmse":
            rows.append((name, None, metrics.rmse(model, test)))
        elif name == "pairwise-error":
            rows.append((name, None, metrics.pairwise_error(model, test)))
        else:
            raise UsageError(f"unknown metric {token!r}")
    return rows


def cmd_eval(cfg):
    model = load_model(cfg["model"])
    rows = []
    if cfg["test"]:
        if not cfg["train"]:
            raise UsageError("--test evaluation needs --train for candidate exclusion")
        train = load_ratings(cfg["train"], mode=cfg["train_mode"])
        test = load_ratings(cfg["test"], mode=cfg["test_mode"] or cfg["train_mode"])
        rows.extend(_metric_rows(model, train, test, cfg))
    if cfg["rgg"]:
        if len(cfg["rgg"]) != 3:
            raise UsageError("--rgg needs exactly three RMSE values")
        base, with_g, with_x = (float(x) for x in cfg["rgg"])
        rows.append(("rgg", None, pointwise.rgg(base, with_g, with_x)))
    if not rows:
        raise UsageError("nothing to evaluate: pass --test and/or --rgg")
    metrics.write_metrics_report(_outpath(cfg, "metrics.tsv"), rows)
    report.save_metrics_figure(rows, _outpath(cfg, "metrics.png"))
    for metric, k, value in rows:
        logger.info("eval: %s%s = %.6f", metric, f"@{k}" if k else "", value)
    return 0


def cmd_bench(cfg):
    if cfg["kind"] == "kernels":
        rows = bench_mod.bench_gradient_kernels(
            n_users=cfg["users"], per_user_grid=tuple(cfg["per_user_grid"]),
            rank=cfg["rank"], n_levels=cfg["levels"], repeats=cfg["repeats"],
            seed=cfg["seed"], kernels=tuple(cfg["kernels"]))
        slopes = bench_mod.kernel_slopes(rows)
        bench_mod.write_bench_table(rows, _outpath(cfg, "bench.tsv"), slopes)
        report.save_kernel_bench_figure(rows, slopes, _outpath(cfg, "bench.png"))
        for name, slope in slopes.items():
            logger.info("bench: %s slope %.3f", name, slope)
    elif cfg["kind"] == "encode":
        rows = bench_mod.bench_encoding(
            n=cfg["nodes"], edge_prob=cfg["edge_prob"],
            depth_grid=tuple(cfg["depth_grid"]), c=cfg["bits"], k=cfg["hashes"],
            repeats=cfg["repeats"], seed=cfg["seed"])
        bench_mod.write_bench_table(rows, _outpath(cfg, "bench.tsv"))
        report.save_encode_bench_figure(rows, _outpath(cfg, "bench.png"))
    else:
        raise UsageError(f"unknown bench kind {cfg['kind']!r}")
    return 0


_HANDLERS = {
    "split": cmd_split, "synth": cmd_synth, "encode": cmd_encode,
    "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
}


def main(argv=None):
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = resolve_config(args.command, args)
        return _HANDLERS[args.command](cfg)
    except (UsageError, ConfigError) as exc:
        logger.error("%s", exc)
        return 1
    except (DataError, ParseError, MetricError, OSError) as exc:
        logger.error("%s", exc)
        return 2
    except (TrainingError, FloatingPointError) as exc:
        logger.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
