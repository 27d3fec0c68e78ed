"""Batch command-line interface.

Exit codes: 0 success, 2 usage or contract error, 3 data error, 4 numerical
failure. Diagnostics go to stderr; stdout carries data only for ``--out -``.
Every output carries the hash of the configuration that produced it, either
inline (JSON, JSONL) or in a ``<out>.meta.json`` sidecar (CSV, binary).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from . import analysis
from .config import RunConfig, config_from_dict, dump_config, load_config
from .data import CsvSchema, Dataset, feature_csv_text, load_csv_features
from .entailment import ConeConfig
from .errors import ContractError, DataError, NumericalError
from .pipeline import (
    calibrate_from_config,
    cost_model,
    load_data,
    prepare_splits,
    run_label,
    train_from_config,
)
from .storage import (
    atomic_write_bytes,
    atomic_write_text,
    config_hash,
    embed_dataset,
    encode_embeddings,
    load_checkpoint,
    read_embeddings,
    save_checkpoint,
)
from .trigger import NormStats, check_entropy_thresholds, evaluate_trigger

log = logging.getLogger("hypee")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- output helpers


def _emit(out: str, payload, meta: dict) -> None:
    """Write ``payload`` (str or bytes) to ``out``; ``-`` means stdout."""
    if out == "-":
        if isinstance(payload, bytes):
            sys.stdout.buffer.write(payload)
            sys.stdout.buffer.flush()
        else:
            sys.stdout.write(payload)
            sys.stdout.flush()
        log.info("config_hash %s", meta["config_hash"])
        return
    if isinstance(payload, bytes):
        atomic_write_bytes(out, payload)
    else:
        atomic_write_text(out, payload)
    atomic_write_text(f"{out}.meta.json", json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, default=_jsonable) + "\n"


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, torch.Tensor):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _meta(command: str, cfg_hash: str, **extra) -> dict:
    return {"command": command, "config_hash": cfg_hash, **extra}


# ---------------------------------------------------------------- data selection


def _checkpoint_config(meta: dict) -> RunConfig:
    raw = meta.get("run_config")
    if raw is None:
        raise DataError("checkpoint carries no run configuration; pass --data", code="bad_checkpoint")
    return config_from_dict(raw)


def _select_data(args, cfg: Optional[RunConfig], default_split: str) -> Dataset:
    if getattr(args, "data", None):
        return load_csv_features(args.data, CsvSchema(args.label_column, delimiter=args.delimiter))
    if cfg is None:
        raise UsageError("no data source: pass --data")
    split = getattr(args, "split", None) or default_split
    if split == "all":
        return load_data(cfg)
    splits = prepare_splits(cfg)
    return getattr(splits, split)


def _add_data_args(p, default_split: str) -> None:
    p.add_argument("--data", help="feature CSV (default: regenerate the run's data)")
    p.add_argument("--label-column", default="label")
    p.add_argument("--delimiter", default=",")
    p.add_argument(
        "--split",
        choices=["train", "calibration", "test", "all"],
        help=f"split of the run's own data when --data is absent (default {default_split})",
    )


# ---------------------------------------------------------------- commands


def cmd_train(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    resolved = cfg.to_dict()
    h = config_hash(resolved)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = prepare_splits(cfg)
    label = run_label(cfg)
    header = {"label": label, "mode": cfg.backbone.mode, "lam": cfg.loss.lam, "config_hash": h, "seed": cfg.seed}
    lines = [json.dumps(header)]

    def on_epoch(rec):
        lines.append(json.dumps(rec))
        log.info("epoch %d loss %.4f", rec["epoch"], rec["loss"])

    result = train_from_config(cfg, splits.train, splits.num_classes, on_epoch)
    atomic_write_text(out / "config.yaml", f"# config_hash: {h}\n" + dump_config(cfg))
    atomic_write_text(out / "metrics.jsonl", "\n".join(lines) + "\n")
    save_checkpoint(result.model, out / "checkpoint.npz", resolved, cfg.seed)
    log.info("%s run written to %s (config_hash %s)", label, out, h)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(meta) if meta.get("run_config") else None
    data = _select_data(args, cfg, "calibration")
    h = config_hash(meta.get("run_config") or {})
    t = cfg.trigger if cfg is not None else RunConfig().trigger
    if args.allow_missing:
        t.allow_missing = True
    stats = calibrate_from_config(cfg or RunConfig(trigger=t), model, data)
    doc = {"config_hash": h, "stats": stats.to_dict()}
    _emit(args.out, _json_text(doc), _meta("calibrate", h))
    return EXIT_OK


def _read_stats(path) -> NormStats:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not JSON ({exc})", code="bad_stats") from exc
    return NormStats.from_dict(doc.get("stats", doc))


def cmd_infer(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(meta) if meta.get("run_config") else None
    data = _select_data(args, cfg, "test")
    h = config_hash(meta.get("run_config") or {})
    stats = thresholds = None
    if args.strategy in ("class", "global"):
        if not args.stats:
            raise UsageError(f"strategy {args.strategy!r} needs --stats")
        stats = _read_stats(args.stats)
    elif args.strategy == "entropy":
        raw = args.thresholds
        if raw is None and cfg is not None:
            raw = cfg.trigger.entropy_thresholds
        if raw is None:
            raise UsageError("entropy strategy needs --thresholds")
        values = [float(v) for v in raw.split(",")] if isinstance(raw, str) else list(raw)
        thresholds = check_entropy_thresholds(values, model.config.num_classes, model.config.num_exits - 1)
    use_conf = args.use_confidence or (cfg is not None and cfg.trigger.use_confidence)
    report = evaluate_trigger(model, data.X, data.y, cost_model(model), stats, thresholds, args.strategy, use_conf)
    _emit(args.out, report.to_csv(), _meta("infer", h, strategy=args.strategy, accuracy=report.accuracy))
    return EXIT_OK


def cmd_embed(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    cfg = _checkpoint_config(meta) if meta.get("run_config") else None
    data = _select_data(args, cfg, "test")
    h = config_hash(meta.get("run_config") or {})
    es = embed_dataset(model, data.X, data.y)
    _emit(args.out, encode_embeddings(es), _meta("embed", h, count=len(es), dim=es.dim, mode=es.mode))
    return EXIT_OK


def cmd_make_data(args) -> int:
    cfg = load_config(args.config)
    h = config_hash(cfg.to_dict())
    data = _select_data(args, cfg, "all")
    _emit(args.out, feature_csv_text(data), _meta("make-data", h, rows=len(data)))
    return EXIT_OK


def _read_matrix(path, delimiter: str = ",") -> np.ndarray:
    """Numeric CSV, with or without a header row."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r]
    if not rows:
        raise DataError(f"{path}: empty file", code="schema")

    def numeric(row):
        try:
            [float(v) for v in row]
            return True
        except ValueError:
            return False

    if not numeric(rows[0]):
        rows = rows[1:]
    values = []
    for i, row in enumerate(rows, start=1):
        try:
            values.append([float(v) for v in row])
        except ValueError:
            raise DataError(f"{path}: row {i} is not numeric", code="schema") from None
    if len({len(r) for r in values}) > 1:
        raise DataError(f"{path}: rows have different lengths", code="schema")
    return np.asarray(values, dtype=np.float64)


def cmd_analyze(args) -> int:
    params = {k: v for k, v in vars(args).items() if k not in ("func", "out", "log_level")}
    source = getattr(args, "input", None) or getattr(args, "embeddings", None)
    params["input_digest"] = _file_digest(source)
    h = config_hash(params)
    kind = args.analysis
    if kind == "delta":
        M = _read_matrix(args.input, args.delimiter)
        D = M if args.metric == "precomputed" else analysis.pairwise_distances(M, args.metric, args.curvature)
        if args.metric == "precomputed" and (M.shape[0] != M.shape[1] or not np.allclose(M, M.T)):
            raise DataError(f"{args.input}: a precomputed distance matrix must be square and symmetric", code="schema")
        base = None if args.base_point < 0 else args.base_point
        rep = analysis.delta_hyperbolicity(D, base)
        doc = {"config_hash": h, **rep.__dict__}
        _emit(args.out, _json_text(doc), _meta("analyze delta", h))
    elif kind == "kmeans":
        es = read_embeddings(args.embeddings)
        if es.mode != "hyperbolic":
            raise ContractError("kmeans needs hyperbolic embeddings")
        res = analysis.hyperbolic_kmeans(es.points(), args.k, es.curvature, args.max_iters, args.seed)
        doc = {
            "config_hash": h,
            "assignments": res.assignments,
            "objective": res.objective,
            "geodesic_sse": res.geodesic_sse,
            "iterations": res.iterations,
            "converged": res.converged,
            "reseeded": res.reseeded,
        }
        _emit(args.out, _json_text(doc), _meta("analyze kmeans", h))
    elif kind == "lookahead":
        es = read_embeddings(args.embeddings)
        if not 0 <= args.query < len(es):
            raise ContractError(f"query index {args.query} out of range")
        q = es.points()[args.query]
        qlabel = None if es.labels is None else int(es.labels[args.query])
        min_exit = None
        if args.deeper_only:
            if es.exit_ids is None:
                raise ContractError("--deeper-only needs exit ids in the embedding file")
            min_exit = int(es.exit_ids[args.query]) + 1
        res = analysis.lookahead(q, es, args.T, ConeConfig(args.cone_k, es.curvature), qlabel, min_exit)
        doc = {
            "config_hash": h,
            "query": args.query,
            "T": args.T,
            "indices": res.indices,
            "labels": res.labels,
            "majority": res.majority,
            "precision": res.precision,
        }
        _emit(args.out, _json_text(doc), _meta("analyze lookahead", h))
    elif kind == "traverse":
        es = read_embeddings(args.embeddings)
        if not 0 <= args.start < len(es):
            raise ContractError(f"start index {args.start} out of range")
        steps = analysis.traverse(es.points()[args.start], es, args.steps)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["step", "neighbor", "neighbor_label", "neighbor_exit", "similarity"])
        for i, s in enumerate(steps):
            w.writerow([i, s.neighbor, s.neighbor_label, s.neighbor_exit, repr(s.similarity)])
        _emit(args.out, buf.getvalue(), _meta("analyze traverse", h))
    elif kind == "hist":
        es = read_embeddings(args.embeddings)
        _emit(args.out, analysis.norm_histogram(es, args.bins).to_csv(), _meta("analyze hist", h))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hypee", description="Hyperbolic early-exit networks: training, triggering and analysis.")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a multi-exit model from a config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True, help="output directory")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.set_defaults(func=cmd_train)

    c = sub.add_parser("calibrate", help="fit norm statistics on a reference set")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--out", required=True, help="stats JSON path or - for stdout")
    c.add_argument("--allow-missing", action="store_true")
    _add_data_args(c, "calibration")
    c.set_defaults(func=cmd_calibrate)

    i = sub.add_parser("infer", help="run an exit strategy and report per-exit statistics as CSV")
    i.add_argument("--checkpoint", required=True)
    i.add_argument("--out", required=True)
    i.add_argument("--strategy", default="class", help="class, global, entropy or exit<i>")
    i.add_argument("--stats", help="stats JSON from calibrate")
    i.add_argument("--thresholds", help="comma-separated entropy thresholds, one per gate")
    i.add_argument("--use-confidence", action="store_true")
    _add_data_args(i, "test")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("embed", help="write per-exit embeddings in the binary HYEE format")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--out", required=True)
    _add_data_args(e, "test")
    e.set_defaults(func=cmd_embed)

    m = sub.add_parser("make-data", help="write the config's dataset as a feature CSV")
    m.add_argument("--config", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--split", choices=["train", "calibration", "test", "all"], default="all")
    m.set_defaults(func=cmd_make_data)

    a = sub.add_parser("analyze", help="embedding-space analyses")
    asub = a.add_subparsers(dest="analysis", required=True, parser_class=_Parser)

    d = asub.add_parser("delta", help="delta-hyperbolicity of points or a distance matrix")
    d.add_argument("--input", required=True, help="numeric CSV of points, or a distance matrix")
    d.add_argument("--metric", choices=["euclidean", "lorentz", "precomputed"], default="euclidean")
    d.add_argument("--curvature", type=float, default=1.0)
    d.add_argument("--base-point", type=int, default=0, help="-1 takes the maximum over all base points")
    d.add_argument("--delimiter", default=",")
    d.add_argument("--out", default="-")

    k = asub.add_parser("kmeans", help="hyperbolic k-means")
    k.add_argument("--embeddings", required=True)
    k.add_argument("--k", type=int, required=True)
    k.add_argument("--max-iters", type=int, default=100)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", default="-")

    la = asub.add_parser("lookahead", help="references inside the relaxed cone of a query")
    la.add_argument("--embeddings", required=True)
    la.add_argument("--query", type=int, required=True, help="row index of the query")
    la.add_argument("--T", type=float, default=1.2)
    la.add_argument("--cone-k", type=float, default=0.1)
    la.add_argument("--deeper-only", action="store_true", help="only references from deeper exits")
    la.add_argument("--out", default="-")

    tr = asub.add_parser("traverse", help="walk from a point to the root")
    tr.add_argument("--embeddings", required=True)
    tr.add_argument("--start", type=int, required=True, help="row index of the start point")
    tr.add_argument("--steps", type=int, default=analysis.DEFAULT_TRAVERSAL_STEPS)
    tr.add_argument("--out", default="-")

    hi = asub.add_parser("hist", help="per-exit norm histogram as CSV")
    hi.add_argument("--embeddings", required=True)
    hi.add_argument("--bins", type=int, default=30)
    hi.add_argument("--out", default="-")
    for q in (d, k, la, tr, hi):
        q.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"usage error: no such file: {exc.filename}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error [{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ContractError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
