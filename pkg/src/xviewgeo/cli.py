"""Command-line entry point.

Typical pipeline::

    xviewgeo synth --seed 0 --out city.jsonl
    xviewgeo train city.jsonl --seed 0 --out model.txt
    xviewgeo embed city.jsonl --model model.txt --out city.emb.jsonl
    xviewgeo localize city.emb.jsonl --method domset --method random --out results.csv
    xviewgeo eval results.csv --out curves.csv
    xviewgeo bench --out bench.csv

Exit codes: 0 success, 1 usage error, 2 data error, 3 budget or scale error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import _backend
from .domset import SolverConfig
from .errors import DataError, ScaleError, XViewGeoError
from .experiments import embed_records
from .geo import GpsCoord
from .io import emit, ensure_parent, ingest, read_results, write_curves, write_k_curve, write_results
from .metric import Embedder, train_embedder
from .pipeline import (
    DEFAULT_THRESHOLDS,
    METHODS,
    build_image_index,
    evaluate,
    localize_domset,
    localize_full_image,
    localize_gmcp,
    localize_nn1,
    localize_random,
)
from .retrieval import DEFAULT_K, VIEWS, BuildingRecord, build_index, other_view
from .synth import SynthConfig, generate, make_pairs

logger = logging.getLogger("xviewgeo")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SCALE = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}") from None


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    cfg = SynthConfig(n_locations=args.n_locations, seed=args.seed, world_seed=args.world_seed,
                      city=args.city, feature_noise_sigma=args.noise,
                      detection_dropout_prob=args.dropout, train_fraction=args.train_fraction)
    city = generate(cfg)
    emit(city.records, ensure_parent(args.out))
    logger.info("wrote %d records for %d locations to %s", len(city.records), cfg.n_locations, args.out)
    return EXIT_OK


def _split_filter(records, split):
    if split == "all":
        return list(records)
    return [r for r in records if r.split == split]


def cmd_train(args) -> int:
    records, _ = ingest(args.records)
    chosen = _split_filter(records, args.split)
    if any(r.raw_features is None for r in chosen):
        raise DataError("training needs raw_features on every record")
    street = [r for r in chosen if r.view == "street"]
    bird = [r for r in chosen if r.view == "bird"]
    pairs = make_pairs(street, bird, args.negatives, seed=args.seed)
    e = train_embedder(pairs, args.epochs, args.lr, args.seed, f=args.dim, hidden=args.hidden,
                       margin=args.margin, batch_size=args.batch_size)
    e.save(ensure_parent(args.out))
    logger.info("trained on %d pairs; loss %.4f -> %.4f", len(pairs), e.history[0], min(e.history))
    return EXIT_OK


def cmd_embed(args) -> int:
    records, _ = ingest(args.records)
    if any(r.raw_features is None for r in records):
        raise DataError("embedding needs raw_features on every record")
    emit(embed_records(records, Embedder.load(args.model)), ensure_parent(args.out))
    return EXIT_OK


def _group_queries(records: list[BuildingRecord], views: int) -> list[tuple[str, list[BuildingRecord]]]:
    """Queries sorted by id: one per image (1 view) or one per capture location (4 views)."""
    groups: dict[str, list[BuildingRecord]] = {}
    for r in records:
        if views == 1:
            key = r.image_id
        else:
            key = f"{r.city}@{r.gps.lat:.7f}:{r.gps.lon:.7f}"
        groups.setdefault(key, []).append(r)
    return sorted(groups.items())


def _truth(buildings) -> GpsCoord:
    return buildings[0].gps


def cmd_localize(args) -> int:
    records, _ = ingest(args.records)
    if any(r.embedding is None for r in records):
        raise DataError("localization needs embeddings on every record; run 'embed' first")
    queries_pool = [r for r in records if r.view == args.query_view]
    if args.split != "all":
        queries_pool = [r for r in queries_pool if r.split == args.split]
    refs = [r for r in records if r.view == other_view(args.query_view)]
    if not queries_pool:
        raise DataError(f"no {args.query_view} query records in split {args.split!r}")
    if not refs:
        raise DataError(f"no {other_view(args.query_view)} reference records")
    index = build_index(refs)
    k = args.k if args.k is not None else DEFAULT_K[args.query_view]
    cfg = SolverConfig(max_iterations=args.max_iter)
    queries = _group_queries(queries_pool, args.views)
    methods = args.method or ["domset"]
    debug_dir = None
    if args.debug_dir:
        debug_dir = Path(args.debug_dir)
        debug_dir.mkdir(parents=True, exist_ok=True)

    results = []
    for method in methods:
        if method == "domset":
            results += [localize_domset(b, index, k, args.sigma, args.alpha, cfg, _truth(b), qid,
                                        args.backend, debug_dir) for qid, b in queries]
        elif method == "gmcp":
            results += [localize_gmcp(b, index, k, args.sigma, args.alpha, _truth(b), qid,
                                      budget=args.budget, seed=args.seed, backend=args.backend,
                                      exact_only=args.exact) for qid, b in queries]
        elif method == "nn1":
            results += [localize_nn1(b, index, _truth(b), qid) for qid, b in queries]
        elif method == "random":
            rng = np.random.default_rng(args.seed)
            results += [localize_random(index, int(rng.integers(2**31)), args.query_view, _truth(b), qid)
                        for qid, b in queries]
        elif method == "full_image":
            model = Embedder.load(args.model) if args.model else None
            images = build_image_index(refs, model)
            for qid, b in queries:
                (emb,) = build_image_index(b, model).embeddings.mean(axis=0, keepdims=True)
                emb = emb / np.linalg.norm(emb)
                results.append(localize_full_image(emb, images, args.query_view, _truth(b), qid))
    write_results(results, ensure_parent(args.out), timing=args.timing)

    if args.k_curve:
        curve = []
        for kk in args.k_grid:
            rs = [localize_domset(b, index, kk, args.sigma, args.alpha, cfg, _truth(b), qid, args.backend)
                  for qid, b in queries]
            curve.append((kk, evaluate(rs, (args.k_threshold,)).accuracy["domset"][0]))
        write_k_curve(curve, ensure_parent(args.k_curve), args.k_threshold)
    return EXIT_OK


def cmd_eval(args) -> int:
    results = []
    for path in args.results:
        results += read_results(path)
    curve = evaluate(results, args.thresholds)
    write_curves(curve, ensure_parent(args.out))
    for method, acc in curve.accuracy.items():
        cells = " ".join(f"{t:g}m={a:.3f}" for t, a in zip(curve.thresholds_m, acc))
        print(f"{method}: {cells}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import bench_runtime, write_bench_csv

    rows = bench_runtime(args.nc, args.k, args.trials, args.seed, backend=args.backend,
                         budget=args.budget)
    write_bench_csv(rows, ensure_parent(args.out))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="xviewgeo", description="Cross-view building matching and geo-localization.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic city as JSONL records")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--world-seed", type=int, default=0,
                   help="seed of the shared feature space; keep equal across cities")
    s.add_argument("--city", default="A")
    s.add_argument("--n-locations", type=_positive_int, default=400)
    s.add_argument("--noise", type=float, default=0.15)
    s.add_argument("--dropout", type=float, default=0.1)
    s.add_argument("--train-fraction", type=float, default=0.2)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="fit the contrastive embedder and write a model file")
    t.add_argument("records")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--split", default="train", help="record split to train on, or 'all'")
    t.add_argument("--epochs", type=_positive_int, default=20)
    t.add_argument("--lr", type=_positive_float, default=0.01)
    t.add_argument("--batch-size", type=_positive_int, default=1)
    t.add_argument("--margin", type=_positive_float, default=1.0)
    t.add_argument("--dim", type=_positive_int, default=32, help="embedding dimension")
    t.add_argument("--hidden", type=_positive_int, default=None, help="hidden ReLU layer width")
    t.add_argument("--negatives", type=int, default=20, help="unmatched pairs per matched pair")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("embed", help="fill record embeddings from raw features")
    e.add_argument("records")
    e.add_argument("--model", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_embed)

    lo = sub.add_parser("localize", help="localize query images and write a results CSV")
    lo.add_argument("records")
    lo.add_argument("--out", required=True)
    lo.add_argument("--method", action="append", choices=METHODS,
                    help="repeatable; default domset")
    lo.add_argument("--query-view", choices=VIEWS, default="street")
    lo.add_argument("--split", default="test", help="query split, or 'all'")
    lo.add_argument("--views", type=int, choices=(1, 4), default=4,
                    help="1: one query per image; 4: all images of a location")
    lo.add_argument("--k", type=_positive_int, default=None,
                    help="neighbors per query building (default 100 street, 10 bird)")
    lo.add_argument("--sigma", type=_positive_float, default=0.3, help="GPS kernel width in km")
    lo.add_argument("--alpha", type=float, default=0.5, help="weight of the matching score")
    lo.add_argument("--seed", type=int, default=0)
    lo.add_argument("--max-iter", type=_positive_int, default=10000)
    lo.add_argument("--budget", type=_positive_int, default=10**6,
                    help="largest one-per-cluster enumeration for exact gmcp")
    lo.add_argument("--exact", action="store_true",
                    help="gmcp: fail instead of falling back to local search over budget")
    lo.add_argument("--model", help="embedder for full-image descriptors")
    lo.add_argument("--backend", choices=_backend.available(), default=None)
    lo.add_argument("--timing", action="store_true",
                    help="record runtime_ms (otherwise 0 so output is reproducible)")
    lo.add_argument("--debug-dir", help="write per-query graph dumps and solver traces here")
    lo.add_argument("--k-curve", help="also write dominant-set accuracy as a function of k")
    lo.add_argument("--k-grid", type=_ints, default=[1, 5, 10, 50, 100])
    lo.add_argument("--k-threshold", type=_positive_float, default=300.0)
    lo.set_defaults(func=cmd_localize)

    ev = sub.add_parser("eval", help="accuracy-versus-threshold curves from results CSVs")
    ev.add_argument("results", nargs="+")
    ev.add_argument("--out", required=True)
    ev.add_argument("--thresholds", type=_floats, default=list(DEFAULT_THRESHOLDS),
                    help="comma-separated meters")
    ev.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="solver runtime table")
    b.add_argument("--out", required=True)
    b.add_argument("--nc", type=_ints, default=[2, 3, 4], help="comma-separated cluster counts")
    b.add_argument("--k", type=_ints, default=list(range(2, 11)), help="comma-separated cluster sizes")
    b.add_argument("--trials", type=_positive_int, default=5)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--budget", type=_positive_int, default=10**6)
    b.add_argument("--backend", choices=_backend.available(), default=None)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ScaleError as exc:
        print(f"xviewgeo: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except (DataError, OSError) as exc:
        print(f"xviewgeo: {exc}", file=sys.stderr)
        return EXIT_DATA
    except XViewGeoError as exc:
        print(f"xviewgeo: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
