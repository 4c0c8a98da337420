"""End-to-end localization, baselines and accuracy curves."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .affinity import DEFAULT_ALPHA, DEFAULT_SIGMA, build_graph
from .domset import SolverConfig, select_nodes_per_cluster, solve_graph
from .errors import ContractError, EmptySelectionError, EvalError
from .geo import GpsCoord, geo_distance_m, mean_gps
from .gmcp import ENUMERATION_BUDGET, combinations, solve_exact, solve_local
from .metric import Embedder, l2_normalize
from .retrieval import BuildingRecord, ReferenceIndex, knn, other_view, top1

logger = logging.getLogger(__name__)

METHODS = ("domset", "gmcp", "nn1", "random", "full_image")
DEFAULT_THRESHOLDS = (50.0, 100.0, 150.0, 200.0, 250.0, 300.0, 400.0, 500.0)


@dataclass
class LocalizationResult:
    query_id: str
    method: str
    predicted: GpsCoord
    truth: GpsCoord | None
    error_m: float
    n_clusters_used: int = 0
    runtime_ms: float = 0.0
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.method not in METHODS:
            raise ContractError(f"unknown method {self.method!r}")


def _result(query_id, method, predicted, truth, n_used, t0, flags=()) -> LocalizationResult:
    err = geo_distance_m(predicted, truth) if truth is not None else math.nan
    return LocalizationResult(query_id, method, predicted, truth, err, n_used,
                              (time.perf_counter() - t0) * 1000.0, tuple(flags))


def _query_id(buildings: Sequence[BuildingRecord], query_id: str | None) -> str:
    return query_id if query_id is not None else buildings[0].image_id


def localize_nn1(buildings: Sequence[BuildingRecord], index: ReferenceIndex,
                 truth: GpsCoord | None = None, query_id: str | None = None) -> LocalizationResult:
    """Mean GPS of each query building's single nearest reference."""
    if not buildings:
        raise ContractError("need at least one query building")
    t0 = time.perf_counter()
    picks = [index[top1(index, b)[0]].gps for b in buildings]
    return _result(_query_id(buildings, query_id), "nn1", mean_gps(picks), truth, len(picks), t0)


def localize_domset(
    buildings: Sequence[BuildingRecord],
    index: ReferenceIndex,
    k: int | None = None,
    sigma: float = DEFAULT_SIGMA,
    alpha: float = DEFAULT_ALPHA,
    config: SolverConfig = SolverConfig(),
    truth: GpsCoord | None = None,
    query_id: str | None = None,
    backend: str | None = None,
    debug_dir=None,
) -> LocalizationResult:
    """k-NN clusters -> affinity graph -> dominant set -> one reference per cluster -> mean GPS.

    With ``debug_dir`` set, the graph dump and the solver trace CSV of the
    query are written there as ``<query_id>.graph.txt`` and ``<query_id>.trace.csv``.
    """
    if not buildings:
        raise ContractError("need at least one query building")
    t0 = time.perf_counter()
    clusters = [knn(index, b, k) for b in buildings]
    g = build_graph(clusters, index.by_id, sigma, alpha)
    res = solve_graph(g, config, trace=debug_dir is not None, backend=backend)
    if debug_dir is not None:
        stem = Path(debug_dir) / _query_id(buildings, query_id)
        g.dump(f"{stem}.graph.txt")
        res.write_trace(f"{stem}.trace.csv")
    flags = ["degenerate"] if res.degenerate else []
    try:
        chosen = select_nodes_per_cluster(res, g)
    except EmptySelectionError:
        fallback = localize_nn1(buildings, index, truth, query_id)
        return _result(fallback.query_id, "domset", fallback.predicted, truth,
                       fallback.n_clusters_used, t0, flags + ["nn1_fallback"])
    if not res.converged:
        flags.append("not_converged")
    pred = mean_gps([g.nodes[i].gps for i in chosen.values()])
    return _result(_query_id(buildings, query_id), "domset", pred, truth, len(chosen), t0, flags)


def localize_gmcp(
    buildings: Sequence[BuildingRecord],
    index: ReferenceIndex,
    k: int | None = None,
    sigma: float = DEFAULT_SIGMA,
    alpha: float = DEFAULT_ALPHA,
    truth: GpsCoord | None = None,
    query_id: str | None = None,
    budget: int = ENUMERATION_BUDGET,
    restarts: int = 10,
    seed: int = 0,
    backend: str | None = None,
    exact_only: bool = False,
) -> LocalizationResult:
    """Exactly one reference per cluster; exact when affordable, else local search.

    With ``exact_only`` an over-budget instance raises instead.
    """
    if not buildings:
        raise ContractError("need at least one query building")
    t0 = time.perf_counter()
    clusters = [knn(index, b, k) for b in buildings]
    g = build_graph(clusters, index.by_id, sigma, alpha)
    if combinations(g) <= budget or exact_only:
        sol = solve_exact(g, budget, backend=backend)
        flags = []
    else:
        sol = solve_local(g, restarts, seed)
        flags = ["local_search"]
    pred = mean_gps([g.nodes[i].gps for i in sol.selection])
    return _result(_query_id(buildings, query_id), "gmcp", pred, truth, len(sol.selection), t0, flags)


@dataclass
class ImageIndex:
    image_ids: list[str]
    gps: list[GpsCoord]
    embeddings: np.ndarray
    views: list[str]


def image_embeddings(records: Iterable[BuildingRecord], embedder: Embedder | None = None
                     ) -> dict[str, tuple[GpsCoord, np.ndarray, str]]:
    """Image-level descriptor: the embedder applied to the mean raw feature of the image.

    Without an embedder (or raw features), the normalized mean of the
    building embeddings is used instead.
    """
    groups: dict[str, list[BuildingRecord]] = {}
    for r in records:
        groups.setdefault(r.image_id, []).append(r)
    out = {}
    for image_id in sorted(groups):
        recs = groups[image_id]
        if embedder is not None and all(r.raw_features is not None for r in recs):
            emb = embedder.embed(np.mean([r.raw_features for r in recs], axis=0))
        else:
            if any(r.embedding is None for r in recs):
                raise ContractError(f"image {image_id}: building embeddings missing")
            emb = l2_normalize(np.mean([r.embedding for r in recs], axis=0))
        out[image_id] = (recs[0].gps, emb, recs[0].view)
    return out


def build_image_index(records: Iterable[BuildingRecord], embedder: Embedder | None = None) -> ImageIndex:
    emb = image_embeddings(records, embedder)
    ids = list(emb)
    return ImageIndex(ids, [emb[i][0] for i in ids],
                      np.array([emb[i][1] for i in ids]), [emb[i][2] for i in ids])


def localize_full_image(query_embedding: np.ndarray, image_index: ImageIndex, query_view: str,
                        truth: GpsCoord | None = None, query_id: str = "") -> LocalizationResult:
    """GPS of the best-matching reference image (opposite view), ties to lowest image id."""
    t0 = time.perf_counter()
    want = other_view(query_view)
    cand = [i for i, v in enumerate(image_index.views) if v == want]
    if not cand:
        raise ContractError(f"image index has no {want} images")
    d = np.linalg.norm(image_index.embeddings[cand] - query_embedding[None, :], axis=1)
    best = min(range(len(cand)), key=lambda j: (d[j], image_index.image_ids[cand[j]]))
    return _result(query_id, "full_image", image_index.gps[cand[best]], truth, 1, t0)


def localize_random(index: ReferenceIndex, seed: int, query_view: str = "street",
                    truth: GpsCoord | None = None, query_id: str = "") -> LocalizationResult:
    """GPS of a reference image drawn uniformly at random."""
    t0 = time.perf_counter()
    want = other_view(query_view)
    images = sorted({(r.image_id, r.gps) for r in index.records if r.view == want},
                    key=lambda t: t[0])
    if not images:
        raise ContractError(f"index has no {want} images")
    rng = np.random.default_rng(seed)
    pick = images[int(rng.integers(len(images)))]
    return _result(query_id, "random", pick[1], truth, 0, t0)


@dataclass
class AccuracyCurve:
    thresholds_m: tuple[float, ...]
    accuracy: dict[str, tuple[float, ...]] = field(default_factory=dict)

    def at(self, method: str, threshold: float) -> float:
        return self.accuracy[method][self.thresholds_m.index(threshold)]


def evaluate(results: Sequence[LocalizationResult],
             thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
             key=lambda r: r.method) -> AccuracyCurve:
    """Fraction of results with ``error_m <= t`` for each threshold, grouped by ``key``."""
    if not results:
        raise EvalError("no results to evaluate")
    ts = tuple(sorted(float(t) for t in thresholds))
    groups: dict[str, list[float]] = {}
    for r in results:
        if math.isnan(r.error_m):
            raise EvalError(f"result {r.query_id} has no ground truth")
        groups.setdefault(key(r), []).append(r.error_m)
    curve = AccuracyCurve(ts)
    for name in sorted(groups):
        errs = np.array(groups[name])
        curve.accuracy[name] = tuple(float(np.mean(errs <= t)) for t in ts)
    return curve
