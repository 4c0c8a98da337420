"""Seeded benchmark suite on synthetic cities.

A run trains the embedder on the training split of one city and localizes
the test-split street queries of an evaluation city (the same city, or an
unseen one) against all of that city's bird's-eye references.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field

import numpy as np

from .domset import SolverConfig
from .metric import Embedder, average_precision, train_embedder
from .pipeline import (
    DEFAULT_THRESHOLDS,
    AccuracyCurve,
    LocalizationResult,
    build_image_index,
    evaluate,
    localize_domset,
    localize_full_image,
    localize_nn1,
    localize_random,
)
from .retrieval import DEFAULT_K, BuildingRecord, build_index
from .synth import SynthCity, SynthConfig, generate, make_pair_dataset, make_query_set

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuiteConfig:
    city: SynthConfig = SynthConfig()
    eval_city: SynthConfig | None = None  # None: evaluate on the training city's test split
    train_seed: int = 0
    pair_seed: int = 1
    query_seed: int = 2
    random_seed: int = 3
    epochs: int = 20
    learning_rate: float = 0.01
    batch_size: int = 1
    query_view: str = "street"
    # None: per-view default; "select": best of k_grid on training-split queries
    k: int | str | None = "select"
    k_grid: tuple[int, ...] = (1, 5, 10, 50, 100)
    sigma: float = 0.3
    alpha: float = 0.5
    solver: SolverConfig = SolverConfig()
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    backend: str | None = None


@dataclass
class SuiteResult:
    embedder: Embedder
    ap_trained: float
    ap_untrained: float
    k: int = 0
    k_curve: list[tuple[int, float]] = field(default_factory=list)
    results: dict[str, list[LocalizationResult]] = field(default_factory=dict)
    curve: AccuracyCurve | None = None

    def accuracy(self, variant: str, threshold: float = 300.0) -> float:
        return self.curve.at(variant, threshold)


def embed_records(records, embedder: Embedder) -> list[BuildingRecord]:
    """Copies of ``records`` with embeddings filled from their raw features."""
    if not records:
        return []
    E = embedder.embed(np.array([r.raw_features for r in records]))
    return [dataclasses.replace(r, embedding=e) for r, e in zip(records, E)]


def pair_ap(embedder: Embedder, pairs) -> float:
    X = embedder.embed(np.array([p.x_raw for p in pairs]))
    Y = embedder.embed(np.array([p.y_raw for p in pairs]))
    d = np.minimum(np.linalg.norm(X - Y, axis=1), 2.0)
    return average_precision(list(zip(1.0 - d / 2.0, [p.label for p in pairs])))


def train_on_city(city: SynthCity, cfg: SuiteConfig) -> Embedder:
    pairs = make_pair_dataset(city, seed=cfg.pair_seed, split="train")
    return train_embedder(pairs, cfg.epochs, cfg.learning_rate, cfg.train_seed,
                          batch_size=cfg.batch_size)


def localize_city(city: SynthCity, embedder: Embedder, cfg: SuiteConfig, k: int,
                  variants=("domset_4v", "domset_1v", "nn1", "random", "full_image")
                  ) -> dict[str, list[LocalizationResult]]:
    view = cfg.query_view
    ref_view = "bird" if view == "street" else "street"
    refs = embed_records(city.records_for(ref_view), embedder)
    index = build_index(refs)
    q4 = make_query_set(city, view, 4, cfg.query_seed)
    q1 = make_query_set(city, view, 1, cfg.query_seed)
    embedded = {r.id: r for r in embed_records([b for q in q4 for b in q.buildings], embedder)}

    def emb(q):
        return [embedded[b.id] for b in q.buildings]

    out: dict[str, list[LocalizationResult]] = {}
    if "domset_4v" in variants:
        out["domset_4v"] = [localize_domset(emb(q), index, k, cfg.sigma, cfg.alpha, cfg.solver,
                                            q.truth, q.query_id, cfg.backend) for q in q4]
    if "domset_1v" in variants:
        out["domset_1v"] = [localize_domset(emb(q), index, k, cfg.sigma, cfg.alpha, cfg.solver,
                                            q.truth, q.query_id, cfg.backend) for q in q1]
    if "nn1" in variants:
        out["nn1"] = [localize_nn1(emb(q), index, q.truth, q.query_id) for q in q1]
    if "random" in variants:
        rng = np.random.default_rng(cfg.random_seed)
        out["random"] = [localize_random(index, int(rng.integers(2**31)), view, q.truth, q.query_id)
                         for q in q1]
    if "full_image" in variants:
        images = build_image_index(city.records_for(ref_view), embedder)
        qimg = build_image_index([b for q in q1 for b in q.buildings], embedder)
        lookup = dict(zip(qimg.image_ids, qimg.embeddings))
        out["full_image"] = [localize_full_image(lookup[q.query_id], images, view, q.truth, q.query_id)
                             for q in q1]
    return out


def run_suite(cfg: SuiteConfig = SuiteConfig(), variants=None) -> SuiteResult:
    train_city = generate(cfg.city)
    embedder = train_on_city(train_city, cfg)
    eval_city = generate(cfg.eval_city) if cfg.eval_city is not None else train_city
    held_out = make_pair_dataset(eval_city, seed=cfg.pair_seed + 1, split="test")
    untrained = Embedder.random(embedder.f_raw, embedder.f, seed=cfg.train_seed)
    res = SuiteResult(embedder, pair_ap(embedder, held_out), pair_ap(untrained, held_out))
    if cfg.k == "select":
        # chosen on the training city's training split, never on evaluation queries
        res.k_curve = k_sweep(train_city, embedder, cfg, cfg.k_grid, split="train")
        res.k = max(res.k_curve, key=lambda t: (t[1], -t[0]))[0]
    else:
        res.k = int(cfg.k) if cfg.k is not None else DEFAULT_K[cfg.query_view]
    kwargs = {} if variants is None else {"variants": variants}
    res.results = localize_city(eval_city, embedder, cfg, res.k, **kwargs)
    res.curve = AccuracyCurve(tuple(sorted(cfg.thresholds)))
    for name, rs in res.results.items():
        (acc,) = evaluate(rs, cfg.thresholds).accuracy.values()
        res.curve.accuracy[name] = acc
    return res


def k_sweep(city: SynthCity, embedder: Embedder, cfg: SuiteConfig,
            ks=(1, 5, 10, 50, 100), n_views: int = 4, threshold: float = 300.0,
            split: str | None = "test") -> list[tuple[int, float]]:
    """Accuracy at ``threshold`` of the dominant-set localizer as a function of k."""
    view = cfg.query_view
    ref_view = "bird" if view == "street" else "street"
    index = build_index(embed_records(city.records_for(ref_view), embedder))
    queries = make_query_set(city, view, n_views, cfg.query_seed, split=split)
    embedded = {r.id: r for r in embed_records([b for q in queries for b in q.buildings], embedder)}
    curve = []
    for k in ks:
        rs = [localize_domset([embedded[b.id] for b in q.buildings], index, k, cfg.sigma, cfg.alpha,
                              cfg.solver, q.truth, q.query_id, cfg.backend) for q in queries]
        curve.append((int(k), evaluate(rs, (threshold,)).accuracy["domset"][0]))
    return curve
