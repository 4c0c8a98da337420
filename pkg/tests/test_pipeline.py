import math

import numpy as np
import pytest

from xviewgeo.errors import ContractError, EvalError
from xviewgeo.experiments import embed_records
from xviewgeo.geo import GpsCoord, geo_distance_m
from xviewgeo.metric import Embedder
from xviewgeo.pipeline import (
    LocalizationResult,
    build_image_index,
    evaluate,
    localize_domset,
    localize_full_image,
    localize_gmcp,
    localize_nn1,
    localize_random,
)
from xviewgeo.retrieval import build_index, top1
from xviewgeo.synth import SynthConfig, generate, make_query_set

from conftest import make_record


@pytest.fixture(scope="module")
def world():
    city = generate(SynthConfig(n_locations=100, seed=2))
    e = Embedder.random(64, 32, seed=0)
    index = build_index(embed_records(city.bird_records, e))
    street = {r.id: r for r in embed_records(city.street_records, e)}
    queries = [(q, [street[b.id] for b in q.buildings]) for q in make_query_set(city, "street", 4, 0)]
    return city, e, index, queries


def test_single_building_k1_returns_neighbor(world):
    _, _, index, queries = world
    q, b = queries[0]
    r = localize_domset(b[:1], index, k=1, truth=q.truth)
    assert r.predicted == index[top1(index, b[0])[0]].gps
    assert r.error_m == geo_distance_m(r.predicted, q.truth)


def test_nn1_single_building(world):
    _, _, index, queries = world
    _, b = queries[3]
    assert localize_nn1(b[:1], index).predicted == index[top1(index, b[0])[0]].gps


def test_k1_domset_equals_nn1_when_every_cluster_kept(world):
    _, _, index, queries = world
    compared = 0
    for q, b in queries:
        d = localize_domset(b, index, 1)
        if d.n_clusters_used != len(b):
            continue  # the dominant set dropped an inconsistent neighbor
        n = localize_nn1(b, index)
        assert d.predicted.lat == pytest.approx(n.predicted.lat, abs=1e-12)
        assert d.predicted.lon == pytest.approx(n.predicted.lon, abs=1e-12)
        compared += 1
    assert compared >= 10


def test_k1_domset_equals_nn1_for_colocated_neighbors():
    refs = [make_record(f"r{i}", "bird", np.eye(4)[i], x=0.0) for i in range(4)]
    index = build_index(refs)
    qs = [make_record(f"q{i}", "street", np.eye(4)[i] + 0.1) for i in range(4)]
    assert localize_domset(qs, index, 1).predicted == localize_nn1(qs, index).predicted


def test_localizers_are_deterministic(world):
    _, e, index, queries = world
    for q, b in queries[:5]:
        for fn in (lambda: localize_domset(b, index, 5, truth=q.truth),
                   lambda: localize_gmcp(b, index, 3, truth=q.truth),
                   lambda: localize_nn1(b, index, q.truth),
                   lambda: localize_random(index, 7, "street", q.truth)):
            a, c = fn(), fn()
            assert (a.predicted, a.error_m, a.flags) == (c.predicted, c.error_m, c.flags)


def test_empty_query_rejected(world):
    _, _, index, _ = world
    for fn in (localize_domset, localize_nn1, localize_gmcp):
        with pytest.raises(ContractError):
            fn([], index)


def test_debug_dir_outputs(world, tmp_path):
    _, _, index, queries = world
    q, b = queries[0]
    localize_domset(b, index, 4, query_id="Q1", debug_dir=tmp_path)
    assert (tmp_path / "Q1.graph.txt").read_text().startswith("# n=")
    assert (tmp_path / "Q1.trace.csv").read_text().startswith("iteration,payoff,support_size")


def test_gmcp_over_budget_falls_back_to_local(world):
    _, _, index, queries = world
    q, b = max(queries, key=lambda t: len(t[1]))
    r = localize_gmcp(b, index, 30, budget=100)
    assert "local_search" in r.flags


def test_full_image_self_match(world):
    city, e, _, _ = world
    images = build_image_index(city.bird_records, e)
    j = 11
    probe = images.embeddings[j]
    r = localize_full_image(probe, images, "street", truth=images.gps[j], query_id="p")
    assert r.predicted == images.gps[j] and r.error_m == 0.0


def test_random_is_uniform_over_images(world):
    city, _, index, _ = world
    images = sorted({r.image_id for r in city.bird_records})
    hits = {}
    for s in range(4000):
        g = localize_random(index, s).predicted
        hits[g] = hits.get(g, 0) + 1
    # every location that has bird images gets picked, none too often
    locs = {r.gps for r in city.bird_records}
    assert set(hits) <= locs
    per_image = 4000 / len(images)
    for g, count in hits.items():
        n_img = len({r.image_id for r in city.bird_records if r.gps == g})
        assert abs(count - n_img * per_image) < 6 * math.sqrt(n_img * per_image) + 1


def test_random_accuracy_matches_monte_carlo_oracle(world):
    city, _, index, queries = world
    images = {}
    for r in city.bird_records:
        images[r.image_id] = r.gps
    gps = list(images.values())
    # oracle: expected accuracy = mean over queries of the fraction of images within 300 m
    expected = np.mean([np.mean([geo_distance_m(g, q.truth) <= 300.0 for g in gps]) for q, _ in queries])
    trials = 40
    hits = 0
    for t in range(trials):
        rs = [localize_random(index, 1000 * t + i, "street", q.truth) for i, (q, _) in enumerate(queries)]
        hits += sum(r.error_m <= 300.0 for r in rs)
    n = trials * len(queries)
    assert abs(hits / n - expected) < 4 * math.sqrt(expected * (1 - expected) / n)


def _res(err, method="domset", qid="q"):
    return LocalizationResult(qid, method, GpsCoord(0, 0), GpsCoord(0, 0), err)


def test_evaluate_counting():
    curve = evaluate([_res(100), _res(250), _res(400)], [300, math.inf, 50])
    assert curve.thresholds_m == (50.0, 300.0, math.inf)
    assert curve.at("domset", 300.0) == pytest.approx(2 / 3)
    assert curve.at("domset", math.inf) == 1.0
    with pytest.raises(EvalError):
        evaluate([], [300])
    with pytest.raises(EvalError):
        evaluate([LocalizationResult("q", "nn1", GpsCoord(0, 0), None, math.nan)], [300])


def test_evaluate_monotone_and_grouped(rng):
    rs = [_res(float(e), m) for e in rng.uniform(0, 800, 50) for m in ("nn1", "random")]
    curve = evaluate(rs, range(0, 900, 50))
    for acc in curve.accuracy.values():
        assert all(0 <= a <= 1 for a in acc)
        assert all(b >= a for a, b in zip(acc, acc[1:]))
    assert sorted(curve.accuracy) == ["nn1", "random"]


def test_unknown_method_rejected():
    with pytest.raises(ContractError):
        _res(1.0, method="oracle")
