"""Acceptance criteria 1 to 9, each at its stated tolerance.

Run with ``pytest tests/test_acceptance.py``; a pass/fail line per
criterion is printed in the "acceptance criteria" section of the summary.
"""

import itertools
import json
import time

import numpy as np
import pytest

from xviewgeo import _backend
from xviewgeo.affinity import build_graph
from xviewgeo.bench import bench_runtime, fit_enumeration_model, fit_poly_degree, random_graph, speedup
from xviewgeo.cli import main as cli
from xviewgeo.domset import (
    SolverConfig,
    WeightOracle,
    exhaustive_dominant_sets,
    payoff,
    solve,
    solve_graph,
    verify_dominant,
)
from xviewgeo.errors import DegenerateVectorError
from xviewgeo.experiments import SuiteConfig, embed_records, pair_ap, run_suite, train_on_city
from xviewgeo.gmcp import solve_exact
from xviewgeo.metric import Embedder, PairSample, contrastive_grad
from xviewgeo.retrieval import build_index, knn
from xviewgeo.synth import SynthConfig, generate, make_pair_dataset, make_query_set

from conftest import record_criterion

TRACED = SolverConfig(check_invariants=True)


def criterion1_graphs(seed=2024, count=100):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        nc = int(rng.integers(2, 6))
        k = int(rng.integers(1, 5))
        out.append(random_graph(nc, k, rng, extent_m=float(rng.uniform(300, 6000))))
    return out


def test_criterion_1_dominant_set_correctness():
    t0 = time.perf_counter()
    verified = local = failed = 0
    for g in criterion1_graphs():
        assert g.n <= 20
        res = solve_graph(g, TRACED)
        if verify_dominant(res.support, g.A, tol=1e-9):
            verified += 1
            continue
        # not a verified dominant set: accept as a local solution if its payoff
        # is within 5% of the best exhaustively verified dominant set
        oracle = WeightOracle(g.A)
        best = max(payoff(g.A, oracle.characteristic_vector(S))
                   for S in exhaustive_dominant_sets(g.A))
        if res.payoff >= 0.95 * best:
            local += 1
            print(f"local solution: payoff {res.payoff:.6g} vs best {best:.6g}")
        else:
            failed += 1
    elapsed = time.perf_counter() - t0
    ok = failed == 0 and elapsed < 10.0
    record_criterion("criterion 1", ok, f"{verified} verified, {local} local within 5%, "
                                        f"{failed} failed, {elapsed:.2f}s")
    assert ok


def _random_symmetric(rng, n, density):
    A = rng.uniform(0, 1, (n, n)) * (rng.uniform(0, 1, (n, n)) < density)
    A = np.triu(A, 1)
    return A + A.T


def _localization_matrices(n_queries=40):
    city = generate(SynthConfig(n_locations=100, seed=8))
    e = Embedder.random(64, 32, seed=1)
    index = build_index(embed_records(city.bird_records, e))
    street = {r.id: r for r in embed_records(city.street_records, e)}
    mats = []
    for q in make_query_set(city, "street", 4, 0)[:n_queries]:
        clusters = [knn(index, street[b.id], 10) for b in q.buildings]
        g = build_graph(clusters, index.by_id)
        if g.n_clusters > 1:
            mats.append(g.A)
    return mats


def test_criterion_2_replicator_invariants():
    rng = np.random.default_rng(77)
    mats = [g.A for g in criterion1_graphs()]
    mats += [_random_symmetric(rng, int(rng.integers(2, 80)), float(rng.uniform(0.2, 1.0)))
             for _ in range(100)]
    mats += _localization_matrices()
    worst_sum, worst_drop, runs = 0.0, 0.0, 0
    for A in mats:
        if not np.any(A > 0):
            continue
        for backend in _backend.available():
            r = solve(A, trace=True, backend=backend)
            worst_sum = max(worst_sum, r.max_simplex_dev)
            if len(r.payoff_trace) > 1:
                worst_drop = max(worst_drop, float(np.max(r.payoff_trace[:-1] - r.payoff_trace[1:])))
            assert np.all(r.x >= 0)
            runs += 1
    ok = worst_sum <= 1e-12 and worst_drop <= 1e-12
    record_criterion("criterion 2", ok, f"{runs} trajectories, max |sum x - 1| {worst_sum:.2e}, "
                                        f"max payoff drop {worst_drop:.2e}")
    assert ok


def brute_force_gmcp(A, members):
    """Independent enumerator: every one-per-cluster choice scored at once."""
    grids = np.array(list(itertools.product(*members)))
    total = np.zeros(len(grids))
    for a, b in itertools.combinations(range(grids.shape[1]), 2):
        total += A[grids[:, a], grids[:, b]]
    best = int(np.argmax(total))  # first maximum: lexicographic tie-break
    return tuple(int(v) for v in grids[best]), float(total[best])


def test_criterion_3_gmcp_exactness():
    rng = np.random.default_rng(303)
    mismatches, instances, largest = 0, 0, 0
    while instances < 100:
        nc = int(rng.integers(2, 7))
        k = int(rng.integers(1, 11))
        if k ** nc > 10**5:
            continue
        g = random_graph(nc, k, rng)
        sel, w = brute_force_gmcp(g.A, g.cluster_members())
        for backend in _backend.available():
            sol = solve_exact(g, budget=10**5, backend=backend)
            if sol.selection != sel or abs(sol.total_weight - w) > 1e-9 * max(1.0, abs(w)):
                mismatches += 1
        instances += 1
        largest = max(largest, k ** nc)
    ok = mismatches == 0
    record_criterion("criterion 3", ok, f"{instances} instances up to {largest} combinations, "
                                        f"{mismatches} mismatches")
    assert ok


def _fd_grad(e, s, h=1e-5):
    out = []
    for w in e.weights:
        g = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + h
            lp = e.loss_and_grad(s.x_raw, s.y_raw, [s.label])[0]
            w[idx] = old - h
            lm = e.loss_and_grad(s.x_raw, s.y_raw, [s.label])[0]
            w[idx] = old
            g[idx] = (lp - lm) / (2 * h)
        out.append(g)
    return out


def test_criterion_4_gradient_check():
    rng = np.random.default_rng(404)
    worst = 0.0
    for t in range(100):
        hidden = None if t % 2 else 6
        e = Embedder.random(8, 4, hidden, seed=t)
        while True:
            s = PairSample(rng.normal(size=8), rng.normal(size=8), int(rng.integers(2)))
            try:
                e.embed(np.stack([s.x_raw, s.y_raw]))
                break
            except DegenerateVectorError:  # all hidden units off: no embedding to differentiate
                continue
        for a, n in zip(contrastive_grad(s, e), _fd_grad(e, s)):
            rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-6)
            worst = max(worst, float(rel.max()))
    ok = worst <= 1e-4
    record_criterion("criterion 4", ok, f"100 samples, max relative error {worst:.2e}")
    assert ok


@pytest.fixture(scope="module")
def suite():
    return run_suite(SuiteConfig())


@pytest.mark.slow
def test_criterion_5_metric_learning(suite):
    res = suite
    # timed separately: training plus held-out AP, without the localization stage
    t0 = time.perf_counter()
    cfg = SuiteConfig()
    city = generate(cfg.city)
    emb = train_on_city(city, cfg)
    held_out = make_pair_dataset(city, seed=cfg.pair_seed + 1, split="test")
    ap_t = pair_ap(emb, held_out)
    ap_u = pair_ap(Embedder.random(emb.f_raw, emb.f, seed=cfg.train_seed), held_out)
    elapsed = time.perf_counter() - t0
    assert ap_t == res.ap_trained and ap_u == res.ap_untrained
    ok = ap_t >= 2 * ap_u and elapsed < 60.0
    record_criterion("criterion 5", ok, f"AP trained {ap_t:.3f} vs untrained {ap_u:.3f} "
                                        f"(ratio {ap_t / ap_u:.1f}), {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_6_method_ordering(suite):
    res = suite
    acc = {v: res.accuracy(v, 300.0) for v in res.results}
    ok = (acc["domset_4v"] >= acc["domset_1v"] >= acc["nn1"] > acc["random"]
          and acc["domset_4v"] > acc["full_image"])
    detail = ", ".join(f"{v} {a:.3f}" for v, a in sorted(acc.items(), key=lambda t: -t[1]))
    record_criterion("criterion 6", ok, f"accuracy@300m with k={res.k}: {detail}")
    assert ok


@pytest.fixture(scope="module")
def runtime_rows():
    return bench_runtime([2, 3, 4], list(range(2, 11)), trials=5, seed=0, min_total_s=0.02)


@pytest.mark.slow
def test_criterion_7a_runtime_scaling(runtime_rows):
    _, _, worst = fit_enumeration_model(runtime_rows)
    degree = fit_poly_degree(runtime_rows)
    ok = worst <= 2.0 and degree < 3.0
    record_criterion("criterion 7a", ok, f"exact enumeration within {worst:.2f}x of the "
                                         f"combination-count model; domset log-log degree {degree:.2f}")
    assert ok


@pytest.mark.slow
def test_criterion_7b_speed_gap(runtime_rows):
    ratio = speedup(runtime_rows, 4, 10)
    get = {(r.method, r.nc, r.k): r.median_ms for r in runtime_rows}
    ok = ratio >= 10.0
    record_criterion("criterion 7b", ok, f"NC=4, k=10: exact {get[('gmcp_exact', 4, 10)]:.4f} ms, "
                                         f"domset {get[('domset', 4, 10)]:.4f} ms, "
                                         f"domset {ratio:.2f}x faster (need 10x)")
    assert ok


@pytest.mark.slow
def test_criterion_8_unseen_city():
    cfg = SuiteConfig(eval_city=SynthConfig(seed=1, city="B"))
    res = run_suite(cfg, variants=("domset_4v", "random"))
    train_ids = {r.image_id for r in generate(cfg.city).records}
    eval_ids = {r.image_id for r in generate(cfg.eval_city).records}
    assert not train_ids & eval_ids
    d, r = res.accuracy("domset_4v", 300.0), res.accuracy("random", 300.0)
    ok = d > r
    record_criterion("criterion 8", ok, f"trained on A, evaluated on B with k={res.k}: "
                                        f"domset {d:.3f} vs random {r:.3f}")
    assert ok


MANIFEST = {"synth_seed": 5, "world_seed": 0, "train_seed": 1, "localize_seed": 2,
            "n_locations": 100, "epochs": 3, "k": 5}


def run_cli_pipeline(d, m):
    d.mkdir()
    (d / "manifest.json").write_text(json.dumps(m, sort_keys=True))
    steps = [
        ["synth", "--seed", str(m["synth_seed"]), "--world-seed", str(m["world_seed"]),
         "--n-locations", str(m["n_locations"]), "--out", str(d / "city.jsonl")],
        ["train", str(d / "city.jsonl"), "--seed", str(m["train_seed"]), "--epochs", str(m["epochs"]),
         "--out", str(d / "model.txt")],
        ["embed", str(d / "city.jsonl"), "--model", str(d / "model.txt"), "--out", str(d / "emb.jsonl")],
        ["localize", str(d / "emb.jsonl"), "--seed", str(m["localize_seed"]), "--k", str(m["k"]),
         "--method", "domset", "--method", "gmcp", "--method", "nn1", "--method", "random",
         "--method", "full_image", "--model", str(d / "model.txt"),
         "--k-curve", str(d / "k_curve.csv"), "--out", str(d / "results.csv")],
        ["localize", str(d / "emb.jsonl"), "--seed", str(m["localize_seed"]), "--k", str(m["k"]),
         "--views", "1", "--method", "domset", "--method", "nn1", "--out", str(d / "results_1v.csv")],
        ["eval", str(d / "results.csv"), str(d / "results_1v.csv"), "--out", str(d / "curves.csv")],
    ]
    for argv in steps:
        assert cli(argv) == 0, argv


@pytest.mark.slow
def test_criterion_9_determinism(tmp_path):
    run_cli_pipeline(tmp_path / "run1", MANIFEST)
    run_cli_pipeline(tmp_path / "run2", MANIFEST)
    names = ["results.csv", "results_1v.csv", "curves.csv", "k_curve.csv"]
    same = [(tmp_path / "run1" / n).read_bytes() == (tmp_path / "run2" / n).read_bytes() for n in names]
    # the intermediate files are reproducible too
    same_inputs = all((tmp_path / "run1" / n).read_bytes() == (tmp_path / "run2" / n).read_bytes()
                      for n in ("city.jsonl", "model.txt", "emb.jsonl"))
    ok = all(same) and same_inputs
    record_criterion("criterion 9", ok, f"{sum(same)}/{len(names)} CSV outputs byte-identical, "
                                        f"intermediates identical: {same_inputs}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
