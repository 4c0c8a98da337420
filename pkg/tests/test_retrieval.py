import numpy as np
import pytest

from xviewgeo.errors import ContractError, IngestionError, RetrievalError
from xviewgeo.retrieval import DEFAULT_K, build_index, knn, top1

from conftest import make_record, unit


def random_refs(rng, n, dim=6, view="bird"):
    return [make_record(f"r{i:03d}", view, rng.normal(size=dim), x=10.0 * i) for i in range(n)]


def brute_knn(refs, q, k):
    scored = []
    for r in refs:
        d = min(float(np.sqrt(np.sum((r.embedding - q.embedding) ** 2))), 2.0)
        scored.append((-(1.0 - d / 2.0), r.id))
    scored.sort()
    return [(rid, -s) for s, rid in scored[:k]]


def test_index_sizes(rng):
    assert len(build_index(random_refs(rng, 1))) == 1
    assert len(build_index(random_refs(rng, 17))) == 17


def test_index_rejects_bad_input(rng):
    with pytest.raises(IngestionError):
        build_index([])
    refs = random_refs(rng, 3)
    with pytest.raises(IngestionError):
        build_index(refs + [refs[0]])
    bare = make_record("x", "bird", [1.0, 0.0])
    bare.embedding = None
    with pytest.raises(IngestionError):
        build_index([bare])


def test_index_is_read_only(rng):
    idx = build_index(random_refs(rng, 4))
    with pytest.raises(ValueError):
        idx.embeddings[0, 0] = 1.0


def test_self_match_first(rng):
    refs = random_refs(rng, 20)
    idx = build_index(refs)
    q = make_record("q", "street", refs[7].embedding)
    rid, s = top1(idx, q)
    assert rid == refs[7].id and s == 1.0


@pytest.mark.parametrize("k", [1, 3, 10, 25, 200])
def test_knn_matches_brute_force(rng, k):
    refs = random_refs(rng, 60)
    idx = build_index(refs)
    for _ in range(20):
        q = make_record("q", "street", rng.normal(size=6))
        got = knn(idx, q, k).members
        want = brute_knn(refs, q, k)
        assert [g[0] for g in got] == [w[0] for w in want]
        assert np.allclose([g[1] for g in got], [w[1] for w in want], atol=1e-12)


def test_knn_ties_break_by_id():
    e = unit([1.0, 1.0, 0.0])
    refs = [make_record(rid, "bird", e) for rid in ("c", "a", "b")]
    q = make_record("q", "street", [1.0, 0.0, 0.0])
    assert knn(build_index(refs), q, 3).ref_ids == ["a", "b", "c"]


def test_knn_cross_view_filter(rng):
    refs = random_refs(rng, 5, view="bird") + [make_record("s0", "street", rng.normal(size=6))]
    idx = build_index(refs)
    q = make_record("q", "street", refs[-1].embedding)
    assert "s0" not in knn(idx, q, 10).ref_ids
    assert knn(idx, q, 1, cross_view=False).ref_ids == ["s0"]
    bird_only = build_index(random_refs(rng, 3))
    with pytest.raises(RetrievalError):
        knn(bird_only, make_record("b", "bird", [1.0] * 6), 2)


def test_default_k_per_view(rng):
    assert DEFAULT_K == {"street": 100, "bird": 10}
    idx = build_index(random_refs(rng, 150, view="bird")
                      + [make_record(f"s{i}", "street", rng.normal(size=6)) for i in range(150)])
    street_q = make_record("q1", "street", rng.normal(size=6))
    bird_q = make_record("q2", "bird", rng.normal(size=6))
    assert len(knn(idx, street_q).members) == 100
    assert len(knn(idx, bird_q).members) == 10


def test_knn_k_validation(rng):
    idx = build_index(random_refs(rng, 3))
    with pytest.raises(ContractError):
        knn(idx, make_record("q", "street", [1.0] * 6), 0)
