import numpy as np
import pytest

from xviewgeo.errors import ConfigError, InsufficientDataError
from xviewgeo.geo import geo_distance_m
from xviewgeo.synth import SynthConfig, generate, make_pair_dataset, make_pairs, make_query_set

SMALL = SynthConfig(n_locations=49, seed=4)


@pytest.fixture(scope="module")
def city():
    return generate(SMALL)


def test_seeded_generation_is_identical(city):
    again = generate(SMALL)
    assert [r.id for r in city.records] == [r.id for r in again.records]
    assert all(np.array_equal(a.raw_features, b.raw_features)
               for a, b in zip(city.records, again.records))
    other = generate(SynthConfig(n_locations=49, seed=5))
    assert not np.array_equal(other.records[0].raw_features, city.records[0].raw_features)


def test_no_dropout_observes_every_building():
    c = generate(SynthConfig(n_locations=16, detection_dropout_prob=0.0))
    n = len(c.latent)
    assert len(c.street_records) == n and len(c.bird_records) == n
    assert {r.building_id for r in c.street_records} == {r.building_id for r in c.bird_records}


def test_noise_free_matches_sit_at_offset_distance():
    c = generate(SynthConfig(n_locations=36, feature_noise_sigma=0.0, detection_dropout_prob=0.0))
    bird = {r.building_id: r.raw_features for r in c.bird_records}
    street = {r.building_id: r.raw_features for r in c.street_records}
    ids = sorted(bird)
    matched = np.array([np.linalg.norm(street[i] - bird[i]) for i in ids])
    assert np.allclose(matched, matched[0], atol=1e-12)
    S = np.array([street[i] for i in ids])
    B = np.array([bird[i] for i in ids])
    D = np.linalg.norm(S[:, None, :] - B[None, :, :], axis=2)
    unmatched = D[~np.eye(len(ids), dtype=bool)]
    assert matched.max() < np.percentile(unmatched, 1)


def test_pair_ratio_and_disjointness(city):
    pairs = make_pair_dataset(city, negatives_per_positive=20, seed=3)
    pos = [p for p in pairs if p.label == 1]
    neg = [p for p in pairs if p.label == 0]
    assert len(neg) == 20 * len(pos)
    keys = lambda ps: {(p.x_raw.tobytes(), p.y_raw.tobytes()) for p in ps}
    assert not keys(pos) & keys(neg)
    again = make_pair_dataset(city, negatives_per_positive=20, seed=3)
    assert all(np.array_equal(a.x_raw, b.x_raw) and a.label == b.label for a, b in zip(pairs, again))


def test_pairs_respect_split(city):
    train_raw = {r.raw_features.tobytes() for r in city.records if r.split == "train"}
    for p in make_pair_dataset(city, seed=0, split="train"):
        assert p.x_raw.tobytes() in train_raw and p.y_raw.tobytes() in train_raw


def test_pairs_errors(city):
    with pytest.raises(InsufficientDataError):
        make_pairs(city.street_records[:1], [], 1)
    with pytest.raises(InsufficientDataError):
        make_pairs(city.street_records[:2], city.bird_records[:2], 100)


def test_query_sets(city):
    q4 = {q.location: q for q in make_query_set(city, "street", 4, seed=1)}
    q1 = {q.location: q for q in make_query_set(city, "street", 1, seed=1)}
    assert q1.keys() <= q4.keys()
    for loc, q in q1.items():
        assert len(q4[loc].buildings) >= len(q.buildings)
        assert len(q.image_ids) == 1 and q.query_id == q.image_ids[0]
    for q in q4.values():
        assert q.truth == city.locations[q.location]
        assert all(b.gps == q.truth for b in q.buildings)
        assert city.split[q.location] == "test"


def test_split_is_disjoint_and_spatial(city):
    train = {i for i, s in city.split.items() if s == "train"}
    test = {i for i, s in city.split.items() if s == "test"}
    assert train and test and not train & test
    assert train | test == set(range(len(city.locations)))
    assert max(city.locations[i].lon for i in train) <= min(city.locations[i].lon for i in test)


def test_grid_spacing(city):
    a, b = city.locations[0], city.locations[1]
    assert geo_distance_m(a, b) == pytest.approx(SMALL.grid_spacing_m, rel=0.3)


@pytest.mark.parametrize("kwargs", [dict(n_locations=0), dict(buildings_per_view=(3, 1)),
                                    dict(detection_dropout_prob=1.5), dict(raw_dim=10),
                                    dict(headings=(45,))])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        SynthConfig(**kwargs)


def test_query_validation(city):
    with pytest.raises(ConfigError):
        make_query_set(city, "street", 2)
    with pytest.raises(ConfigError):
        make_query_set(city, "aerial", 4)
