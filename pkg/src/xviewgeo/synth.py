"""Synthetic city generator.

Each location on a jittered grid holds a few latent buildings. A building
is seen in one street-view image and one bird's-eye image (random headings)
at its location, unless the detector drops it. Raw features are::

    raw = U z + o_view + noise * (eps + nuisance_gain * V u)

with ``z`` the building's latent code, ``U`` and ``V`` fixed orthonormal
bases (signal and appearance-nuisance subspaces), ``o_view`` a fixed
per-view offset orthogonal to ``U``, and ``eps``, ``u`` standard normal
draws per observation. ``U``, ``V`` and the offsets depend only on
``world_seed`` so cities generated with different ``seed`` share them; an
embedder trained on one city transfers to another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientDataError
from .geo import GpsCoord, LocalXY, unproject
from .metric import PairSample
from .retrieval import HEADINGS, VIEWS, BuildingRecord


@dataclass(frozen=True)
class SynthConfig:
    n_locations: int = 400
    grid_spacing_m: float = 80.0
    buildings_per_view: tuple[int, int] = (2, 6)
    feature_noise_sigma: float = 0.15
    detection_dropout_prob: float = 0.1
    negatives_per_positive: int = 20
    headings: tuple[int, ...] = HEADINGS
    seed: int = 0
    world_seed: int = 0
    raw_dim: int = 64
    latent_dim: int = 8
    latent_scale: float = 0.4
    nuisance_dim: int = 24
    nuisance_gain: float = 4.0
    view_offset_scale: float = 1.0
    position_jitter: float = 0.1  # fraction of grid spacing
    origin: tuple[float, float] = (40.4406, -79.9959)
    city: str = "A"
    train_fraction: float = 0.2

    def __post_init__(self):
        if self.n_locations <= 0:
            raise ConfigError("n_locations must be positive")
        if self.grid_spacing_m <= 0:
            raise ConfigError("grid_spacing_m must be positive")
        lo, hi = self.buildings_per_view
        if lo < 0 or hi < lo:
            raise ConfigError("buildings_per_view must be a range 0 <= lo <= hi")
        if min(self.feature_noise_sigma, self.nuisance_gain, self.view_offset_scale,
               self.position_jitter, self.negatives_per_positive) < 0:
            raise ConfigError("noise, gain, offset, jitter and ratio must be nonnegative")
        if not 0.0 <= self.detection_dropout_prob <= 1.0:
            raise ConfigError("detection_dropout_prob must lie in [0, 1]")
        if not 0.0 <= self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in [0, 1)")
        if self.latent_dim + self.nuisance_dim + 2 > self.raw_dim:
            raise ConfigError("raw_dim too small for latent and nuisance subspaces")
        if not set(self.headings) <= set(HEADINGS) or not self.headings:
            raise ConfigError(f"headings must be drawn from {HEADINGS}")


@dataclass
class World:
    signal_basis: np.ndarray  # raw_dim x latent_dim
    nuisance_basis: np.ndarray  # raw_dim x nuisance_dim
    offsets: dict[str, np.ndarray]


def make_world(cfg: SynthConfig) -> World:
    rng = np.random.default_rng([cfg.world_seed, 0x5EED])
    q, _ = np.linalg.qr(rng.normal(size=(cfg.raw_dim, cfg.raw_dim)))
    U = q[:, :cfg.latent_dim]
    V = q[:, cfg.latent_dim:cfg.latent_dim + cfg.nuisance_dim]
    offsets = {}
    for view in VIEWS:
        o = rng.normal(size=cfg.raw_dim)
        o -= U @ (U.T @ o)
        offsets[view] = cfg.view_offset_scale * o / np.linalg.norm(o)
    return World(U, V, offsets)


@dataclass
class SynthCity:
    config: SynthConfig
    locations: list[GpsCoord]
    latent: np.ndarray
    building_location: np.ndarray
    street_records: list[BuildingRecord]
    bird_records: list[BuildingRecord]
    split: dict[int, str] = field(default_factory=dict)

    @property
    def records(self) -> list[BuildingRecord]:
        return self.street_records + self.bird_records

    def location_id(self, loc: int) -> str:
        return f"{self.config.city}-L{loc:04d}"

    @property
    def ground_truth(self) -> dict[str, GpsCoord]:
        return {self.location_id(i): p for i, p in enumerate(self.locations)}

    def records_for(self, view: str) -> list[BuildingRecord]:
        return self.street_records if view == "street" else self.bird_records


def _grid(cfg: SynthConfig, rng: np.random.Generator) -> list[GpsCoord]:
    cols = math.ceil(math.sqrt(cfg.n_locations))
    anchor = GpsCoord(*cfg.origin)
    out = []
    for i in range(cfg.n_locations):
        r, c = divmod(i, cols)
        jx, jy = rng.uniform(-1.0, 1.0, size=2) * cfg.position_jitter * cfg.grid_spacing_m
        out.append(unproject(LocalXY(c * cfg.grid_spacing_m + jx, r * cfg.grid_spacing_m + jy, anchor)))
    return out


def _train_locations(locations: list[GpsCoord], fraction: float) -> set[int]:
    # spatial block split: the westernmost fraction of locations trains
    n_train = int(round(fraction * len(locations)))
    order = sorted(range(len(locations)), key=lambda i: (locations[i].lon, locations[i].lat, i))
    return set(order[:n_train])


def generate(cfg: SynthConfig = SynthConfig()) -> SynthCity:
    """Deterministic synthetic city for ``cfg.seed``."""
    world = make_world(cfg)
    rng = np.random.default_rng([cfg.seed, 0xC17])
    locations = _grid(cfg, rng)
    train = _train_locations(locations, cfg.train_fraction)
    split = {i: ("train" if i in train else "test") for i in range(len(locations))}

    lo, hi = cfg.buildings_per_view
    latent, owner = [], []
    street, bird = [], []
    headings = list(cfg.headings)
    for loc, gps in enumerate(locations):
        for b in range(int(rng.integers(lo, hi + 1))):
            z = cfg.latent_scale * rng.normal(size=cfg.latent_dim)
            bid = f"{cfg.city}-B{loc:04d}-{b}"
            latent.append(z)
            owner.append(loc)
            for view, out in (("street", street), ("bird", bird)):
                heading = headings[int(rng.integers(len(headings)))]
                eps = rng.normal(size=cfg.raw_dim)
                u = rng.normal(size=cfg.nuisance_dim)
                det = float(rng.uniform(0.5, 1.0))
                if rng.random() < cfg.detection_dropout_prob:
                    continue
                raw = (world.signal_basis @ z + world.offsets[view]
                       + cfg.feature_noise_sigma * (eps + cfg.nuisance_gain * (world.nuisance_basis @ u)))
                out.append(BuildingRecord(
                    id=f"{cfg.city}-{view[0]}{loc:04d}-{b}",
                    view=view,
                    image_id=f"{cfg.city}-{view}-{loc:04d}-{heading:03d}",
                    heading=heading,
                    gps=gps,
                    det_score=det,
                    raw_features=raw,
                    city=cfg.city,
                    building_id=bid,
                    split=split[loc],
                ))
    return SynthCity(cfg, locations, np.array(latent).reshape(-1, cfg.latent_dim),
                     np.array(owner, dtype=np.intp), street, bird, split)


def make_pairs(street: Sequence[BuildingRecord], bird: Sequence[BuildingRecord],
               negatives_per_positive: int, seed: int = 0) -> list[PairSample]:
    """Matched pairs (shared ``building_id``) plus uniformly sampled unmatched ones.

    Positives come first, in street-record order, then negatives in sampling
    order.
    """
    if len(street) + len(bird) < 2:
        raise InsufficientDataError("need at least two buildings to form pairs")
    bird_by_building = {r.building_id: i for i, r in enumerate(bird) if r.building_id is not None}
    positives = []
    matched = set()
    for si, r in enumerate(street):
        bi = bird_by_building.get(r.building_id) if r.building_id is not None else None
        if bi is not None:
            positives.append(PairSample(r.raw_features, bird[bi].raw_features, 1))
            matched.add((si, bi))
    n_neg = negatives_per_positive * len(positives)
    available = len(street) * len(bird) - len(matched)
    if n_neg > available:
        raise InsufficientDataError(f"only {available} unmatched pairs for {n_neg} negatives")
    rng = np.random.default_rng([seed, 0xBA1])
    chosen: set[tuple[int, int]] = set()
    negatives = []
    while len(negatives) < n_neg:
        si = int(rng.integers(len(street)))
        bi = int(rng.integers(len(bird)))
        if (si, bi) in matched or (si, bi) in chosen:
            continue
        chosen.add((si, bi))
        negatives.append(PairSample(street[si].raw_features, bird[bi].raw_features, 0))
    return positives + negatives


def make_pair_dataset(city: SynthCity, negatives_per_positive: int | None = None,
                      seed: int = 0, split: str | None = None) -> list[PairSample]:
    """Training pairs from a city, optionally restricted to one split."""
    ratio = city.config.negatives_per_positive if negatives_per_positive is None else negatives_per_positive
    street = [r for r in city.street_records if split is None or r.split == split]
    bird = [r for r in city.bird_records if split is None or r.split == split]
    return make_pairs(street, bird, ratio, seed)


@dataclass(frozen=True)
class Query:
    query_id: str
    buildings: tuple[BuildingRecord, ...]
    truth: GpsCoord
    location: int
    image_ids: tuple[str, ...]


def make_query_set(city: SynthCity, view: str = "street", n_views: int = 4, seed: int = 0,
                   split: str | None = "test") -> list[Query]:
    """One query per location: all buildings of the view (4 views) or one heading image (1 view).

    Single-image queries pick, per location, a random heading among the
    images that contain at least one detected building. Locations without
    any detected building in ``view`` yield no query.
    """
    if n_views not in (1, 4):
        raise ConfigError("n_views must be 1 or 4")
    if view not in VIEWS:
        raise ConfigError(f"unknown view {view!r}")
    records = city.records_for(view)
    if not records:
        raise ConfigError(f"city has no {view} records")
    by_loc: dict[int, list[BuildingRecord]] = {}
    loc_of = {g: i for i, g in enumerate(city.locations)}
    for r in records:
        by_loc.setdefault(loc_of[r.gps], []).append(r)
    rng = np.random.default_rng([seed, 0x9E7])
    queries = []
    for loc in range(len(city.locations)):
        if split is not None and city.split.get(loc) != split:
            continue
        recs = by_loc.get(loc, [])
        if not recs:
            continue
        if n_views == 1:
            images = sorted({r.image_id for r in recs})
            pick = images[int(rng.integers(len(images)))]
            recs = [r for r in recs if r.image_id == pick]
            qid = pick
        else:
            qid = city.location_id(loc)
        queries.append(Query(qid, tuple(recs), city.locations[loc], loc,
                             tuple(sorted({r.image_id for r in recs}))))
    return queries
