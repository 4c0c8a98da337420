"""Building records, the reference index and k-NN candidate clusters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, IngestionError, RetrievalError
from .geo import GpsCoord

VIEWS = ("street", "bird")
HEADINGS = (0, 90, 180, 270)
DEFAULT_K = {"street": 100, "bird": 10}


def other_view(view: str) -> str:
    return "bird" if view == "street" else "street"


@dataclass
class BuildingRecord:
    """One detected building.

    ``building_id`` and ``split`` are optional ground-truth annotations
    (used to form training pairs); the localizers never read them.
    """

    id: str
    view: str
    image_id: str
    heading: int
    gps: GpsCoord
    embedding: np.ndarray | None = None
    det_score: float = 1.0
    raw_features: np.ndarray | None = None
    city: str = ""
    building_id: str | None = None
    split: str | None = None

    def __post_init__(self):
        if self.view not in VIEWS:
            raise IngestionError(f"record {self.id}: unknown view {self.view!r}")
        if int(self.heading) not in HEADINGS:
            raise IngestionError(f"record {self.id}: heading {self.heading} not in {HEADINGS}")
        self.heading = int(self.heading)
        if not 0.0 <= float(self.det_score) <= 1.0:
            raise IngestionError(f"record {self.id}: det_score {self.det_score} outside [0, 1]")
        if self.embedding is not None:
            self.embedding = np.asarray(self.embedding, dtype=float)
            if abs(np.linalg.norm(self.embedding) - 1.0) > 1e-6:
                raise IngestionError(f"record {self.id}: embedding is not L2-normalized")
        if self.raw_features is not None:
            self.raw_features = np.asarray(self.raw_features, dtype=float)


@dataclass(frozen=True)
class CandidateCluster:
    """A query building and its retrieved references, best first."""

    query_id: str
    members: tuple[tuple[str, float], ...]

    @property
    def ref_ids(self) -> list[str]:
        return [m[0] for m in self.members]

    @property
    def scores(self) -> list[float]:
        return [m[1] for m in self.members]


@dataclass
class ReferenceIndex:
    """Exact linear-scan index over reference embeddings. Immutable once built."""

    records: tuple[BuildingRecord, ...]
    embeddings: np.ndarray
    ids: np.ndarray
    views: np.ndarray
    by_id: dict[str, BuildingRecord] = field(repr=False)

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, ref_id: str) -> BuildingRecord:
        return self.by_id[ref_id]


def build_index(refs: Iterable[BuildingRecord]) -> ReferenceIndex:
    refs = tuple(refs)
    if not refs:
        raise IngestionError("cannot build an index from zero records")
    by_id: dict[str, BuildingRecord] = {}
    for r in refs:
        if r.id in by_id:
            raise IngestionError(f"duplicate record id {r.id!r}")
        if r.embedding is None:
            raise IngestionError(f"record {r.id} has no embedding")
        by_id[r.id] = r
    emb = np.array([r.embedding for r in refs], dtype=float)
    emb.setflags(write=False)
    return ReferenceIndex(
        records=refs,
        embeddings=emb,
        ids=np.array([r.id for r in refs], dtype=object),
        views=np.array([r.view for r in refs], dtype=object),
        by_id=by_id,
    )


def _similarities(index: ReferenceIndex, q: np.ndarray) -> np.ndarray:
    # explicit difference rather than 2 - 2a.b: a self-match stays at exactly D = 0
    d = np.linalg.norm(index.embeddings - q[None, :], axis=1)
    return 1.0 - np.minimum(d, 2.0) / 2.0


def knn(index: ReferenceIndex, query: BuildingRecord, k: int | None = None,
        cross_view: bool = True) -> CandidateCluster:
    """The ``k`` most similar references, by descending score then ascending id.

    With ``cross_view`` (the default) only references from the opposite view
    are eligible. ``k`` defaults to 100 for street queries, 10 for bird.
    """
    if k is None:
        k = DEFAULT_K[query.view]
    if k < 1:
        raise ContractError("k must be at least 1")
    if query.embedding is None:
        raise RetrievalError(f"query {query.id} has no embedding")
    if cross_view:
        mask = index.views == other_view(query.view)
        cand = np.flatnonzero(mask)
    else:
        cand = np.arange(len(index))
    if len(cand) == 0:
        raise RetrievalError("no eligible references in the index")
    s = _similarities(index, query.embedding)[cand]
    ids = index.ids[cand]
    order = np.lexsort((ids, -s))[:k]
    return CandidateCluster(query.id, tuple((str(ids[i]), float(s[i])) for i in order))


def top1(index: ReferenceIndex, query: BuildingRecord) -> tuple[str, float]:
    return knn(index, query, 1).members[0]


def clusters_for(index: ReferenceIndex, queries: Sequence[BuildingRecord],
                 k: int | None = None) -> list[CandidateCluster]:
    return [knn(index, q, k) for q in queries]
