"""Building-record JSONL and result/curve CSV files.

Record lines look like::

    {"id": "A-s0003-1", "city": "A", "image_id": "A-street-0003-090", "view": "street",
     "heading_deg": 90, "lat": 40.44, "lon": -79.99, "raw_features": [...],
     "embedding": [...], "det_score": 0.93}

``embedding`` is optional. ``building_id`` (ground-truth match key) and
``split`` ("train"/"test") are optional annotations. Unknown keys are
ignored with a warning.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import IngestionError, InvalidCoordinateError, ParseError
from .geo import GpsCoord
from .pipeline import AccuracyCurve, LocalizationResult
from .retrieval import BuildingRecord

REQUIRED_FIELDS = ("id", "city", "image_id", "view", "heading_deg", "lat", "lon", "det_score")
OPTIONAL_FIELDS = ("raw_features", "embedding", "building_id", "split")
RESULTS_HEADER = ["query_id", "method", "pred_lat", "pred_lon", "true_lat", "true_lon",
                  "error_m", "runtime_ms"]
CURVES_HEADER = ["method", "threshold_m", "accuracy"]


@dataclass(frozen=True)
class ImageInfo:
    image_id: str
    view: str
    heading: int
    gps: GpsCoord
    record_ids: tuple[str, ...]


def record_to_json(r: BuildingRecord) -> dict:
    d = {
        "id": r.id,
        "city": r.city,
        "image_id": r.image_id,
        "view": r.view,
        "heading_deg": r.heading,
        "lat": r.gps.lat,
        "lon": r.gps.lon,
    }
    if r.raw_features is not None:
        d["raw_features"] = [float(v) for v in r.raw_features]
    if r.embedding is not None:
        d["embedding"] = [float(v) for v in r.embedding]
    d["det_score"] = float(r.det_score)
    if r.building_id is not None:
        d["building_id"] = r.building_id
    if r.split is not None:
        d["split"] = r.split
    return d


def record_from_json(d: dict, line: int | None = None) -> BuildingRecord:
    if not isinstance(d, dict):
        raise ParseError("record is not a JSON object", line=line)
    for key in REQUIRED_FIELDS:
        if key not in d:
            raise ParseError(f"missing required field '{key}'", line=line, field=key)
    if "raw_features" not in d and "embedding" not in d:
        raise ParseError("record needs 'raw_features' or 'embedding'", line=line, field="raw_features")
    try:
        gps = GpsCoord(float(d["lat"]), float(d["lon"]))
        return BuildingRecord(
            id=str(d["id"]),
            view=d["view"],
            image_id=str(d["image_id"]),
            heading=int(d["heading_deg"]),
            gps=gps,
            embedding=None if d.get("embedding") is None else np.array(d["embedding"], dtype=float),
            det_score=float(d["det_score"]),
            raw_features=None if d.get("raw_features") is None else np.array(d["raw_features"], dtype=float),
            city=str(d["city"]),
            building_id=d.get("building_id"),
            split=d.get("split"),
        )
    except (IngestionError, InvalidCoordinateError, TypeError, ValueError) as exc:
        raise ParseError(str(exc), line=line) from None


def ingest(path) -> tuple[list[BuildingRecord], dict[str, ImageInfo]]:
    """Read a JSONL record file; returns the records and a per-image table."""
    records = []
    seen: set[str] = set()
    unknown_warned: set[str] = set()
    known = set(REQUIRED_FIELDS) | set(OPTIONAL_FIELDS)
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=lineno) from None
            extra = set(d) - known if isinstance(d, dict) else set()
            for key in sorted(extra - unknown_warned):
                warnings.warn(f"line {lineno}: ignoring unknown field '{key}'", stacklevel=2)
                unknown_warned.add(key)
            r = record_from_json(d, lineno)
            if r.id in seen:
                raise ParseError(f"duplicate record id '{r.id}'", line=lineno, field="id")
            seen.add(r.id)
            records.append(r)
    return records, image_table(records)


def image_table(records: Iterable[BuildingRecord]) -> dict[str, ImageInfo]:
    groups: dict[str, list[BuildingRecord]] = {}
    for r in records:
        groups.setdefault(r.image_id, []).append(r)
    out = {}
    for image_id in sorted(groups):
        rs = groups[image_id]
        out[image_id] = ImageInfo(image_id, rs[0].view, rs[0].heading, rs[0].gps,
                                  tuple(r.id for r in rs))
    return out


def emit(records: Iterable[BuildingRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(record_to_json(r), separators=(",", ":")) + "\n")


def write_results(results: Sequence[LocalizationResult], path, timing: bool = False) -> None:
    """Results CSV. ``runtime_ms`` is written as 0 unless ``timing`` is set,
    which keeps seeded runs byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            w.writerow([
                r.query_id, r.method, repr(r.predicted.lat), repr(r.predicted.lon),
                "" if r.truth is None else repr(r.truth.lat),
                "" if r.truth is None else repr(r.truth.lon),
                "" if math.isnan(r.error_m) else f"{r.error_m:.6f}",
                f"{r.runtime_ms:.3f}" if timing else "0",
            ])


def read_results(path) -> list[LocalizationResult]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in RESULTS_HEADER if c not in (reader.fieldnames or [])]
        if missing:
            raise ParseError(f"results file lacks column '{missing[0]}'", line=1, field=missing[0])
        for lineno, row in enumerate(reader, start=2):
            try:
                truth = None if row["true_lat"] == "" else GpsCoord(float(row["true_lat"]), float(row["true_lon"]))
                out.append(LocalizationResult(
                    row["query_id"], row["method"],
                    GpsCoord(float(row["pred_lat"]), float(row["pred_lon"])), truth,
                    math.nan if row["error_m"] == "" else float(row["error_m"]),
                    runtime_ms=float(row["runtime_ms"] or 0.0),
                ))
            except (ValueError, InvalidCoordinateError) as exc:
                raise ParseError(str(exc), line=lineno) from None
    return out


def write_curves(curve: AccuracyCurve, path, n_queries: dict[str, int] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVES_HEADER)
        for method in sorted(curve.accuracy):
            for t, a in zip(curve.thresholds_m, curve.accuracy[method]):
                w.writerow([method, f"{t:g}", f"{a:.6f}"])


def write_k_curve(points: Sequence[tuple[int, float]], path, threshold: float = 300.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", f"accuracy_at_{threshold:g}m"])
        for k, a in points:
            w.writerow([k, f"{a:.6f}"])


def ensure_parent(path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p
