"""Solver runtime benchmark: dominant set vs exact one-per-cluster enumeration."""

from __future__ import annotations

import csv
import math
import statistics
import time
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .affinity import MatchGraph, graph_from_arrays
from .domset import SolverConfig, solve
from .geo import GpsCoord, LocalXY, unproject
from .gmcp import ENUMERATION_BUDGET, solve_exact

_ORIGIN = GpsCoord(40.4406, -79.9959)


@dataclass
class BenchRow:
    method: str
    nc: int
    k: int
    n: int
    combinations: int
    trials: int
    median_ms: float
    mean_ms: float
    status: str = "ok"
    backend: str = ""


def random_graph(nc: int, k: int, rng: np.random.Generator, extent_m: float = 1500.0,
                 sigma: float = 0.3, alpha: float = 0.5) -> MatchGraph:
    """``nc`` clusters of ``k`` nodes at uniform positions with uniform scores."""
    n = nc * k
    xy = rng.uniform(0.0, extent_m, size=(n, 2))
    pts = [unproject(LocalXY(float(x), float(y), _ORIGIN)) for x, y in xy]
    s = rng.uniform(0.3, 1.0, size=n)
    return graph_from_arrays([p.lat for p in pts], [p.lon for p in pts], s,
                             np.repeat(np.arange(nc), k), sigma, alpha)


def _time_call(fn: Callable[[], object], min_total_s: float = 0.002) -> float:
    """Seconds per call, repeating until ``min_total_s`` has elapsed."""
    reps = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(reps):
            fn()
        dt = time.perf_counter() - t0
        if dt >= min_total_s:
            return dt / reps
        reps *= 2 if dt <= 0 else max(2, int(math.ceil(min_total_s / dt)))


def bench_runtime(nc_list: Sequence[int], k_list: Sequence[int], trials: int = 5, seed: int = 0,
                  backend: str | None = None, config: SolverConfig = SolverConfig(),
                  budget: int = ENUMERATION_BUDGET, min_total_s: float = 0.002) -> list[BenchRow]:
    """Median wall-clock time of each solver over ``trials`` random graphs per shape.

    Shapes whose enumeration exceeds ``budget`` get a ``skipped`` exact row.
    """
    from . import _backend

    name = backend or _backend.default
    rows = []
    for nc in nc_list:
        for k in k_list:
            rng = np.random.default_rng([seed, nc, k])
            graphs = [random_graph(nc, k, rng) for _ in range(trials)]
            combos = k ** nc
            ds = [_time_call(lambda g=g: solve(g.A, config, backend=backend), min_total_s) * 1e3
                  for g in graphs]
            rows.append(BenchRow("domset", nc, k, nc * k, combos, trials,
                                 statistics.median(ds), statistics.fmean(ds), backend=name))
            if combos > budget:
                rows.append(BenchRow("gmcp_exact", nc, k, nc * k, combos, 0,
                                     math.nan, math.nan, "skipped", name))
                continue
            gs = [_time_call(lambda g=g: solve_exact(g, budget, backend=backend), min_total_s) * 1e3
                  for g in graphs]
            rows.append(BenchRow("gmcp_exact", nc, k, nc * k, combos, trials,
                                 statistics.median(gs), statistics.fmean(gs), backend=name))
    return rows


BENCH_HEADER = ["method", "nc", "k", "n", "combinations", "trials", "median_ms", "mean_ms",
                "status", "backend"]


def write_bench_csv(rows: Sequence[BenchRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, BENCH_HEADER, lineterminator="\n")
        w.writeheader()
        for r in rows:
            d = asdict(r)
            d["median_ms"] = "" if math.isnan(r.median_ms) else f"{r.median_ms:.6f}"
            d["mean_ms"] = "" if math.isnan(r.mean_ms) else f"{r.mean_ms:.6f}"
            w.writerow(d)


def fit_enumeration_model(rows: Sequence[BenchRow]) -> tuple[float, float, float]:
    """Fit ``t = overhead + per_combination * combinations`` to the exact-solver rows.

    Least squares on relative error. Returns (overhead_ms, per_combination_ms,
    worst ratio max(t/model, model/t)).
    """
    ex = [r for r in rows if r.method == "gmcp_exact" and r.status == "ok"]
    c = np.array([r.combinations for r in ex], dtype=float)
    t = np.array([r.median_ms for r in ex])
    X = np.stack([np.ones_like(c), c], axis=1) / t[:, None]
    coef, *_ = np.linalg.lstsq(X, np.ones_like(t), rcond=None)
    overhead, per = (float(v) for v in coef)
    model = overhead + per * c
    if np.any(model <= 0):
        return overhead, per, math.inf
    ratio = np.maximum(t / model, model / t)
    return overhead, per, float(ratio.max())


def fit_poly_degree(rows: Sequence[BenchRow]) -> float:
    """Slope of log(runtime) against log(n) over the dominant-set rows."""
    ds = [r for r in rows if r.method == "domset"]
    n = np.log([r.n for r in ds])
    t = np.log([r.median_ms for r in ds])
    slope, _ = np.polyfit(n, t, 1)
    return float(slope)


def speedup(rows: Sequence[BenchRow], nc: int, k: int) -> float:
    """Exact-enumeration time over dominant-set time for one shape."""
    get = {(r.method, r.nc, r.k): r.median_ms for r in rows}
    return get[("gmcp_exact", nc, k)] / get[("domset", nc, k)]
