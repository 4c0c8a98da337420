"""Dominant-set extraction by discrete replicator dynamics.

The solver runs x_i <- x_i (Ax)_i / x'Ax from the barycenter of the
simplex until the L1 change drops below a tolerance. The support of the
converged vector is the extracted set.

:class:`WeightOracle` evaluates the recursive node weights ``w_S(i)`` and
total weights ``W(S)`` directly from their definition. It is exponential
in ``|S|`` and only meant for verification on small graphs.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _backend
from .affinity import MatchGraph
from .errors import EmptySelectionError, NoEdgesError, OracleScaleError, ZeroPayoffError

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-12
MONOTONE_TOL = 1e-12
ORACLE_MAX_SET = 15
ORACLE_MAX_NODES = 20


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10_000
    convergence_tol: float = 1e-8
    support_epsilon: float = 1e-4
    # re-check simplex and payoff monotonicity along the whole trajectory
    check_invariants: bool = False

    def __post_init__(self):
        if self.max_iterations <= 0 or self.convergence_tol <= 0 or self.support_epsilon <= 0:
            raise ValueError("solver parameters must be positive")


@dataclass
class DominantSetResult:
    support: tuple[int, ...]
    x: np.ndarray
    payoff: float
    iterations: int
    converged: bool
    degenerate: bool = False
    payoff_trace: np.ndarray | None = field(default=None, repr=False)
    support_trace: np.ndarray | None = field(default=None, repr=False)
    max_simplex_dev: float = 0.0

    def write_trace(self, path) -> None:
        """CSV of (iteration, payoff, support_size) along the trajectory."""
        if self.payoff_trace is None:
            raise ValueError("result was computed without trace=True")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["iteration", "payoff", "support_size"])
            for it, (p, s) in enumerate(zip(self.payoff_trace, self.support_trace)):
                w.writerow([it, repr(float(p)), int(s)])


def payoff(A: np.ndarray, x: np.ndarray) -> float:
    return float(x @ (A @ x))


def replicator_step(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    """One discrete replicator update."""
    ax = A @ x
    p = float(x @ ax)
    if p <= 0.0:
        raise ZeroPayoffError("x'Ax = 0: the current mass sits on nodes without edges")
    return x * ax / p


def solve(A, config: SolverConfig = SolverConfig(), *, trace: bool = False,
          backend: str | None = None) -> DominantSetResult:
    """Extract one dominant set from the symmetric nonnegative matrix ``A``."""
    A = np.ascontiguousarray(A, dtype=float)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n or n == 0:
        raise ValueError("A must be a non-empty square matrix")
    if n == 1:
        x = np.ones(1)
        pt = np.array([float(A[0, 0])]) if trace else None
        st = np.array([1], dtype=np.intp) if trace else None
        return DominantSetResult((0,), x, float(A[0, 0]), 0, True,
                                 payoff_trace=pt, support_trace=st)
    if not np.any(A > 0.0):
        raise NoEdgesError("affinity matrix has no positive entries")

    kernels = _backend.get(backend)
    want_trace = trace or config.check_invariants
    x0 = np.full(n, 1.0 / n)
    x, steps, converged, pt, st, max_dev, zero = kernels.replicator_run(
        A, x0, config.max_iterations, config.convergence_tol, want_trace,
        config.support_epsilon)
    if zero:
        raise ZeroPayoffError("replicator dynamics reached zero payoff")
    if not converged:
        logger.info("replicator dynamics stopped at %d iterations without converging",
                       config.max_iterations)
    result = DominantSetResult(
        support=tuple(int(i) for i in np.flatnonzero(x > config.support_epsilon)),
        x=x,
        payoff=payoff(A, x),
        iterations=int(steps),
        converged=bool(converged),
        payoff_trace=pt if want_trace else None,
        support_trace=st if want_trace else None,
        max_simplex_dev=float(max_dev),
    )
    if config.check_invariants:
        check_trajectory(result)
    return result


def check_trajectory(result: DominantSetResult) -> None:
    """Raise ``AssertionError`` if a traced trajectory left the simplex or lost payoff."""
    if result.max_simplex_dev > SIMPLEX_TOL:
        raise AssertionError(f"simplex sum drifted by {result.max_simplex_dev:.3g}")
    if np.any(result.x < 0.0):
        raise AssertionError("negative coordinate in replicator state")
    if result.payoff_trace is not None and len(result.payoff_trace) > 1:
        drop = float(np.max(result.payoff_trace[:-1] - result.payoff_trace[1:]))
        if drop > MONOTONE_TOL:
            raise AssertionError(f"payoff decreased by {drop:.3g} along the trajectory")


def solve_graph(g: MatchGraph, config: SolverConfig = SolverConfig(), *,
                trace: bool = False, backend: str | None = None) -> DominantSetResult:
    """:func:`solve` on a match graph, with the edgeless case handled.

    When every candidate shares one cluster the graph has no edges; the
    node with the highest matching score (then lowest ref id) is returned
    as a flagged degenerate selection.
    """
    try:
        return solve(g.A, config, trace=trace, backend=backend)
    except (NoEdgesError, ZeroPayoffError):
        best = min(range(g.n), key=lambda i: (-g.nodes[i].s, g.nodes[i].ref_id))
        x = np.zeros(g.n)
        x[best] = 1.0
        pt = np.zeros(1) if trace else None
        st = np.ones(1, dtype=np.intp) if trace else None
        return DominantSetResult((best,), x, 0.0, 0, True, degenerate=True,
                                 payoff_trace=pt, support_trace=st)


def select_nodes_per_cluster(result: DominantSetResult, g: MatchGraph) -> dict[int, int]:
    """At most one support node per cluster: largest weight, then score, then id."""
    if not result.support:
        raise EmptySelectionError("dominant set is empty")
    best: dict[int, int] = {}
    for i in result.support:
        c = g.nodes[i].cluster
        if c not in best:
            best[c] = i
            continue
        j = best[c]
        key_i = (-result.x[i], -g.nodes[i].s, g.nodes[i].ref_id)
        key_j = (-result.x[j], -g.nodes[j].s, g.nodes[j].ref_id)
        if key_i < key_j:
            best[c] = i
    return dict(sorted(best.items()))


def select_per_cluster(result: DominantSetResult, g: MatchGraph) -> dict[int, str]:
    return {c: g.nodes[i].ref_id for c, i in select_nodes_per_cluster(result, g).items()}


def peel_dominant_sets(A, config: SolverConfig = SolverConfig(), max_sets: int | None = None,
                       backend: str | None = None) -> list[tuple[int, ...]]:
    """Extract dominant sets one after another, removing each support in turn."""
    A = np.asarray(A, dtype=float)
    remaining = np.arange(A.shape[0])
    found = []
    while len(remaining) and (max_sets is None or len(found) < max_sets):
        sub = A[np.ix_(remaining, remaining)]
        if len(remaining) > 1 and not np.any(sub > 0):
            found.extend((int(i),) for i in remaining)
            break
        res = solve(sub, config, backend=backend)
        found.append(tuple(int(remaining[i]) for i in res.support))
        remaining = np.delete(remaining, list(res.support))
    return found


# -- verification oracle ----------------------------------------------------

def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _mask(S: Iterable[int]) -> int:
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


class WeightOracle:
    """Memoized evaluation of ``w_S(i)`` and ``W(S)`` straight from the recursion.

    ``phi_S(i, j) = a_ij - mean_{k in S} a_ik``;
    ``w_S(i) = 1`` if ``|S| = 1`` else ``sum_{j in S-i} phi_{S-i}(j, i) w_{S-i}(j)``.
    """

    def __init__(self, A):
        self.A = np.asarray(A, dtype=float)
        self._a = self.A.tolist()
        self._w: dict[tuple[int, int], float] = {}
        self._mean: dict[tuple[int, int], float] = {}

    def _row_mean(self, mask: int, j: int) -> float:
        key = (mask, j)
        v = self._mean.get(key)
        if v is None:
            members = _bits(mask)
            row = self._a[j]
            v = sum(row[k] for k in members) / len(members)
            self._mean[key] = v
        return v

    def phi(self, S, i: int, j: int) -> float:
        return self._a[i][j] - self._row_mean(_mask(S), i)

    def _ws(self, mask: int, i: int) -> float:
        key = (mask, i)
        v = self._w.get(key)
        if v is not None:
            return v
        rest = mask & ~(1 << i)
        if rest == 0:
            v = 1.0
        else:
            v = 0.0
            for j in _bits(rest):
                v += (self._a[j][i] - self._row_mean(rest, j)) * self._ws(rest, j)
        self._w[key] = v
        return v

    def ws(self, S, i: int) -> float:
        S = set(int(s) for s in S)
        if i not in S:
            raise ValueError(f"node {i} is not in S")
        if len(S) > ORACLE_MAX_SET + 1:
            raise OracleScaleError(f"|S| = {len(S)} exceeds the oracle limit")
        return self._ws(_mask(S), int(i))

    def total(self, S) -> float:
        S = list(S)
        return sum(self.ws(S, i) for i in S)

    def is_dominant(self, S, tol: float = 1e-9) -> bool:
        S = sorted(set(int(s) for s in S))
        n = self.A.shape[0]
        if not S:
            return False
        if len(S) > ORACLE_MAX_SET or n > ORACLE_MAX_NODES:
            raise OracleScaleError(
                f"oracle limited to |S| <= {ORACLE_MAX_SET}, n <= {ORACLE_MAX_NODES}")
        mask = _mask(S)
        if any(self._ws(mask, i) <= tol for i in S):
            return False
        for j in range(n):
            if j in S:
                continue
            if self._ws(mask | (1 << j), j) >= -tol:
                return False
        sub = mask
        while sub:
            if sum(self._ws(sub, i) for i in _bits(sub)) <= tol:
                return False
            sub = (sub - 1) & mask
        return True

    def characteristic_vector(self, S) -> np.ndarray:
        """``x_i = w_S(i) / W(S)`` on S, zero elsewhere."""
        S = sorted(set(int(s) for s in S))
        x = np.zeros(self.A.shape[0])
        w = np.array([self.ws(S, i) for i in S])
        x[S] = w / w.sum()
        return x


def oracle_ws(S, i: int, A) -> float:
    return WeightOracle(A).ws(S, i)


def oracle_total_weight(S, A) -> float:
    return WeightOracle(A).total(S)


def verify_dominant(S, A, tol: float = 1e-9) -> bool:
    """Check the dominant-set conditions with strict margins of ``tol``.

    ``w_S(i) > tol`` inside S, ``w_{S+j}(j) < -tol`` outside, and
    ``W(T) > tol`` for every non-empty ``T`` within S. A zero outside weight
    fails the test, so an isolated node is never reported dominant.
    """
    return WeightOracle(A).is_dominant(S, tol)


def exhaustive_dominant_sets(A, tol: float = 1e-9) -> list[tuple[int, ...]]:
    """Every dominant set of a small graph, by subset enumeration.

    A dominant set needs ``W({i, j}) = 2 a_ij > tol`` for each pair inside
    it, so only cliques of the graph ``{a_ij > tol/2}`` are tested.
    """
    oracle = WeightOracle(A)
    a = oracle.A
    n = a.shape[0]
    if n > ORACLE_MAX_NODES:
        raise OracleScaleError(f"exhaustive search limited to n <= {ORACLE_MAX_NODES}")
    nbr = [_mask(j for j in range(n) if j != i and a[i, j] > tol / 2) for i in range(n)]
    found = []

    def extend(clique: int, cand: int):
        if clique and bin(clique).count("1") <= ORACLE_MAX_SET and oracle.is_dominant(_bits(clique), tol):
            found.append(tuple(_bits(clique)))
        while cand:
            low = cand & -cand
            v = low.bit_length() - 1
            cand ^= low
            extend(clique | low, cand & nbr[v])

    extend(0, (1 << n) - 1)
    return sorted(found)
