"""One-node-per-cluster baseline (generalized minimum clique, similarity form).

Selects exactly one node from every cluster so that the summed affinity
over all selected pairs is maximal. This is the classical minimum-cost
formulation with cost = -a_ij.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _backend
from .affinity import MatchGraph
from .errors import BudgetExceededError, ContractError

ENUMERATION_BUDGET = 10**6


@dataclass(frozen=True)
class GmcpSolution:
    selection: tuple[int, ...]  # node index per cluster, ascending cluster label
    total_weight: float
    method: str
    evaluated: int = 0


def selection_weight(A: np.ndarray, selection) -> float:
    """Summed weight of all selected pairs, in the enumeration's summation order."""
    total = 0.0
    sel = list(selection)
    for c in range(1, len(sel)):
        for c2 in range(c):
            total += A[sel[c2], sel[c]]
    return float(total)


def combinations(g: MatchGraph) -> int:
    return math.prod(len(m) for m in g.cluster_members())


def _best_single(g: MatchGraph, members: np.ndarray) -> int:
    return int(min(members, key=lambda i: (-g.nodes[i].s, g.nodes[i].ref_id)))


def solve_exact(g: MatchGraph, budget: int = ENUMERATION_BUDGET,
                backend: str | None = None) -> GmcpSolution:
    """Global optimum by exhaustive enumeration; the lexicographically first wins ties."""
    members = g.cluster_members()
    if len(members) == 1:
        return GmcpSolution((_best_single(g, members[0]),), 0.0, "exact", 1)
    count = math.prod(len(m) for m in members)
    if count > budget:
        raise BudgetExceededError(
            f"{count} combinations exceed the enumeration budget of {budget}; use solve_local")
    offsets = np.zeros(len(members) + 1, dtype=np.intp)
    offsets[1:] = np.cumsum([len(m) for m in members])
    nodes = np.concatenate(members).astype(np.intp)
    A = np.ascontiguousarray(g.A, dtype=float)
    choice, best, evaluated = _backend.get(backend).gmcp_enumerate(A, offsets, nodes)
    selection = tuple(int(members[c][choice[c]]) for c in range(len(members)))
    return GmcpSolution(selection, float(best), "exact", int(evaluated))


def _climb(A: np.ndarray, members: list[np.ndarray], sel: list[int]) -> list[int]:
    """Best-improvement single swaps until none improves the total."""
    nc = len(members)
    while True:
        best_gain, best_move = 0.0, None
        for c in range(nc):
            others = [sel[c2] for c2 in range(nc) if c2 != c]
            cur = A[sel[c], others].sum()
            gains = A[np.ix_(members[c], others)].sum(axis=1) - cur
            k = int(np.argmax(gains))
            if gains[k] > best_gain + 1e-15:
                best_gain, best_move = float(gains[k]), (c, int(members[c][k]))
        if best_move is None:
            return sel
        c, v = best_move
        sel[c] = v


def solve_local(g: MatchGraph, restarts: int = 10, seed: int = 0) -> GmcpSolution:
    """Hill climbing over single-node swaps from random one-per-cluster starts."""
    if restarts < 1:
        raise ContractError("restarts must be at least 1")
    members = g.cluster_members()
    if len(members) == 1:
        return GmcpSolution((_best_single(g, members[0]),), 0.0, "local", 1)
    A = np.asarray(g.A, dtype=float)
    rng = np.random.default_rng(seed)
    best_sel, best_w = None, -math.inf
    for _ in range(restarts):
        start = [int(m[rng.integers(len(m))]) for m in members]
        sel = _climb(A, members, start)
        w = selection_weight(A, sel)
        if w > best_w:
            best_sel, best_w = tuple(sel), w
    return GmcpSolution(best_sel, best_w, "local", restarts)


def is_swap_optimal(g: MatchGraph, selection, tol: float = 1e-12) -> bool:
    """True if no single-cluster swap raises the total weight by more than ``tol``."""
    A = np.asarray(g.A, dtype=float)
    sel = list(selection)
    base = selection_weight(A, sel)
    for c, m in enumerate(g.cluster_members()):
        for v in m:
            trial = sel.copy()
            trial[c] = int(v)
            if selection_weight(A, trial) > base + tol:
                return False
    return True
