"""Two-stage learning: an order from the first-order model, then per-node
logistic regressions with first- and second-order features along it."""
from __future__ import annotations

import heapq

import numpy as np

from ..graph import Dag, threshold_to_dag
from ..mvb import BinaryDataset, DomainError, InteractionMap, feature_map
from .logistic import logistic_fit
from .params import SolverConfig
from .solver import solve

__all__ = ["order_from_adjacency", "fit_along_order", "binotears"]


def order_from_adjacency(W: np.ndarray, dag: Dag, marginals: np.ndarray) -> list[int]:
    """Topological order of ``dag``; free choices go to the strongest source.

    Strength is the out-strength of the unthresholded ``W`` scaled by the
    node's marginal variance. On an empty graph this is the whole order.
    """
    W = np.asarray(W, dtype=float)
    strength = (marginals * (1.0 - marginals)) * (W.sum(axis=1) - np.diag(W))
    adj = dag.adjacency()
    indeg = adj.sum(axis=0)
    heap = [(-strength[i], i) for i in range(dag.p) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, i = heapq.heappop(heap)
        order.append(i)
        for j in np.flatnonzero(adj[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, (-strength[j], int(j)))
    return order


def fit_along_order(
    data: BinaryDataset, order, ridge: float = 1e-6, prune_threshold: float = 1.0,
    kind: str = "first+second", selection: str = "bic",
) -> Dag:
    """Regress each node on interaction features of its predecessors.

    With ``selection="weight"`` a predecessor becomes a parent when the
    squared coefficients of every feature containing it sum to more than
    ``prune_threshold``. With ``selection="bic"`` those features are dropped
    and the model refitted; the predecessor is kept when the deviance rises
    by more than ``log(n)`` per dropped feature.
    """
    if selection not in ("bic", "weight"):
        raise DomainError(f"unknown parent selection {selection!r}")
    order = [int(i) for i in order]
    if sorted(order) != list(range(data.p)):
        raise DomainError(f"{order} is not a permutation of range({data.p})")
    rows, weights = data.compressed()
    charge = np.log(data.n)
    edges = []
    for pos in range(1, data.p):
        j, preds = order[pos], order[:pos]
        imap = InteractionMap(kind, pos)
        subsets = imap.subsets()
        F = feature_map(imap, rows[:, preds])
        fit = logistic_fit(F, rows[:, j], ridge=ridge, weights=weights)
        for k, i in enumerate(preds):
            has = np.array([k in s for s in subsets])
            if selection == "weight":
                keep = float(np.sum(fit.coef[has] ** 2)) > prune_threshold
            else:
                # losses are per-sample means, so deviance is 2n times the gap
                reduced = logistic_fit(F[:, ~has], rows[:, j], ridge=ridge, weights=weights)
                keep = 2.0 * data.n * (reduced.loss - fit.loss) > charge * has.sum()
            if keep:
                edges.append((i, j))
    return Dag(data.p, edges)


def binotears(data: BinaryDataset, cfg: SolverConfig | None = None) -> Dag:
    if not isinstance(data, BinaryDataset):
        raise TypeError("binotears learns from a BinaryDataset")
    if data.p < 2:
        raise DomainError("binotears needs at least two variables")
    cfg = cfg or SolverConfig()
    stage1 = solve(data, InteractionMap("first-only", data.p), cfg)
    dag = threshold_to_dag(stage1.adjacency, cfg.edge_threshold)
    rows, weights = data.compressed()
    marginals = weights @ rows
    order = order_from_adjacency(stage1.adjacency, dag, marginals)
    return fit_along_order(
        data, order, cfg.ridge, cfg.prune_threshold, selection=cfg.parent_selection
    )
