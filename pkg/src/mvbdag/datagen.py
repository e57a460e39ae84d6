"""Random DAGs and binary data from logistic structural equations.

Randomness comes from Philox generators. Every draw in :func:`generate`
uses its own stream spawned from the seed: one for the weights and one for
the samples of each node, so a node's data depend only on the seed and the
node's topological position.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .graph import Dag, write_edge_list
from .mvb import (
    MAX_FULL_P,
    BinaryDataset,
    ConditionalCoeffs,
    GeneralParams,
    InteractionMap,
    MVBError,
    SubsetIndex,
    feature_map,
    sem_induced_distribution,
    sigmoid,
    subset_position,
    write_dataset,
    write_general_params,
)

__all__ = [
    "FAMILIES",
    "InfeasibleDensityError",
    "GraphSpec",
    "GroundTruth",
    "random_dag",
    "draw_weights",
    "generate",
    "exact_general_params",
    "write_ground_truth",
]

FAMILIES = ("ER", "SF")


class InfeasibleDensityError(MVBError):
    pass


def _rng(seed, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(seed if not key else [int(seed), *map(int, key)])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GraphSpec:
    p: int
    k: int = 1
    family: str = "ER"
    seed: int = 0

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be at least 2")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")


def random_dag(spec: GraphSpec) -> Dag:
    """Erdős–Rényi or scale-free DAG with about ``k * p`` edges.

    ER: every pair is kept with probability ``min(1, k p / C(p, 2))`` and the
    skeleton is oriented along a uniformly random permutation. SF: nodes
    arrive one at a time and attach to ``min(k, t)`` earlier nodes chosen with
    probability proportional to degree + 1, edges pointing old to new; labels
    are then shuffled.
    """
    p, k = spec.p, spec.k
    # ER saturates at probability one once kp >= C(p, 2); only k > p - 1 is refused
    if k * p > p * (p - 1):
        raise InfeasibleDensityError(
            f"k={k} asks for {k * p} edges on {p} nodes; at most {p - 1} edges per node are possible"
        )
    rng = _rng(spec.seed, 0)
    adj = np.zeros((p, p), dtype=bool)
    if spec.family == "ER":
        prob = min(1.0, k * p / comb(p, 2))
        upper = np.triu(rng.random((p, p)) < prob, 1)
        perm = rng.permutation(p)
        # upper-triangular in permuted labels is acyclic
        adj[np.ix_(perm, perm)] = upper
    else:
        degree = np.zeros(p)
        for t in range(1, p):
            m = min(k, t)
            w = degree[:t] + 1.0
            targets = rng.choice(t, size=m, replace=False, p=w / w.sum())
            adj[targets, t] = True
            degree[targets] += 1
            degree[t] += m
        perm = rng.permutation(p)
        adj = adj[np.ix_(np.argsort(perm), np.argsort(perm))]
    return Dag.from_adjacency(adj)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Graph, per-node weights on the parents' active features, and the map kind.

    ``weights[j]`` is aligned with ``feature_map(InteractionMap(tau, |PA|), ...)``
    applied to the sorted parents of ``j``.
    """

    graph: Dag
    tau: str
    weights: tuple = field(repr=False)
    gp: GeneralParams | None = field(default=None, repr=False)

    def parents(self, j: int) -> list[int]:
        return sorted(self.graph.parents(j))


def draw_weights(graph: Dag, tau: str, seed) -> tuple:
    """Weights with magnitude in [1, 2] and random sign, one per active feature."""
    rng = _rng(seed, 1)
    out = []
    for j in range(graph.p):
        m = InteractionMap(tau, len(graph.parents(j))).n_features
        mag = rng.uniform(1.0, 2.0, size=m)
        sign = rng.choice((-1.0, 1.0), size=m)
        out.append(mag * sign)
    return tuple(out)


def exact_general_params(graph: Dag, tau: str, weights) -> GeneralParams:
    """Joint table of the generating model, via its structural-equation form."""
    if graph.p > MAX_FULL_P:
        raise MVBError(f"exact tables are capped at p <= {MAX_FULL_P}")
    order = tuple(graph.topological_order())
    blocks = []
    for pos, j in enumerate(order):
        pa = sorted(graph.parents(j))
        imap = InteractionMap(tau, len(pa))
        coeffs = np.zeros(1 << pos)
        index = SubsetIndex(pos)
        rank = {v: r for r, v in enumerate(order)}
        for w, sub in zip(weights[j], imap.subsets()):
            coeffs[subset_position(index, [rank[pa[s]] for s in sub])] = w
        blocks.append(ConditionalCoeffs(order, pos, coeffs))
    return sem_induced_distribution(blocks, order)


def generate(truth, n: int, tau: str | None = None, seed=0, exact_max_p: int = 10):
    """Sample ``n`` rows from the logistic model on ``truth``.

    ``truth`` is a :class:`GraphSpec` (graph drawn first), a :class:`Dag`
    (weights drawn), or a :class:`GroundTruth` (reused as is). Returns the
    dataset and the ground truth, which carries the exact joint table when
    ``p <= exact_max_p``.
    """
    if isinstance(truth, GraphSpec):
        truth = random_dag(truth)
    if isinstance(truth, Dag):
        if tau is None:
            raise ValueError("tau is required when weights must be drawn")
        truth = GroundTruth(truth, tau, draw_weights(truth, tau, seed))
    elif tau is not None and tau != truth.tau:
        raise ValueError(f"ground truth uses tau={truth.tau!r}, got {tau!r}")
    g = truth.graph
    if truth.gp is None and g.p <= exact_max_p:
        truth = GroundTruth(g, truth.tau, truth.weights,
                            exact_general_params(g, truth.tau, truth.weights))
    X = np.zeros((int(n), g.p), dtype=np.int8)
    for pos, j in enumerate(g.topological_order()):
        pa = truth.parents(j)
        feats = feature_map(InteractionMap(truth.tau, len(pa)), X[:, pa])
        q = sigmoid(np.atleast_2d(feats) @ truth.weights[j])
        X[:, j] = _rng(seed, 2, pos).random(int(n)) < q
    return BinaryDataset(X), truth


def write_ground_truth(truth: GroundTruth, directory, prefix: str = "truth") -> list[Path]:
    """Edge list, weight manifest and (when known) the exact table."""
    d = Path(directory)
    paths = [d / f"{prefix}.edges", d / f"{prefix}_weights.csv"]
    write_edge_list(truth.graph, paths[0])
    with paths[1].open("w", newline="") as fh:
        fh.write(f"# mvbdag-weights v1 tau={truth.tau}\n")
        writer = csv.writer(fh)
        writer.writerow(["node", "feature", "weight"])
        for j in range(truth.graph.p):
            pa = truth.parents(j)
            subsets = InteractionMap(truth.tau, len(pa)).subsets()
            for sub, w in zip(subsets, truth.weights[j]):
                name = "*".join(str(pa[s] + 1) for s in sub) or "1"
                writer.writerow([j + 1, name, repr(float(w))])
    if truth.gp is not None:
        paths.append(d / f"{prefix}_gp.csv")
        write_general_params(truth.gp, paths[2])
    return paths
