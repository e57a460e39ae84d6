"""Population-level recovery of one DAG per variable order, and the sparsest ones."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .graph import Dag, write_edge_list
from .mvb import (
    CapacityError,
    ConditionalCoeffs,
    DomainError,
    GeneralParams,
    MVBError,
    _grlex_masks,
    general_to_natural,
    marginalize,
)

__all__ = [
    "ENUMERATION_MAX_P",
    "DEFAULT_EDGE_TOL",
    "RecoveredModel",
    "recover_parents",
    "recover_dag",
    "enumerate_equivalence_class",
    "minimal_equivalence_class",
    "write_equivalence_class",
]

ENUMERATION_MAX_P = 8
DEFAULT_EDGE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RecoveredModel:
    order: tuple
    graph: Dag
    coeffs: tuple = field(repr=False)

    @property
    def n_edges(self) -> int:
        return self.graph.n_edges


class _NaturalCache:
    """Natural parameters of marginals, keyed by the variable set.

    The block for ``(predecessor set, target)`` does not depend on how the
    predecessors are ordered, so across ``p!`` orders only ``p * 2**(p-1)``
    conversions are needed.
    """

    def __init__(self, gp: GeneralParams):
        self.gp = gp
        self._cache: dict[frozenset, np.ndarray] = {}

    def by_mask(self, variables: tuple[int, ...]) -> np.ndarray:
        """Natural parameters over ``sorted(variables)``, indexed by bitmask."""
        key = frozenset(variables)
        if key not in self._cache:
            self._cache[key] = general_to_natural(marginalize(self.gp, sorted(key))).by_mask()
        return self._cache[key]


def _block(cache: _NaturalCache, order: tuple, position: int) -> ConditionalCoeffs:
    prefix = order[: position + 1]
    f = cache.by_mask(prefix)
    slot = {v: k for k, v in enumerate(sorted(prefix))}
    # bit k of a grlex mask over the predecessors -> bit slot[order[k]] in f
    local = _grlex_masks(position)
    remapped = np.full(local.shape, 1 << slot[order[position]], dtype=np.int64)
    for k in range(position):
        remapped |= ((local >> k) & 1) << slot[order[k]]
    return ConditionalCoeffs(order, position, f[remapped])


def _parents(block: ConditionalCoeffs, tol: float) -> set[int]:
    return {i for i in block.predecessors if block.interaction_weight(i) > tol}


def recover_parents(
    gp: GeneralParams, order: Sequence[int], position: int, tol: float = DEFAULT_EDGE_TOL,
    _cache: _NaturalCache | None = None,
) -> tuple[set[int], ConditionalCoeffs]:
    """Parents of ``order[position]`` among its predecessors, with the coefficient block.

    A predecessor is a parent when the squared coefficients of all
    interactions containing it sum to more than ``tol``.
    """
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(gp.p)):
        raise DomainError(f"{order} is not a permutation of range({gp.p})")
    if not 0 <= position < gp.p:
        raise DomainError(f"position {position} outside range(0, {gp.p})")
    cache = _cache or _NaturalCache(gp)
    block = _block(cache, order, position)
    return _parents(block, tol), block


def recover_dag(
    gp: GeneralParams, order: Sequence[int], tol: float = DEFAULT_EDGE_TOL,
    _cache: _NaturalCache | None = None,
) -> RecoveredModel:
    order = tuple(int(i) for i in order)
    cache = _cache or _NaturalCache(gp)
    edges, blocks = [], []
    for pos in range(gp.p):
        parents, block = recover_parents(gp, order, pos, tol, _cache=cache)
        edges += [(i, order[pos]) for i in parents]
        blocks.append(block)
    return RecoveredModel(order, Dag(gp.p, edges), tuple(blocks))


def enumerate_equivalence_class(gp: GeneralParams, tol: float = DEFAULT_EDGE_TOL) -> list[RecoveredModel]:
    """One recovered model per permutation, in lexicographic order of permutations."""
    if gp.p > ENUMERATION_MAX_P:
        raise CapacityError(f"enumeration is capped at p <= {ENUMERATION_MAX_P}")
    if not gp.strictly_positive():
        raise MVBError("enumeration needs a strictly positive table")
    cache = _NaturalCache(gp)
    return [recover_dag(gp, order, tol, _cache=cache) for order in itertools.permutations(range(gp.p))]


def minimal_equivalence_class(models: Sequence[RecoveredModel]) -> list[RecoveredModel]:
    """Models with the fewest edges."""
    if not models:
        raise ValueError("need at least one model")
    fewest = min(m.n_edges for m in models)
    return [m for m in models if m.n_edges == fewest]


def write_equivalence_class(models: Sequence[RecoveredModel], directory) -> Path:
    """One edge list per order plus ``manifest.csv``; returns the manifest path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    minimal = {id(m) for m in minimal_equivalence_class(models)}
    manifest = d / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        fh.write("# mvbdag-enumeration v1\n")
        writer = csv.writer(fh)
        writer.writerow(["permutation", "edges", "minimal", "file"])
        for rank, m in enumerate(models):
            name = f"order_{rank:05d}.edges"
            write_edge_list(m.graph, d / name)
            perm = " ".join(str(i + 1) for i in m.order)
            writer.writerow([perm, m.n_edges, int(id(m) in minimal), name])
    return manifest
