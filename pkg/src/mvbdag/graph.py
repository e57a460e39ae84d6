"""DAGs, CPDAGs, acyclicity functions and structural Hamming distance.

Nodes are 0-based in memory. Edge-list files are 1-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import scipy.linalg

from .mvb import DatasetFormatError, DomainError, MVBError

__all__ = [
    "GraphError",
    "CycleError",
    "Dag",
    "Cpdag",
    "is_acyclic",
    "topological_order",
    "acyclicity_value_and_grad",
    "induced_adjacency",
    "threshold_to_dag",
    "cpdag",
    "markov_equivalent",
    "shd_cpdag",
    "write_edge_list",
    "read_edge_list",
    "write_cpdag",
    "read_cpdag",
    "write_adjacency_csv",
    "read_adjacency_csv",
]


class GraphError(MVBError):
    pass


class CycleError(GraphError):
    pass


def _pattern(adj) -> np.ndarray:
    if isinstance(adj, Dag):
        return adj.adjacency()
    a = np.asarray(adj)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DomainError("adjacency must be square")
    return a != 0


def topological_order(adj) -> list[int] | None:
    """Kahn's algorithm on the nonzero pattern; ``None`` if there is a cycle.

    Ties are broken by smallest node index.
    """
    a = _pattern(adj)
    p = a.shape[0]
    indeg = a.sum(axis=0).astype(int)
    ready = sorted(i for i in range(p) if indeg[i] == 0)
    order = []
    while ready:
        i = ready.pop(0)
        order.append(i)
        for j in np.flatnonzero(a[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(int(j))
        ready.sort()
    return order if len(order) == p else None


def is_acyclic(adj) -> bool:
    a = _pattern(adj)
    if np.any(np.diag(a)):
        return False
    return topological_order(a) is not None


@dataclass(frozen=True)
class Dag:
    p: int
    edges: frozenset

    def __init__(self, p: int, edges: Iterable[tuple[int, int]] = ()):
        edges = frozenset((int(i), int(j)) for i, j in edges)
        for i, j in edges:
            if i == j:
                raise CycleError(f"self-loop on node {i}")
            if not (0 <= i < p and 0 <= j < p):
                raise GraphError(f"edge ({i}, {j}) outside range(0, {p})")
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "edges", edges)
        if not is_acyclic(self.adjacency()):
            raise CycleError("edges contain a directed cycle")

    @classmethod
    def from_adjacency(cls, adj) -> "Dag":
        a = np.asarray(adj) != 0
        return cls(a.shape[0], zip(*np.nonzero(a)))

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            a[i, j] = True
        return a

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def parents(self, j: int) -> set[int]:
        return {i for i, k in self.edges if k == j}

    def topological_order(self) -> list[int]:
        return topological_order(self.adjacency())

    def respects(self, order) -> bool:
        rank = {v: r for r, v in enumerate(order)}
        return all(rank[i] < rank[j] for i, j in self.edges)


@dataclass(frozen=True)
class Cpdag:
    """Directed edges are ordered pairs; undirected edges are ``(min, max)`` pairs."""

    p: int
    directed: frozenset
    undirected: frozenset

    def __init__(self, p: int, directed=(), undirected=()):
        directed = frozenset((int(i), int(j)) for i, j in directed)
        undirected = frozenset(tuple(sorted((int(i), int(j)))) for i, j in undirected)
        slots = [frozenset(e) for e in directed] + [frozenset(e) for e in undirected]
        if len(slots) != len(set(slots)):
            raise GraphError("a node pair carries more than one edge")
        if any(len(s) != 2 for s in slots):
            raise GraphError("self-loop in CPDAG")
        object.__setattr__(self, "p", int(p))
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)

    @property
    def n_edges(self) -> int:
        return len(self.directed) + len(self.undirected)

    def slot(self, i: int, j: int) -> str:
        """State of the unordered pair ``{i, j}`` as seen from ``i``."""
        if (i, j) in self.directed:
            return "->"
        if (j, i) in self.directed:
            return "<-"
        if tuple(sorted((i, j))) in self.undirected:
            return "--"
        return ""


# ---------------------------------------------------------------------------
# acyclicity


def acyclicity_value_and_grad(W, kind: str = "expm", s: float = 1.0) -> tuple[float, np.ndarray]:
    """Smooth acyclicity function of a nonnegative weighted adjacency and its gradient.

    ``kind="expm"``: ``tr(exp(W*W)) - p``.
    ``kind="logdet"``: ``-log det(s I - W*W) + p log s``, valid while the
    spectral radius of ``W*W`` is below ``s``.
    Both are zero exactly on acyclic patterns.
    """
    W = np.asarray(W, dtype=float)
    if not np.all(np.isfinite(W)):
        raise DomainError("non-finite entry in W")
    p = W.shape[0]
    A = W * W
    if kind == "expm":
        E = scipy.linalg.expm(A)
        value = float(np.trace(E) - p)
        grad = 2.0 * E.T * W
    elif kind == "logdet":
        M = s * np.eye(p) - A
        sign, logabsdet = np.linalg.slogdet(M)
        if sign <= 0:
            raise DomainError("W*W is outside the log-det domain; decrease W or increase s")
        value = float(-logabsdet + p * np.log(s))
        grad = 2.0 * np.linalg.inv(M).T * W
    else:
        raise ValueError(f"unknown acyclicity kind {kind!r}")
    return max(value, 0.0), grad


def induced_adjacency(H) -> np.ndarray:
    """Weighted adjacency ``W(H)`` of a parameter matrix.

    Squared coefficients summed over every interaction containing ``i`` in
    column ``j``; the first-order parameterization uses ``|h_ij|`` instead.
    """
    H.check_structural_zeros()
    values = np.asarray(H.values, dtype=float)
    member = H.membership()  # (rows, p) bool: row subset contains node i
    if H.uses_abs:
        return member.T.astype(float) @ np.abs(values)
    return member.T.astype(float) @ (values * values)


def threshold_to_dag(W, tau: float) -> Dag:
    """Keep entries above ``tau``; break any remaining cycle at its weakest edge."""
    W = np.array(W, dtype=float)
    keep = W > tau
    np.fill_diagonal(keep, False)
    while True:
        cycle = _find_cycle(keep)
        if cycle is None:
            return Dag.from_adjacency(keep)
        i, j = min(cycle, key=lambda e: (W[e], e))
        keep[i, j] = False


def _find_cycle(a: np.ndarray) -> list[tuple[int, int]] | None:
    p = a.shape[0]
    color = [0] * p
    parent = [-1] * p
    for root in range(p):
        if color[root]:
            continue
        stack = [(root, iter(np.flatnonzero(a[root])))]
        color[root] = 1
        while stack:
            u, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[u] = 2
                stack.pop()
                continue
            v = int(nxt)
            if color[v] == 0:
                color[v] = 1
                parent[v] = u
                stack.append((v, iter(np.flatnonzero(a[v]))))
            elif color[v] == 1:
                cycle = [(u, v)]
                w = u
                while w != v:
                    cycle.append((parent[w], w))
                    w = parent[w]
                return cycle
    return None


# ---------------------------------------------------------------------------
# Markov equivalence


def _v_structures(dag: Dag) -> set[tuple[int, int, int]]:
    a = dag.adjacency()
    skel = a | a.T
    out = set()
    for k in range(dag.p):
        pa = np.flatnonzero(a[:, k])
        for x in range(len(pa)):
            for y in range(x + 1, len(pa)):
                i, j = int(pa[x]), int(pa[y])
                if not skel[i, j]:
                    out.add((i, k, j))
    return out


def cpdag(g: Dag) -> Cpdag:
    """Completed partially directed graph of the Markov equivalence class of ``g``.

    Orient v-structures, then close under Meek's rules 1-4.
    """
    p = g.p
    a = g.adjacency()
    skel = a | a.T
    # d[i, j] and not d[j, i]: i -> j ; both true: undirected
    d = skel.copy()
    for i, k, j in _v_structures(g):
        d[k, i] = False
        d[k, j] = False

    def directed(i, j):
        return d[i, j] and not d[j, i]

    def undirected(i, j):
        return d[i, j] and d[j, i]

    changed = True
    while changed:
        changed = False
        for i in range(p):
            for j in range(p):
                if i == j or not undirected(i, j):
                    continue
                orient = False
                # R1: k -> i - j, k and j nonadjacent
                if any(directed(k, i) and not skel[k, j] for k in range(p) if k != j):
                    orient = True
                # R2: i -> k -> j with i - j
                elif any(directed(i, k) and directed(k, j) for k in range(p)):
                    orient = True
                else:
                    # R3: i - k -> j, i - l -> j, k and l nonadjacent
                    ks = [k for k in range(p) if undirected(i, k) and directed(k, j)]
                    if any(not skel[k, l] for x, k in enumerate(ks) for l in ks[x + 1:]):
                        orient = True
                    else:
                        # R4: i - k -> l -> j with k, j nonadjacent and i adjacent to l
                        for k in range(p):
                            if not (undirected(i, k) and not skel[k, j]):
                                continue
                            if any(directed(k, l) and directed(l, j) and skel[i, l] for l in range(p)):
                                orient = True
                                break
                if orient:
                    d[j, i] = False
                    changed = True
    dir_edges = [(i, j) for i in range(p) for j in range(p) if directed(i, j)]
    und_edges = [(i, j) for i in range(p) for j in range(i + 1, p) if undirected(i, j)]
    return Cpdag(p, dir_edges, und_edges)


def markov_equivalent(g1: Dag, g2: Dag) -> bool:
    if g1.p != g2.p:
        raise GraphError(f"node counts differ: {g1.p} vs {g2.p}")
    s1 = g1.adjacency() | g1.adjacency().T
    s2 = g2.adjacency() | g2.adjacency().T
    return bool(np.array_equal(s1, s2)) and _v_structures(g1) == _v_structures(g2)


def shd_cpdag(a: Cpdag, b: Cpdag) -> int:
    """Number of node pairs whose edge state differs.

    A pair counts once whether the edge is missing on one side or oriented
    differently (including directed versus undirected).
    """
    if a.p != b.p:
        raise GraphError(f"node counts differ: {a.p} vs {b.p}")
    return sum(
        a.slot(i, j) != b.slot(i, j) for i in range(a.p) for j in range(i + 1, a.p)
    )


# ---------------------------------------------------------------------------
# I/O


def _read_edge_lines(path: Path, ncols: tuple[int, ...]):
    p = None
    rows = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("p="):
                try:
                    p = int(body[2:])
                except ValueError:
                    raise DatasetFormatError(f"{path}:{lineno}: bad header {line!r}") from None
            continue
        fields = line.split()
        if len(fields) not in ncols:
            raise DatasetFormatError(f"{path}:{lineno}: expected {ncols} fields, got {line!r}")
        try:
            i, j = int(fields[0]) - 1, int(fields[1]) - 1
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: node ids must be integers") from None
        if i < 0 or j < 0:
            raise DatasetFormatError(f"{path}:{lineno}: node ids are 1-based")
        rows.append((lineno, i, j, fields[2:]))
    if p is None:
        p = 1 + max((max(i, j) for _, i, j, _ in rows), default=-1)
    return p, rows


def write_edge_list(g: Dag, path) -> None:
    """``# p=<p>`` header, then ``i j`` (1-based) per edge."""
    lines = [f"# p={g.p}"] + [f"{i + 1} {j + 1}" for i, j in sorted(g.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_edge_list(path) -> Dag:
    path = Path(path)
    p, rows = _read_edge_lines(path, (2,))
    return Dag(p, [(i, j) for _, i, j, _ in rows])


def write_cpdag(c: Cpdag, path) -> None:
    lines = [f"# p={c.p}"]
    lines += [f"{i + 1} {j + 1} d" for i, j in sorted(c.directed)]
    lines += [f"{i + 1} {j + 1} u" for i, j in sorted(c.undirected)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_cpdag(path) -> Cpdag:
    path = Path(path)
    p, rows = _read_edge_lines(path, (3,))
    directed, undirected = [], []
    for lineno, i, j, rest in rows:
        flag = rest[0]
        if flag == "d":
            directed.append((i, j))
        elif flag == "u":
            undirected.append((i, j))
        else:
            raise DatasetFormatError(f"{path}:{lineno}: edge flag must be d or u, got {flag!r}")
    return Cpdag(p, directed, undirected)


def write_adjacency_csv(W, path) -> None:
    W = np.asarray(W, dtype=float)
    np.savetxt(path, W, delimiter=",", fmt="%.17g")


def read_adjacency_csv(path) -> np.ndarray:
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    if W.shape[0] != W.shape[1]:
        raise DatasetFormatError(f"{path}: adjacency matrix is not square")
    return W
