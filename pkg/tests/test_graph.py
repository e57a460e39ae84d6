import itertools
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvbdag.graph import (
    Cpdag,
    CycleError,
    Dag,
    acyclicity_value_and_grad,
    cpdag,
    induced_adjacency,
    is_acyclic,
    markov_equivalent,
    read_adjacency_csv,
    read_cpdag,
    read_edge_list,
    shd_cpdag,
    threshold_to_dag,
    write_adjacency_csv,
    write_cpdag,
    write_edge_list,
)
from mvbdag.learner import ParamMatrix
from mvbdag.mvb import DatasetFormatError, InteractionMap


def all_dags(p):
    pairs = list(itertools.combinations(range(p), 2))
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        edges = [(i, j) if s == 1 else (j, i) for (i, j), s in zip(pairs, states) if s]
        try:
            yield Dag(p, edges)
        except CycleError:
            pass


def independence_model(g):
    """Every d-separation statement of ``g`` as a frozenset of (i, j, Z)."""
    G = nx.DiGraph()
    G.add_nodes_from(range(g.p))
    G.add_edges_from(g.edges)
    out = set()
    for i, j in itertools.combinations(range(g.p), 2):
        rest = [v for v in range(g.p) if v not in (i, j)]
        for r in range(len(rest) + 1):
            for Z in itertools.combinations(rest, r):
                if nx.is_d_separator(G, {i}, {j}, set(Z)):
                    out.add((i, j, Z))
    return frozenset(out)


CHAIN = Dag(3, [(0, 1), (1, 2)])
COLLIDER = Dag(3, [(0, 1), (2, 1)])


def test_dag_cycle_detection():
    assert is_acyclic(np.zeros((3, 3)))
    assert is_acyclic(CHAIN.adjacency())
    assert not is_acyclic(np.array([[0, 1], [1, 0]]))
    with pytest.raises(CycleError):
        Dag(2, [(0, 1), (1, 0)])
    with pytest.raises(CycleError):
        Dag(2, [(1, 1)])


def test_dag_basics():
    assert CHAIN.parents(1) == {0}
    assert CHAIN.topological_order() == [0, 1, 2]
    assert CHAIN.n_edges == 2
    assert CHAIN.respects([0, 1, 2]) and not CHAIN.respects([2, 1, 0])


def test_acyclicity_examples():
    h, g = acyclicity_value_and_grad(np.zeros((3, 3)))
    assert h == 0 and not g.any()
    W = np.array([[0.0, 1.7], [0.0, 0.0]])
    assert acyclicity_value_and_grad(W)[0] == pytest.approx(0.0, abs=1e-14)
    W = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert acyclicity_value_and_grad(W)[0] == pytest.approx(2 * (math.cosh(1) - 1), rel=1e-12)


def test_logdet_agrees_on_zero_set():
    W = np.array([[0.0, 0.5, 0.2], [0.0, 0.0, 0.4], [0.0, 0.0, 0.0]])
    assert acyclicity_value_and_grad(W, kind="logdet")[0] == pytest.approx(0.0, abs=1e-12)
    W[2, 0] = 0.3
    assert acyclicity_value_and_grad(W, kind="logdet")[0] > 0


def test_induced_adjacency_examples():
    full = InteractionMap("full", 2)
    assert not induced_adjacency(ParamMatrix.zeros(full)).any()
    H = np.zeros((4, 2))
    H[1, 1] = 0.7  # row {0}, column 1
    W = induced_adjacency(ParamMatrix(full, H))
    assert W[0, 1] == pytest.approx(0.49) and W.sum() == pytest.approx(0.49)

    first = InteractionMap("first-only", 3)
    H = np.zeros((4, 3))
    H[1, 2] = -3.0
    W = induced_adjacency(ParamMatrix(first, H))
    assert W[0, 2] == 3.0 and W.sum() == 3.0


def test_induced_adjacency_sums_squares_over_interactions():
    imap = InteractionMap("full", 3)
    subsets = imap.subsets()
    H = np.zeros((len(subsets), 3))
    H[subsets.index((0,)), 2] = 0.5
    H[subsets.index((0, 1)), 2] = -2.0
    W = induced_adjacency(ParamMatrix(imap, H))
    assert W[0, 2] == pytest.approx(0.25 + 4.0)
    assert W[1, 2] == pytest.approx(4.0)


def test_threshold_breaks_cycles_at_weakest_edge():
    W = np.array([[0, 0.9, 0], [0, 0, 0.8], [0.5, 0, 0]])
    g = threshold_to_dag(W, 0.3)
    assert g.edges == {(0, 1), (1, 2)}
    assert threshold_to_dag(W, 0.85).edges == {(0, 1)}


def test_cpdag_examples():
    assert cpdag(Dag(2, [(0, 1)])) == Cpdag(2, undirected=[(0, 1)])
    assert cpdag(COLLIDER) == Cpdag(3, directed=[(0, 1), (2, 1)])
    assert cpdag(CHAIN) == Cpdag(3, undirected=[(0, 1), (1, 2)])


def test_cpdag_meek_rule_one():
    # collider 0->2<-1 then 2-3 must be compelled 2->3
    g = Dag(4, [(0, 2), (1, 2), (2, 3)])
    assert cpdag(g) == Cpdag(4, directed=[(0, 2), (1, 2), (2, 3)])


def test_markov_equivalent_examples():
    assert markov_equivalent(Dag(2, [(0, 1)]), Dag(2, [(1, 0)]))
    assert not markov_equivalent(CHAIN, COLLIDER)
    assert markov_equivalent(CHAIN, CHAIN)


def test_shd_examples():
    assert shd_cpdag(cpdag(CHAIN), cpdag(CHAIN)) == 0
    assert shd_cpdag(cpdag(CHAIN), cpdag(COLLIDER)) == 2
    assert shd_cpdag(Cpdag(2), Cpdag(2, undirected=[(0, 1)])) == 1
    # reversal of a compelled edge counts once
    assert shd_cpdag(Cpdag(2, directed=[(0, 1)]), Cpdag(2, directed=[(1, 0)])) == 1


@pytest.mark.parametrize("p", [2, 3, 4])
def test_markov_equivalence_matches_d_separation(p):
    dags = list(all_dags(p))
    models = [independence_model(g) for g in dags]
    cps = [cpdag(g) for g in dags]
    for a in range(len(dags)):
        assert shd_cpdag(cps[a], cps[a]) == 0
        for b in range(a, len(dags)):
            same = models[a] == models[b]
            assert markov_equivalent(dags[a], dags[b]) == same
            assert (cps[a] == cps[b]) == same


@pytest.mark.parametrize("p", [3, 4])
def test_cpdag_directs_exactly_the_shared_orientations(p):
    dags = list(all_dags(p))
    classes = {}
    for g in dags:
        classes.setdefault(independence_model(g), []).append(g)
    for members in classes.values():
        shared = set.intersection(*(set(g.edges) for g in members))
        for g in members:
            c = cpdag(g)
            assert set(c.directed) == shared


def test_edge_list_round_trip(tmp_path):
    g = Dag(4, [(0, 2), (3, 1)])
    path = tmp_path / "g.edges"
    write_edge_list(g, path)
    assert path.read_text().splitlines()[1] == "1 3"
    assert read_edge_list(path).edges == g.edges
    write_edge_list(Dag(3), path)
    assert read_edge_list(path).p == 3


def test_cpdag_and_adjacency_round_trip(tmp_path):
    c = cpdag(Dag(4, [(0, 2), (1, 2), (2, 3)]))
    write_cpdag(c, tmp_path / "c.txt")
    assert read_cpdag(tmp_path / "c.txt") == c
    W = np.random.default_rng(0).random((3, 3))
    write_adjacency_csv(W, tmp_path / "w.csv")
    assert np.array_equal(read_adjacency_csv(tmp_path / "w.csv"), W)


def test_edge_list_rejects_zero_based(tmp_path):
    (tmp_path / "bad.edges").write_text("0 1\n")
    with pytest.raises(DatasetFormatError):
        read_edge_list(tmp_path / "bad.edges")


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_threshold_output_is_acyclic_and_shd_is_a_metric(p, seed):
    rng = np.random.default_rng(seed)
    W = rng.random((p, p))
    g1 = threshold_to_dag(W, 0.3)
    g2 = threshold_to_dag(W.T, 0.5)
    a, b = cpdag(g1), cpdag(g2)
    assert shd_cpdag(a, b) == shd_cpdag(b, a)
    assert shd_cpdag(a, b) <= math.comb(p, 2)
    assert (shd_cpdag(a, b) == 0) == markov_equivalent(g1, g2)
