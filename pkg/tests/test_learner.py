import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvbdag.datagen import GraphSpec, GroundTruth, generate
from mvbdag.exact import enumerate_equivalence_class, minimal_equivalence_class
from mvbdag.graph import Dag, acyclicity_value_and_grad, cpdag, shd_cpdag
from mvbdag.learner import (
    ParamMatrix,
    PenaltyParams,
    SolverConfig,
    binotears,
    fit_along_order,
    logistic_fit,
    order_from_adjacency,
    penalty_and_grad,
    population_score,
    quasi_mcp,
    read_config,
    regularized_score,
    regularized_score_and_grad,
    score,
    score_and_grad,
    solve,
    write_config,
    write_trace,
)
from mvbdag.learner.params import ConfigError
from mvbdag.learner.score import acyclicity_penalty_and_grad
from mvbdag.learner.solver import FULL_MODE_MAX_P, SolverError
from mvbdag.mvb import (
    BinaryDataset,
    CapacityError,
    DomainError,
    GeneralParams,
    InteractionMap,
    all_configurations,
    conditional_coeffs,
    feature_map,
    sample,
)

PP = PenaltyParams(0.05, 0.2)


def random_H(imap, rng, scale=1.0):
    H = ParamMatrix.zeros(imap)
    values = rng.normal(scale=scale, size=H.values.shape) * H.allowed()
    return H.with_values(values)


def fd_gradient(f, H, eps=1e-6):
    g = np.zeros_like(H.values)
    for k, j in zip(*np.nonzero(H.allowed())):
        up, down = H.values.copy(), H.values.copy()
        up[k, j] += eps
        down[k, j] -= eps
        g[k, j] = (f(H.with_values(up)) - f(H.with_values(down))) / (2 * eps)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12)


def chain_data(n=10_000, seed=0):
    # strong links, so the chain is far from the collider
    g = Dag(3, [(0, 1), (1, 2)])
    w = (np.array([0.0]), np.array([-2.0, 4.0]), np.array([-2.0, 4.0]))
    data, _ = generate(GroundTruth(g, "first-only", w), n, seed=seed)
    return g, data


# ---------------------------------------------------------------------------
# score and penalty


def test_score_at_zero():
    data = sample(GeneralParams.random(3, np.random.default_rng(0)), 500, seed=1)
    for kind in ("full", "first-only", "first+second"):
        H = ParamMatrix.zeros(InteractionMap(kind, 3))
        assert score(H, data) == pytest.approx(3 * math.log(2))
        assert population_score(H, GeneralParams.random(3, np.random.default_rng(2))) == pytest.approx(
            3 * math.log(2)
        )
        assert regularized_score(H, data, PP) == pytest.approx(3 * math.log(2))


def test_single_intercept_on_all_ones():
    data = BinaryDataset(np.ones((7, 1), dtype=np.int8))
    imap = InteractionMap("full", 1)
    for c in (-1.0, 0.0, 2.5, 10.0):
        H = ParamMatrix(imap, np.array([[c], [0.0]]))
        assert score(H, data) == pytest.approx(math.log1p(math.exp(c)) - c)
    values = [score(ParamMatrix(imap, np.array([[c], [0.0]])), data) for c in (0, 1, 5, 20)]
    assert values == sorted(values, reverse=True)


def test_regularized_score_matches_score_without_penalty():
    rng = np.random.default_rng(3)
    data = sample(GeneralParams.random(3, rng), 400, seed=2)
    H = random_H(InteractionMap("full", 3), rng)
    assert regularized_score(H, data, None) == score(H, data)


def test_saturated_penalty():
    rng = np.random.default_rng(4)
    data = sample(GeneralParams.random(4, rng), 400, seed=3)
    imap = InteractionMap("first-only", 4)
    H = ParamMatrix.zeros(imap)
    H = H.with_values(np.where(H.allowed(), 3.0, 0.0))
    p = 4
    assert regularized_score(H, data, PP) == pytest.approx(
        score(H, data) + p * (p - 1) * PP.lam * PP.delta / 2
    )


def test_population_score_is_the_large_sample_limit():
    rng = np.random.default_rng(5)
    gp = GeneralParams.random(3, rng)
    H = random_H(InteractionMap("full", 3), rng, 0.5)
    data = sample(gp, 10**6, seed=6)
    assert score(H, data) == pytest.approx(population_score(H, gp), abs=5e-3)


def test_population_score_has_positive_curvature():
    rng = np.random.default_rng(6)
    gp = GeneralParams.random(3, rng)
    imap = InteractionMap("full", 3)
    for _ in range(20):
        H = random_H(imap, rng)
        D = random_H(imap, rng)
        t = 1e-3
        second = (
            population_score(H.with_values(H.values + t * D.values), gp)
            - 2 * population_score(H, gp)
            + population_score(H.with_values(H.values - t * D.values), gp)
        )
        assert second > 0


@pytest.mark.parametrize("kind", ["full", "first-only", "first+second"])
def test_score_gradient(kind):
    rng = np.random.default_rng(7)
    imap = InteractionMap(kind, 3)
    data = sample(GeneralParams.random(3, rng), 300, seed=8)
    for _ in range(100):
        H = random_H(imap, rng)
        g = score_and_grad(H, data)[1]
        assert rel_err(fd_gradient(lambda M: score(M, data), H), g) <= 1e-5


@pytest.mark.parametrize("kind", ["full", "first-only"])
def test_regularized_score_gradient(kind):
    rng = np.random.default_rng(8)
    imap = InteractionMap(kind, 3)
    gp = GeneralParams.random(3, rng)
    for _ in range(100):
        # small scale keeps W inside the curved part of the penalty
        H = random_H(imap, rng, 0.2)
        g = regularized_score_and_grad(H, gp, PP)[1]
        fd = fd_gradient(lambda M: regularized_score(M, gp, PP), H)
        assert rel_err(fd, g) <= 1e-5


@pytest.mark.parametrize("kind", ["full", "first-only"])
def test_acyclicity_gradient(kind):
    rng = np.random.default_rng(9)
    imap = InteractionMap(kind, 3)
    for _ in range(100):
        H = random_H(imap, rng, 0.5)
        g = acyclicity_penalty_and_grad(H)[1]
        fd = fd_gradient(lambda M: acyclicity_penalty_and_grad(M)[0], H)
        assert rel_err(fd, g) <= 1e-5


def test_acyclicity_gradient_in_W():
    rng = np.random.default_rng(10)
    for _ in range(100):
        W = rng.random((4, 4))
        g = acyclicity_value_and_grad(W)[1]
        fd = np.zeros_like(W)
        for i in range(4):
            for j in range(4):
                E = np.zeros_like(W)
                E[i, j] = 1e-6
                fd[i, j] = (acyclicity_value_and_grad(W + E)[0] - acyclicity_value_and_grad(W - E)[0]) / 2e-6
        assert rel_err(fd, g) <= 1e-5


def test_penalty_gradient_pulls_back_through_W():
    rng = np.random.default_rng(11)
    H = random_H(InteractionMap("full", 3), rng, 0.2)
    g = penalty_and_grad(H, PP)[1]
    fd = fd_gradient(lambda M: penalty_and_grad(M, PP)[0], H)
    assert rel_err(fd, g) <= 1e-5


def test_quasi_mcp_values():
    assert quasi_mcp(0.0, PP) == (0.0, 0.0)
    assert quasi_mcp(0.1, PP)[0] == pytest.approx(0.00375)
    assert quasi_mcp(0.2, PP)[0] == pytest.approx(0.005)
    assert quasi_mcp(-7.0, PP) == (pytest.approx(0.005), 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(0, 3), st.floats(1e-3, 2), st.floats(1e-3, 2))
def test_quasi_mcp_shape(t, dt, lam, delta):
    pp = PenaltyParams(lam, delta)
    v = quasi_mcp(t, pp)[0]
    assert -1e-15 <= v <= lam * delta / 2 + 1e-15
    assert quasi_mcp(-t, pp)[0] == pytest.approx(v)
    assert quasi_mcp(abs(t) + dt, pp)[0] >= v - 1e-15


def test_penalty_params_validation():
    with pytest.raises(DomainError):
        PenaltyParams(0.0, 0.2)


# ---------------------------------------------------------------------------
# logistic regression


def test_logistic_balanced_intercept():
    fit = logistic_fit(np.ones((4, 1)), [0, 1, 0, 1])
    assert fit.converged and fit.coef[0] == pytest.approx(0.0, abs=1e-10)


def test_logistic_separated_flag():
    F = np.column_stack([np.ones(4), [0, 0, 1, 1]])
    fit = logistic_fit(F, [0, 0, 1, 1])
    assert not fit.converged
    assert logistic_fit(F, [0, 0, 1, 1], ridge=1e-3).converged


def test_logistic_matches_known_solution():
    # two groups with rates 0.2 and 0.75
    F = np.column_stack([np.ones(8), [0, 0, 0, 0, 1, 1, 1, 1]])
    y = [1, 0, 0, 0, 1, 1, 1, 0]
    w = [1, 1, 1, 1, 1, 1, 1, 1]
    F = np.vstack([F, F[[1, 2]]])
    y = y + [0, 1]
    fit = logistic_fit(F, y, weights=w + [1, 1])
    assert fit.coef[0] == pytest.approx(math.log(2 / 4))
    assert fit.coef[0] + fit.coef[1] == pytest.approx(math.log(3))


@pytest.mark.parametrize("seed", range(5))
def test_population_fit_recovers_conditional_coefficients(seed):
    rng = np.random.default_rng(seed)
    gp = GeneralParams.random(4, rng)
    order = tuple(rng.permutation(4))
    rows = all_configurations(4)
    for pos in range(4):
        F = feature_map(InteractionMap("full", pos), rows[:, list(order[:pos])])
        fit = logistic_fit(np.atleast_2d(F).reshape(len(rows), -1), rows[:, order[pos]], weights=gp.probs,
                           tol=1e-12)
        truth = conditional_coeffs(gp, order, pos).coeffs
        assert np.max(np.abs(fit.coef - truth)) < 1e-6


def test_logistic_errors():
    with pytest.raises(DomainError):
        logistic_fit(np.ones((3, 1)), [0, 1])
    with pytest.raises(DomainError):
        logistic_fit(np.ones((2, 1)), [0, 1], ridge=-1.0)


# ---------------------------------------------------------------------------
# solver


def test_solve_uniform_gives_empty_graph():
    res = solve(GeneralParams.uniform(3), InteractionMap("full", 3))
    assert res.dag.n_edges == 0
    data = sample(GeneralParams.uniform(4), 5000, seed=3)
    assert solve(data, InteractionMap("first-only", 4)).dag.n_edges == 0


def test_solve_two_node_population_matches_oracle():
    gp = GeneralParams(2, np.array([0.4, 0.1, 0.1, 0.4]))
    res = solve(gp, InteractionMap("full", 2))
    assert res.dag.n_edges == 1
    oracle = minimal_equivalence_class(enumerate_equivalence_class(gp))[0].graph
    assert cpdag(res.dag) == cpdag(oracle)
    assert res.params.imap == InteractionMap("full", 2)
    assert res.adjacency.shape == (2, 2)


def test_first_order_solve_recovers_assumption_a_graph():
    data, gt = generate(GraphSpec(5, 1, "ER", 1), 10_000, "first-only", seed=1)
    res = solve(data, InteractionMap("first-only", 5))
    assert shd_cpdag(cpdag(res.dag), cpdag(gt.graph)) == 0


def test_solve_is_deterministic_and_traced(tmp_path):
    g, data = chain_data(3000, seed=1)
    a = solve(data, InteractionMap("first-only", 3))
    b = solve(data, InteractionMap("first-only", 3))
    assert np.array_equal(a.params.values, b.params.values)
    assert a.trace and a.trace[0].round == 0
    assert all(r.h >= 0 and r.edges >= 0 for r in a.trace)
    path = tmp_path / "trace.csv"
    write_trace(a.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "# mvbdag-trace v1"
    assert lines[1] == "round,restart,lam,delta,mu,score,h,edges"
    assert len(lines) == 2 + len(a.trace)


def test_solve_returns_acyclic_h():
    _, data = chain_data(3000, seed=2)
    res = solve(data, InteractionMap("full", 3))
    assert acyclicity_value_and_grad(np.sqrt(res.adjacency))[0] < 1e-6
    assert cpdag(res.dag) == cpdag(Dag(3, [(0, 1), (1, 2)]))


def test_solve_errors():
    with pytest.raises(CapacityError):
        solve(GeneralParams.uniform(2), InteractionMap("full", FULL_MODE_MAX_P + 1))
    with pytest.raises(DomainError):
        solve(GeneralParams.uniform(3), InteractionMap("full", 2))
    with pytest.raises(TypeError):
        solve(np.zeros((3, 3)), InteractionMap("full", 3))
    assert issubclass(SolverError, Exception)


# ---------------------------------------------------------------------------
# configuration


def test_config_round_trip(tmp_path):
    cfg = SolverConfig(lambda0=0.1, mu_schedule=(1.0, 100.0), order_search=False, parent_selection="weight")
    write_config(cfg, tmp_path / "c.cfg")
    assert read_config(tmp_path / "c.cfg") == cfg


def test_config_parsing(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nlambda0 = 0.2  # trailing\n\nrestarts = 3\nmu_schedule = 1, 10\n")
    cfg = read_config(path)
    assert cfg.lambda0 == 0.2 and cfg.restarts == 3 and cfg.mu_schedule == (1.0, 10.0)
    for bad in ("nope = 1\n", "lambda0 0.1\n", "restarts = x\n", "gamma = 1.5\n"):
        path.write_text(bad)
        with pytest.raises(ConfigError):
            read_config(path)


def test_config_validation():
    with pytest.raises(DomainError):
        SolverConfig(gamma=1.0)
    with pytest.raises(DomainError):
        SolverConfig(mu_schedule=())
    with pytest.raises(DomainError):
        SolverConfig(mu_max=10.0)
    with pytest.raises(DomainError):
        SolverConfig(parent_selection="aic")


# ---------------------------------------------------------------------------
# two-stage learner


def test_order_from_adjacency_breaks_ties_by_strength():
    W = np.zeros((3, 3))
    W[2, 0] = W[2, 1] = 0.1
    order = order_from_adjacency(W, Dag(3), np.full(3, 0.5))
    assert order[0] == 2
    order = order_from_adjacency(np.zeros((3, 3)), Dag(3, [(1, 0), (0, 2)]), np.full(3, 0.5))
    assert order == [1, 0, 2]


def test_binotears_independent_data():
    data = sample(GeneralParams.uniform(4), 5000, seed=5)
    assert binotears(data).n_edges == 0


def test_binotears_chain():
    g, data = chain_data(10_000, seed=3)
    assert cpdag(binotears(data)) == cpdag(g)


def test_binotears_interaction_data():
    data, gt = generate(GraphSpec(5, 1, "ER", 0), 10_000, "first+second", seed=0)
    assert shd_cpdag(cpdag(binotears(data)), cpdag(gt.graph)) <= 2


def test_fit_along_order_selection_rules():
    g, data = chain_data(10_000, seed=4)
    for selection in ("bic", "weight"):
        est = fit_along_order(data, [0, 1, 2], selection=selection)
        assert est.edges == {(0, 1), (1, 2)}
    with pytest.raises(DomainError):
        fit_along_order(data, [0, 1, 1])
    with pytest.raises(DomainError):
        fit_along_order(data, [0, 1, 2], selection="aic")


def test_binotears_errors():
    with pytest.raises(TypeError):
        binotears(GeneralParams.uniform(3))
    with pytest.raises(DomainError):
        binotears(BinaryDataset(np.zeros((5, 1), dtype=np.int8)))
