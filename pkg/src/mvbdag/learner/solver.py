"""Acyclicity-penalized minimization of the regularized logistic score.

Outer loop: continuation on the quasi-MCP parameters ``(lam, delta)``,
shrunk by ``gamma`` each round and warm-started, stopping once the
unpenalized score no longer decreases. Within a round, a quadratic penalty
``mu/2 * h(W(H))**2 + alpha * h`` is tightened along ``mu_schedule`` and
then by factors of ten until ``h <= h_tol`` (or ``mu_max``), with the
multiplier updated as ``alpha += mu * h`` after each stage. Every stage is
an L-BFGS-B minimization.

In the first-order model every off-diagonal coefficient is split into
nonnegative parts ``h = a - b`` so that ``|h| = a + b`` is smooth on the
feasible box.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.optimize import minimize

from ..graph import Dag, acyclicity_value_and_grad, induced_adjacency, threshold_to_dag
from ..mvb import CapacityError, DomainError, InteractionMap, MVBError
from .params import ParamMatrix, PenaltyParams, SolverConfig
from .score import Design, make_design, quasi_mcp

__all__ = [
    "FULL_MODE_MAX_P",
    "FIRST_ORDER_MAX_P",
    "SolverError",
    "TraceRow",
    "SolveResult",
    "solve",
    "write_trace",
]

log = logging.getLogger(__name__)

FULL_MODE_MAX_P = 12
FIRST_ORDER_MAX_P = 64

TRACE_FIELDS = ("round", "restart", "lam", "delta", "mu", "score", "h", "edges")


class SolverError(MVBError):
    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class TraceRow:
    round: int
    restart: int
    lam: float
    delta: float
    mu: float
    score: float
    h: float
    edges: int


class SolveResult(NamedTuple):
    params: ParamMatrix
    adjacency: np.ndarray
    dag: Dag
    trace: list


@dataclass
class _Problem:
    """Maps the free entries of ``H`` to an L-BFGS-B vector and back."""

    imap: InteractionMap
    design: Design
    acyclicity: str
    allowed: np.ndarray = field(init=False)
    member: np.ndarray = field(init=False)
    split: np.ndarray = field(init=False)
    plain: np.ndarray = field(init=False)

    def __post_init__(self):
        H0 = ParamMatrix.zeros(self.imap)
        self.allowed = H0.allowed()
        self.member = H0.membership().astype(float)
        self.uses_abs = H0.uses_abs
        if self.uses_abs:
            # the intercept row is free; the rest is split into +/- parts
            self.split = self.allowed & self.member.any(axis=1, keepdims=True)
        else:
            self.split = np.zeros_like(self.allowed)
        self.plain = self.allowed & ~self.split
        self.n_plain = int(self.plain.sum())
        self.n_split = int(self.split.sum())
        self.off = ~np.eye(self.imap.p, dtype=bool)

    @property
    def size(self) -> int:
        return self.n_plain + 2 * self.n_split

    def bounds(self):
        return [(None, None)] * self.n_plain + [(0.0, None)] * (2 * self.n_split)

    def order_bounds(self, order):
        """Bounds that zero every coefficient not consistent with ``order``."""
        rank = np.empty(self.imap.p)
        rank[list(order)] = np.arange(self.imap.p)
        latest = np.where(self.member > 0, rank[None, :], -1.0).max(axis=1)
        return self._bounds(latest[:, None] < rank[None, :])

    def support_bounds(self, adj):
        """Bounds that keep only features whose members are all parents under ``adj``."""
        # a feature survives in column j when none of its members is a non-parent
        outside = self.member @ (~np.asarray(adj, dtype=bool)).astype(float)
        return self._bounds(outside == 0)

    def _bounds(self, ok):
        plain = [(None, None) if f else (0.0, 0.0) for f in ok[self.plain]]
        split = [(0.0, None) if f else (0.0, 0.0) for f in ok[self.split]]
        return plain + split + split

    def pack(self, values: np.ndarray) -> np.ndarray:
        pos = np.clip(values[self.split], 0, None)
        neg = np.clip(-values[self.split], 0, None)
        return np.concatenate([values[self.plain], pos, neg])

    def canonical(self, x: np.ndarray) -> np.ndarray:
        """Make the split parts complementary, so ``a + b = |a - b|``.

        Score is unchanged and the penalty and ``h`` can only drop; without
        this the flat part of the penalty lets both parts drift upward.
        """
        if not self.uses_abs:
            return x
        return self.pack(self.unpack(x))

    def unpack(self, x: np.ndarray) -> np.ndarray:
        values = np.zeros(self.allowed.shape)
        values[self.plain] = x[: self.n_plain]
        a = x[self.n_plain : self.n_plain + self.n_split]
        b = x[self.n_plain + self.n_split :]
        values[self.split] = a - b
        return values

    def adjacency(self, x: np.ndarray) -> np.ndarray:
        values = self.unpack(x)
        if self.uses_abs:
            mag = np.zeros(self.allowed.shape)
            a = x[self.n_plain : self.n_plain + self.n_split]
            b = x[self.n_plain + self.n_split :]
            mag[self.split] = a + b
            return self.member.T @ mag
        return self.member.T @ (values * values)

    def score(self, values: np.ndarray) -> tuple[float, np.ndarray]:
        d = self.design
        Z = d.features @ values
        w = d.weights[:, None]
        value = float(np.sum(w * (np.logaddexp(0.0, Z) - d.rows * Z)))
        sig = 0.5 * (1.0 + np.tanh(0.5 * Z))
        return value, d.features.T @ (w * (sig - d.rows))

    def objective(self, x, pp: PenaltyParams, mu: float, alpha: float = 0.0):
        values = self.unpack(x)
        f, g_values = self.score(values)
        W = self.adjacency(x)
        G = np.zeros_like(W)
        pen, dpen = quasi_mcp(W, pp)
        if self.uses_abs:
            # W >= 0 on the box; use the right derivative at W = 0
            dpen = np.where(W == 0, pp.lam, dpen)
        f += float(np.sum(pen[self.off]))
        G += np.where(self.off, dpen, 0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            h, dh = _acyclicity(W, self.acyclicity, not self.uses_abs)
        if h is None:
            # far outside any sensible region: a steep finite wall keeps the line search working
            return _WALL, _WALL * x / max(float(np.linalg.norm(x)), 1e-300)
        f += 0.5 * mu * h * h + alpha * h
        G += (mu * h + alpha) * dh
        back = self.member @ G
        grad_plain = (g_values + (0.0 if self.uses_abs else 2.0 * values * back))[self.plain]
        if self.uses_abs:
            g_a = (g_values + back)[self.split]
            g_b = (-g_values + back)[self.split]
            grad = np.concatenate([grad_plain, g_a, g_b])
        else:
            grad = grad_plain
        return f, grad


_WALL = 1e100


def _acyclicity(W, kind, sum_of_squares):
    """``h`` and ``dh/dW``, or ``(None, None)`` where it overflows.

    When ``W`` is already a sum of squares, ``h`` is applied to its entrywise
    square root: the zero set is unchanged and the function stays quadratic
    in the coefficients near zero instead of quartic.
    """
    try:
        if not sum_of_squares:
            h, dh = acyclicity_value_and_grad(W, kind=kind)
        else:
            p = W.shape[0]
            if kind == "expm":
                E = scipy.linalg.expm(W)
                h, dh = float(np.trace(E) - p), E.T
            else:
                sign, logabsdet = np.linalg.slogdet(np.eye(p) - W)
                if sign <= 0:
                    return None, None
                h, dh = float(-logabsdet), np.linalg.inv(np.eye(p) - W).T
    except (DomainError, OverflowError, np.linalg.LinAlgError):
        return None, None
    if not (np.isfinite(h) and h < 1e100 and np.all(np.isfinite(dh))):
        return None, None
    return max(h, 0.0), dh


def _check_capacity(imap: InteractionMap) -> None:
    cap = FIRST_ORDER_MAX_P if imap.kind == "first-only" else FULL_MODE_MAX_P
    if imap.p > cap:
        raise CapacityError(f"{imap.kind} solve is capped at p <= {cap}")


def solve(source, imap: InteractionMap, cfg: SolverConfig | None = None) -> SolveResult:
    """Learn ``H``, its weighted adjacency and a thresholded DAG.

    ``source`` is a :class:`BinaryDataset` or an exact :class:`GeneralParams`.
    With ``cfg.restarts > 1`` further seeded starts of scale
    ``cfg.restart_scale`` are run and the one with the lowest selection
    value (see :func:`_selection_value`) is kept. With
    ``cfg.order_search`` each start is followed by a pairwise-swap search
    over variable orders.
    """
    cfg = cfg or SolverConfig()
    _check_capacity(imap)
    design = make_design(source, imap)
    problem = _Problem(imap, design, cfg.acyclicity)
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    trace: list[TraceRow] = []
    best = None
    for restart, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        x = _solve_one(problem, cfg, rng, restart, trace)
        objective = _selection_value(problem, cfg, x)
        if best is None or objective < best[1] - 1e-12:
            best = (x, objective)
    x = best[0]
    H = ParamMatrix(imap, problem.unpack(x))
    W = induced_adjacency(H)
    dag = threshold_to_dag(W, cfg.edge_threshold)
    return SolveResult(H, W, dag, trace)


def _selection_value(problem: _Problem, cfg: SolverConfig, x) -> float:
    """Criterion for comparing starts and orders.

    The thresholded graph is refitted on its own support at the last
    round's ``lam, delta`` and charged ``log(n) / (2n)`` per edge, as in
    BIC; an exact table (``n`` infinite) pays nothing. Refitting keeps
    sampling noise in sub-threshold coefficients from deciding the
    comparison.
    """
    adj = (problem.adjacency(x) > cfg.edge_threshold) & problem.off
    x, f = _fit(problem, cfg, problem.support_bounds(adj), x)
    n = problem.design.n
    charge = 0.5 * np.log(n) / n if np.isfinite(n) else 0.0
    return f + charge * int(adj.sum())


def _fit(problem: _Problem, cfg: SolverConfig, bounds, x0):
    """Minimize at the last round's penalty under ``bounds``, without ``h``."""
    pp = _final_penalty(cfg)
    lo = np.array([b[0] if b[0] is not None else -np.inf for b in bounds])
    hi = np.array([b[1] if b[1] is not None else np.inf for b in bounds])
    res = _minimize(problem, cfg, np.clip(x0, lo, hi), bounds, pp, 0.0)
    x = problem.canonical(res.x)
    return x, problem.objective(x, pp, 0.0)[0]


def _final_penalty(cfg: SolverConfig) -> PenaltyParams:
    shrink = cfg.gamma ** (cfg.max_rounds - 1)
    return PenaltyParams(cfg.lambda0 * shrink, cfg.delta0 * shrink)


def _mu_path(cfg: SolverConfig):
    """The configured schedule, then tenfold steps up to ``mu_max``."""
    yield from cfg.mu_schedule
    mu = max(cfg.mu_schedule)
    while mu * 10 <= cfg.mu_max:
        mu *= 10
        yield mu


def _minimize(problem: _Problem, cfg: SolverConfig, x, bounds, pp, mu, alpha=0.0):
    return minimize(
        problem.objective,
        x,
        args=(pp, mu, alpha),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": cfg.max_iter, "gtol": cfg.gtol, "ftol": 1e-12, "maxcor": 20},
    )


def _continuation(problem: _Problem, cfg: SolverConfig, x, bounds, restart: int, trace: list,
                  constrained: bool = True):
    """Rounds of shrinking ``(lam, delta)``; returns the last round that lowered the score.

    With ``constrained=False`` the bounds already force a DAG and no
    acyclicity penalty is applied.
    """
    n_sched = len(cfg.mu_schedule)
    prev = None  # (x, unpenalized score) of the last finished round
    for rnd in range(cfg.max_rounds):
        pp = PenaltyParams(cfg.lambda0 * cfg.gamma**rnd, cfg.delta0 * cfg.gamma**rnd)
        alpha = 0.0
        for stage, mu in enumerate(_mu_path(cfg) if constrained else (0.0,)):
            res = _minimize(problem, cfg, x, bounds, pp, mu, alpha)
            x = problem.canonical(res.x)
            s = problem.score(problem.unpack(x))[0]
            W = problem.adjacency(x)
            h = _acyclicity(W, cfg.acyclicity, not problem.uses_abs)[0]
            row = TraceRow(rnd, restart, pp.lam, pp.delta, mu, s, h,
                           int(np.sum((W > cfg.edge_threshold) & problem.off)))
            trace.append(row)
            if not (np.isfinite(res.fun) and np.all(np.isfinite(x))) or h is None:
                raise SolverError(f"non-finite objective in round {rnd}, mu={mu}", trace)
            alpha += mu * h
            if stage >= n_sched - 1 and h <= cfg.h_tol:
                break
        if prev is not None and s > prev[1] - cfg.score_tol:
            log.debug("score stopped decreasing at round %d", rnd)
            return prev[0]
        prev = (x.copy(), s)
    return prev[0]


def _solve_one(problem: _Problem, cfg: SolverConfig, rng, restart: int, trace: list):
    # the first start is near zero; later ones spread out to reach other orders
    scale = cfg.init_scale if restart == 0 else cfg.restart_scale
    init = rng.uniform(-scale, scale, size=problem.allowed.shape)
    x = problem.pack(np.where(problem.allowed, init, 0.0))
    x = _continuation(problem, cfg, x, problem.bounds(), restart, trace)
    if cfg.order_search:
        x = _order_search(problem, cfg, x, restart, trace)
    return x


def _order_search(problem: _Problem, cfg: SolverConfig, x, restart: int, trace: list):
    """Swap pairs in the learned order while the order-restricted fit improves.

    Each candidate order is fitted by minimizing the regularized score over
    ``H`` supported on that order (acyclic by construction) at the last
    round's ``lam, delta``, and compared by :func:`_selection_value`.
    """
    def fit(order, x0):
        x = _fit(problem, cfg, problem.order_bounds(order), x0)[0]
        return x, _selection_value(problem, cfg, x)

    order = threshold_to_dag(problem.adjacency(x), cfg.edge_threshold).topological_order()
    x, best = fit(order, x)
    improved = True
    while improved:
        improved = False
        for a in range(problem.imap.p - 1):
            for b in range(a + 1, problem.imap.p):
                cand = list(order)
                cand[a], cand[b] = cand[b], cand[a]
                xc, fc = fit(cand, x)
                if fc < best - 1e-10:
                    order, x, best, improved = cand, xc, fc, True
    log.debug("order search settled on %s", order)
    return _continuation(problem, cfg, x, problem.order_bounds(order), restart, trace, constrained=False)


def write_trace(trace, path) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write("# mvbdag-trace v1\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for r in trace:
            writer.writerow([getattr(r, k) for k in TRACE_FIELDS])
