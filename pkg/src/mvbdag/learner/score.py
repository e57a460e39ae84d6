"""Logistic score, quasi-MCP penalty and their gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import acyclicity_value_and_grad, induced_adjacency
from ..mvb import (
    MAX_FULL_P,
    BinaryDataset,
    CapacityError,
    DomainError,
    GeneralParams,
    InteractionMap,
    all_configurations,
    feature_map,
    sigmoid,
)
from .params import ParamMatrix, PenaltyParams

__all__ = [
    "Design",
    "make_design",
    "score",
    "score_and_grad",
    "population_score",
    "quasi_mcp",
    "penalty_and_grad",
    "regularized_score",
    "regularized_score_and_grad",
    "acyclicity_penalty_and_grad",
]


@dataclass(frozen=True, eq=False)
class Design:
    """Distinct observation rows, their weights (summing to one) and features.

    ``n`` is the sample size, infinite for an exact table.
    """

    imap: InteractionMap
    rows: np.ndarray
    weights: np.ndarray
    features: np.ndarray
    n: float = float("inf")


def make_design(source, imap: InteractionMap) -> Design:
    """Weighted design from a dataset (empirical frequencies) or an exact table."""
    if isinstance(source, Design):
        if source.imap != imap:
            raise DomainError("design was built for a different interaction map")
        return source
    if isinstance(source, GeneralParams):
        if source.p > MAX_FULL_P:
            raise CapacityError(f"population scores enumerate 2**p rows; p <= {MAX_FULL_P}")
        rows = all_configurations(source.p)
        weights = np.asarray(source.probs, dtype=float)
        keep = weights > 0
        rows, weights = rows[keep], weights[keep]
        n = float("inf")
    elif isinstance(source, BinaryDataset):
        rows, weights = source.compressed()
        n = float(source.n)
    else:
        raise TypeError(f"expected BinaryDataset or GeneralParams, got {type(source).__name__}")
    if rows.shape[1] != imap.p:
        raise DomainError(f"data has {rows.shape[1]} variables, map expects {imap.p}")
    return Design(imap, rows, weights, feature_map(imap, rows), n)


def _check(H: ParamMatrix, design: Design) -> None:
    if H.imap != design.imap:
        raise DomainError(f"parameter map {H.imap} does not match design map {design.imap}")


def score_and_grad(H: ParamMatrix, source) -> tuple[float, np.ndarray]:
    """Average logistic loss summed over nodes, with its gradient in ``H``."""
    design = make_design(source, H.imap)
    _check(H, design)
    Z = design.features @ H.values
    X = design.rows
    w = design.weights[:, None]
    value = float(np.sum(w * (np.logaddexp(0.0, Z) - X * Z)))
    grad = design.features.T @ (w * (sigmoid(Z) - X))
    return value, grad * H.allowed()


def score(H: ParamMatrix, data, imap: InteractionMap | None = None) -> float:
    if imap is not None and imap != H.imap:
        raise DomainError("interaction map does not match the parameter matrix")
    return score_and_grad(H, data)[0]


def population_score(H: ParamMatrix, gp: GeneralParams, imap: InteractionMap | None = None) -> float:
    """Exact expectation of :func:`score` under ``gp``."""
    if not isinstance(gp, GeneralParams):
        raise TypeError("population_score needs a GeneralParams table")
    return score(H, gp, imap)


def quasi_mcp(t, pp: PenaltyParams):
    """Value and derivative of the quasi-MCP penalty, elementwise.

    Saturates at ``lam * delta / 2`` once ``|t| >= delta``. The derivative at
    ``t = 0`` is taken as 0.
    """
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    inside = a < pp.delta
    value = pp.lam * np.where(inside, a - t * t / (2 * pp.delta), pp.delta / 2)
    deriv = pp.lam * np.where(inside, np.sign(t) - t / pp.delta, 0.0)
    if value.ndim == 0:
        return float(value), float(deriv)
    return value, deriv


def _chain_to_H(H: ParamMatrix, G: np.ndarray) -> np.ndarray:
    """Pull a gradient with respect to ``W(H)`` back to ``H``."""
    member = H.membership().astype(float)
    back = member @ G
    if H.uses_abs:
        return np.sign(H.values) * back * H.allowed()
    return 2.0 * H.values * back * H.allowed()


def penalty_and_grad(H: ParamMatrix, pp: PenaltyParams, W: np.ndarray | None = None):
    if W is None:
        W = induced_adjacency(H)
    value, deriv = quasi_mcp(W, pp)
    off = ~np.eye(H.p, dtype=bool)
    return float(np.sum(value[off])), _chain_to_H(H, np.where(off, deriv, 0.0))


def regularized_score_and_grad(H: ParamMatrix, source, pp: PenaltyParams | None):
    value, grad = score_and_grad(H, source)
    if pp is not None:
        pv, pg = penalty_and_grad(H, pp)
        value += pv
        grad = grad + pg
    return value, grad


def regularized_score(H: ParamMatrix, source, pp: PenaltyParams | None, imap=None) -> float:
    """Score plus the quasi-MCP penalty on off-diagonal entries of ``W(H)``.

    ``pp=None`` means no penalty.
    """
    if imap is not None and imap != H.imap:
        raise DomainError("interaction map does not match the parameter matrix")
    return regularized_score_and_grad(H, source, pp)[0]


def acyclicity_penalty_and_grad(H: ParamMatrix, kind: str = "expm"):
    """``h(W(H))`` and its gradient in ``H``."""
    W = induced_adjacency(H)
    value, G = acyclicity_value_and_grad(W, kind=kind)
    return value, _chain_to_H(H, G)
