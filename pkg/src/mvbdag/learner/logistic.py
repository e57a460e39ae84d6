from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from ..mvb import DomainError, sigmoid

__all__ = ["LogisticFit", "logistic_fit", "is_separated"]


@dataclass(frozen=True)
class LogisticFit:
    coef: np.ndarray
    converged: bool
    n_iter: int
    grad_norm: float
    loss: float
    message: str = ""


def _loss_grad(w, F, y, s, ridge):
    z = F @ w
    loss = float(s @ (np.logaddexp(0.0, z) - y * z)) + 0.5 * ridge * float(w @ w)
    mu = sigmoid(z)
    grad = F.T @ (s * (mu - y)) + ridge * w
    return loss, grad, mu


def is_separated(features, labels, weights=None) -> bool:
    """True if some direction ``v`` orders every weighted row by its label.

    That is ``(2y - 1) * (F v) >= 0`` everywhere with a positive total, the
    (quasi-)complete separation under which the unpenalized fit has no
    finite minimizer.
    """
    F = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if weights is not None:
        keep = np.asarray(weights) > 0
        F, y = F[keep], y[keep]
    A = (2 * y - 1)[:, None] * F
    m = F.shape[1]
    res = linprog(
        np.zeros(m),
        A_ub=-A,
        b_ub=np.zeros(A.shape[0]),
        A_eq=A.sum(axis=0, keepdims=True),
        b_eq=[1.0],
        bounds=[(None, None)] * m,
        method="highs",
    )
    return res.status == 0


def logistic_fit(
    features,
    labels,
    ridge: float = 0.0,
    weights=None,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> LogisticFit:
    """Weighted ridge logistic regression by damped Newton steps.

    Minimizes ``sum_i s_i [log(1 + e^{z_i}) - y_i z_i] + ridge/2 |w|^2`` with
    ``s`` the normalized sample weights (uniform ``1/n`` by default). Steps are
    halved until the loss decreases. A fit that does not reach ``tol`` on the
    gradient norm, or whose coefficients run away (separated data with
    ``ridge = 0``), comes back with ``converged=False`` and the last iterate.
    """
    F = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float).reshape(-1)
    if F.ndim != 2 or F.shape[0] != y.size:
        raise DomainError("features must be n x m with one label per row")
    if F.shape[0] == 0:
        raise DomainError("logistic_fit needs at least one row")
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    s = np.full(y.size, 1.0 / y.size) if weights is None else np.asarray(weights, dtype=float)
    s = s / s.sum()
    m = F.shape[1]
    separated = ridge == 0 and is_separated(F, y, s)
    w = np.zeros(m)
    loss, grad, mu = _loss_grad(w, F, y, s, ridge)
    for it in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol and not separated:
            return LogisticFit(w, True, it - 1, gnorm, loss)
        hess = (F * (s * mu * (1 - mu))[:, None]).T @ F + ridge * np.eye(m)
        try:
            step = np.linalg.solve(hess + 1e-12 * np.eye(m), grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(hess, grad, rcond=None)[0]
        t = 1.0
        while True:
            w_new = w - t * step
            loss_new, grad_new, mu_new = _loss_grad(w_new, F, y, s, ridge)
            if loss_new <= loss + 1e-4 * t * float(grad @ -step) or t < 1e-10:
                break
            t *= 0.5
        w, loss, grad, mu = w_new, loss_new, grad_new, mu_new
    gnorm = float(np.linalg.norm(grad))
    if separated:
        return LogisticFit(w, False, max_iter, gnorm, loss, "separated data: coefficients diverge")
    ok = gnorm <= tol
    return LogisticFit(w, ok, max_iter, gnorm, loss, "" if ok else "iteration limit reached")
