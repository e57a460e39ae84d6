"""Learnable coefficient matrices and solver settings."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..mvb import DomainError, InteractionMap, MVBError

__all__ = ["ParamMatrix", "PenaltyParams", "SolverConfig", "read_config", "write_config"]


@dataclass(frozen=True, eq=False)
class ParamMatrix:
    """Coefficient matrix ``H``: row ``k`` is the ``k``-th active subset of ``imap``,
    column ``j`` holds the logistic coefficients of node ``j``.

    ``imap.kind == "first-only"`` is the reduced first-order model, whose
    adjacency uses absolute values; every other kind uses squared
    coefficients summed over the interactions containing a node.
    """

    imap: InteractionMap
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        shape = (self.imap.n_features, self.imap.p)
        if values.shape != shape:
            raise DomainError(f"expected shape {shape}, got {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, imap: InteractionMap) -> "ParamMatrix":
        return cls(imap, np.zeros((imap.n_features, imap.p)))

    @property
    def p(self) -> int:
        return self.imap.p

    @property
    def mode(self) -> str:
        return "first-order" if self.imap.kind == "first-only" else "full"

    @property
    def uses_abs(self) -> bool:
        return self.imap.kind == "first-only"

    def membership(self) -> np.ndarray:
        return _membership(self.imap)

    def allowed(self) -> np.ndarray:
        """False exactly at the structural zeros (node ``j`` inside its own row subset)."""
        return ~self.membership()

    def check_structural_zeros(self) -> None:
        bad = (~self.allowed()) & (self.values != 0)
        if np.any(bad):
            k, j = map(int, np.argwhere(bad)[0])
            raise DomainError(
                f"structural zero violated: row {self.imap.subsets()[k]} in column {j}"
            )

    def with_values(self, values) -> "ParamMatrix":
        return ParamMatrix(self.imap, values)


@lru_cache(maxsize=None)
def _membership(imap: InteractionMap) -> np.ndarray:
    subsets = imap.subsets()
    mat = np.zeros((len(subsets), imap.p), dtype=bool)
    for k, s in enumerate(subsets):
        mat[k, list(s)] = True
    mat.setflags(write=False)
    return mat


@dataclass(frozen=True)
class PenaltyParams:
    lam: float
    delta: float

    def __post_init__(self):
        if not (self.lam > 0 and self.delta > 0):
            raise DomainError("quasi-MCP needs lam > 0 and delta > 0")


@dataclass(frozen=True)
class SolverConfig:
    lambda0: float = 0.05
    delta0: float = 0.2
    gamma: float = 0.5
    max_rounds: int = 5
    score_tol: float = 1e-6
    edge_threshold: float = 0.3
    prune_threshold: float = 1.0
    parent_selection: str = "bic"
    mu_schedule: tuple = (1.0, 10.0, 100.0, 1000.0)
    h_tol: float = 1e-8
    mu_max: float = 1e8
    acyclicity: str = "expm"
    max_iter: int = 5000
    gtol: float = 1e-7
    init_scale: float = 1e-3
    restarts: int = 1
    restart_scale: float = 1.0
    order_search: bool = True
    ridge: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise DomainError("gamma must lie in (0, 1)")
        if self.edge_threshold < 0 or self.prune_threshold < 0:
            raise DomainError("thresholds must be nonnegative")
        if self.lambda0 <= 0 or self.delta0 <= 0:
            raise DomainError("lambda0 and delta0 must be positive")
        if not self.mu_schedule or any(m <= 0 for m in self.mu_schedule):
            raise DomainError("mu_schedule must be a nonempty list of positive values")
        if self.h_tol < 0 or self.mu_max < max(self.mu_schedule):
            raise DomainError("need h_tol >= 0 and mu_max >= every mu in mu_schedule")
        if self.init_scale < 0 or self.restart_scale < 0:
            raise DomainError("initialization scales must be nonnegative")
        if self.max_rounds < 1 or self.restarts < 1:
            raise DomainError("max_rounds and restarts must be at least 1")
        if self.parent_selection not in ("bic", "weight"):
            raise DomainError(f"unknown parent selection {self.parent_selection!r}")
        if self.acyclicity not in ("expm", "logdet"):
            raise DomainError(f"unknown acyclicity function {self.acyclicity!r}")


class ConfigError(MVBError):
    pass


def read_config(path) -> SolverConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    path = Path(path)
    fields = {f.name: f for f in dataclasses.fields(SolverConfig)}
    kwargs = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        default = fields[key].default
        try:
            if isinstance(default, tuple):
                kwargs[key] = tuple(float(v) for v in value.replace(",", " ").split())
            elif isinstance(default, bool):
                kwargs[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(default, int):
                kwargs[key] = int(value)
            elif isinstance(default, float):
                kwargs[key] = float(value)
            else:
                kwargs[key] = value
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    try:
        return SolverConfig(**kwargs)
    except DomainError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def write_config(cfg: SolverConfig, path) -> None:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = " ".join(repr(x) for x in v)
        lines.append(f"{f.name} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")
