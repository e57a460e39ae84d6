"""Multivariate Bernoulli distribution over ``p`` binary variables.

Conventions used throughout the package:

* Variables are 0-based. Variable ``j`` occupies bit ``j`` of a
  *configuration index*, so ``probs[c]`` is ``P(X = x)`` with
  ``c = sum_j x_j * 2**j``.
* A subset of variables is written either as a sorted tuple of ints or as a
  bitmask using the same bit convention. The set of ones of a configuration
  is therefore the subset with the same bitmask.
* Coefficient vectors indexed by subsets (natural parameters, feature maps)
  are stored in graded-lexicographic order: by size first, then
  lexicographically on the sorted elements.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "MAX_FULL_P",
    "INTERACTION_KINDS",
    "MVBError",
    "InvalidSubsetError",
    "PositivityError",
    "DomainError",
    "CapacityError",
    "DatasetFormatError",
    "SubsetIndex",
    "GeneralParams",
    "NaturalParams",
    "ConditionalCoeffs",
    "BinaryDataset",
    "InteractionMap",
    "subset_position",
    "position_subset",
    "feature_map",
    "general_to_natural",
    "natural_to_general",
    "marginalize",
    "conditional_coeffs",
    "sem_induced_distribution",
    "sample",
    "empirical_general_params",
    "all_configurations",
    "sigmoid",
    "read_dataset",
    "write_dataset",
    "read_general_params",
    "write_general_params",
]

MAX_FULL_P = 16

INTERACTION_KINDS = (
    "full",
    "first+second",
    "first+pth",
    "first+second+pth",
    "second-only",
    "pth-only",
    "first-only",
)


class MVBError(ValueError):
    """Base class for errors raised by this package's numerical routines."""


class InvalidSubsetError(MVBError):
    pass


class PositivityError(MVBError):
    """A probability table has a zero entry where a positive one is required."""


class DomainError(MVBError):
    pass


class CapacityError(MVBError):
    """The requested size exceeds what the operation is allowed to enumerate."""


class DatasetFormatError(MVBError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _popcount(masks: np.ndarray) -> np.ndarray:
    masks = np.asarray(masks, dtype=np.int64)
    out = np.zeros(masks.shape, dtype=np.int64)
    m = masks.copy()
    while np.any(m):
        out += m & 1
        m >>= 1
    return out


def _mask_of(subset: Iterable[int]) -> int:
    mask = 0
    for i in subset:
        mask |= 1 << int(i)
    return mask


def _subset_of_mask(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


@lru_cache(maxsize=None)
def _grlex_masks(p: int) -> np.ndarray:
    masks = [
        _mask_of(s)
        for r in range(p + 1)
        for s in itertools.combinations(range(p), r)
    ]
    return np.asarray(masks, dtype=np.int64)


@dataclass(frozen=True)
class SubsetIndex:
    """Bijection between subsets of ``range(p)`` and graded-lex positions."""

    p: int

    def __post_init__(self):
        if self.p < 0:
            raise ValueError("p must be nonnegative")
        if self.p > MAX_FULL_P:
            raise CapacityError(f"full subset tables are capped at p <= {MAX_FULL_P}")

    @property
    def size(self) -> int:
        return 1 << self.p

    @property
    def masks(self) -> np.ndarray:
        """Bitmask of the subset at each position."""
        return _grlex_masks(self.p)

    @property
    def positions(self) -> np.ndarray:
        """Inverse of :attr:`masks`: ``positions[mask]`` is the grlex position."""
        return _grlex_positions(self.p)

    def subsets(self) -> list[tuple[int, ...]]:
        return [_subset_of_mask(int(m)) for m in self.masks]


@lru_cache(maxsize=None)
def _grlex_positions(p: int) -> np.ndarray:
    masks = _grlex_masks(p)
    pos = np.empty_like(masks)
    pos[masks] = np.arange(masks.size)
    return pos


def _check_subset(p: int, S: Iterable[int]) -> tuple[int, ...]:
    S = tuple(sorted(int(i) for i in S))
    if len(set(S)) != len(S):
        raise InvalidSubsetError(f"repeated element in subset {S}")
    for i in S:
        if not 0 <= i < p:
            raise InvalidSubsetError(f"element {i} outside range(0, {p})")
    return S


def subset_position(index: SubsetIndex, S: Iterable[int]) -> int:
    """Graded-lex position of ``S`` (0-based elements) in ``index``."""
    S = _check_subset(index.p, S)
    return int(index.positions[_mask_of(S)])


def position_subset(index: SubsetIndex, k: int) -> tuple[int, ...]:
    if not 0 <= k < index.size:
        raise InvalidSubsetError(f"position {k} outside range(0, {index.size})")
    return _subset_of_mask(int(index.masks[k]))


def all_configurations(p: int) -> np.ndarray:
    """All ``2**p`` binary vectors, row ``c`` being configuration index ``c``."""
    c = np.arange(1 << p, dtype=np.int64)
    return ((c[:, None] >> np.arange(p)) & 1).astype(np.int8)


def _config_index(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    return rows @ (np.int64(1) << np.arange(rows.shape[1], dtype=np.int64))


# ---------------------------------------------------------------------------
# parameterizations


@dataclass(frozen=True, eq=False)
class GeneralParams:
    """Probability of each configuration, indexed by configuration index."""

    p: int
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if probs.size != 1 << self.p:
            raise DomainError(f"expected {1 << self.p} probabilities, got {probs.size}")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise DomainError("probabilities must be finite and nonnegative")
        total = probs.sum()
        if total <= 0:
            raise DomainError("probabilities sum to zero")
        probs = probs / total
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def uniform(cls, p: int) -> "GeneralParams":
        return cls(p, np.full(1 << p, 1.0 / (1 << p)))

    @classmethod
    def random(cls, p: int, rng: np.random.Generator, concentration: float = 1.0) -> "GeneralParams":
        """Dirichlet draw; strictly positive with probability one."""
        return cls(p, rng.dirichlet(np.full(1 << p, concentration)))

    def strictly_positive(self) -> bool:
        return bool(self.probs.min() > 0)

    def prob(self, x: Sequence[int]) -> float:
        return float(self.probs[int(_config_index(np.atleast_2d(x))[0])])


@dataclass(frozen=True, eq=False)
class NaturalParams:
    """Natural parameters ``f^S`` in graded-lex order.

    ``coeffs[0]`` is the normalizing constant ``f^0 = -b(f)``.
    """

    p: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size != 1 << self.p:
            raise DomainError(f"expected {1 << self.p} coefficients, got {coeffs.size}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_interactions(cls, p: int, coeffs: np.ndarray) -> "NaturalParams":
        """Build from coefficients whose constant entry is ignored and recomputed."""
        coeffs = np.array(coeffs, dtype=float).reshape(-1)
        coeffs[0] = 0.0
        s_values = _zeta(_grlex_to_masks(p, coeffs), p)
        coeffs[0] = -_logsumexp(s_values)
        return cls(p, coeffs)

    def by_mask(self) -> np.ndarray:
        """Coefficients re-indexed by subset bitmask."""
        return _grlex_to_masks(self.p, self.coeffs)

    def coefficient(self, S: Iterable[int]) -> float:
        return float(self.coeffs[subset_position(SubsetIndex(self.p), S)])

    def s_values(self) -> np.ndarray:
        """``S^T = sum_{nonempty U subset of T} f^U`` by bitmask ``T``."""
        f = self.by_mask().copy()
        f[0] = 0.0
        return _zeta(f, self.p)

    def log_partition(self) -> float:
        """``b(f) = log sum_T exp(S^T)``, including the empty set term."""
        return _logsumexp(self.s_values())


@dataclass(frozen=True, eq=False)
class ConditionalCoeffs:
    """Coefficients of ``logit P(X_order[position] = 1 | predecessors)``.

    Entries are aligned with the full feature map over the predecessors
    ``order[:position]`` taken in that order, so their length is
    ``2**position``.
    """

    order: tuple[int, ...]
    position: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        object.__setattr__(self, "order", order)
        if sorted(order) != list(range(len(order))):
            raise DomainError(f"{order} is not a permutation")
        if not 0 <= self.position < len(order):
            raise DomainError("position outside the order")
        coeffs = np.array(self.coeffs, dtype=float).reshape(-1)
        if coeffs.size != 1 << self.position:
            raise DomainError(
                f"expected {1 << self.position} coefficients, got {coeffs.size}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def target(self) -> int:
        return self.order[self.position]

    @property
    def predecessors(self) -> tuple[int, ...]:
        return self.order[: self.position]

    def interaction_weight(self, node: int) -> float:
        """Sum of squared coefficients on subsets containing ``node``."""
        k = self.predecessors.index(node)
        masks = _grlex_masks(self.position)
        return float(np.sum(self.coeffs[(masks >> k) & 1 == 1] ** 2))

    def logits(self, rows: np.ndarray) -> np.ndarray:
        """Conditional logits for full-width rows (columns are variables)."""
        rows = np.atleast_2d(rows)
        feats = _full_features(rows[:, list(self.predecessors)])
        return feats @ self.coeffs


# ---------------------------------------------------------------------------
# Möbius / zeta transforms on the subset lattice


def _zeta(values: np.ndarray, p: int) -> np.ndarray:
    """``out[T] = sum_{S subset of T} values[S]`` over bitmasks."""
    out = np.array(values, dtype=float).reshape((2,) * p if p else (1,))
    # axis a of the C-order reshape is bit p-1-a
    for a in range(p):
        idx_hi = [slice(None)] * p
        idx_lo = [slice(None)] * p
        idx_hi[a] = 1
        idx_lo[a] = 0
        out[tuple(idx_hi)] += out[tuple(idx_lo)]
    return out.reshape(-1)


def _moebius(values: np.ndarray, p: int) -> np.ndarray:
    """Inverse of :func:`_zeta`: ``sum_{S subset of T} (-1)^{|T-S|} values[S]``."""
    out = np.array(values, dtype=float).reshape((2,) * p if p else (1,))
    for a in range(p):
        idx_hi = [slice(None)] * p
        idx_lo = [slice(None)] * p
        idx_hi[a] = 1
        idx_lo[a] = 0
        out[tuple(idx_hi)] -= out[tuple(idx_lo)]
    return out.reshape(-1)


def _grlex_to_masks(p: int, coeffs: np.ndarray) -> np.ndarray:
    out = np.empty(1 << p)
    out[_grlex_masks(p)] = coeffs
    return out


def _masks_to_grlex(p: int, by_mask: np.ndarray) -> np.ndarray:
    return np.asarray(by_mask)[_grlex_masks(p)]


def _logsumexp(a: np.ndarray) -> float:
    m = float(np.max(a))
    return m + float(np.log(np.sum(np.exp(a - m))))


def general_to_natural(gp: GeneralParams) -> NaturalParams:
    """Natural parameters of a strictly positive table.

    Log-ratios against the all-zeros cell give the partial sums ``S^T``;
    Möbius inversion on the subset lattice then isolates each ``f^T``.
    """
    if not gp.strictly_positive():
        raise PositivityError("natural parameters are infinite when a cell has probability 0")
    log_p = np.log(gp.probs)
    f = _moebius(log_p - log_p[0], gp.p)
    # f^0 = -b(f) = log P(0...0) because the table sums to one
    f[0] = log_p[0]
    return NaturalParams(gp.p, _masks_to_grlex(gp.p, f))


def natural_to_general(nat: NaturalParams) -> GeneralParams:
    if not np.all(np.isfinite(nat.coeffs)):
        raise DomainError("natural parameters must be finite")
    s = nat.s_values()
    return GeneralParams(nat.p, np.exp(s - _logsumexp(s)))


# ---------------------------------------------------------------------------
# marginals and conditionals


def _as_tensor(gp: GeneralParams) -> np.ndarray:
    """View probs as a tensor with axis ``j`` for variable ``j``."""
    if gp.p == 0:
        return gp.probs.copy()
    return gp.probs.reshape((2,) * gp.p).transpose(tuple(range(gp.p - 1, -1, -1)))


def _from_tensor(t: np.ndarray) -> np.ndarray:
    k = t.ndim
    return np.ascontiguousarray(t.transpose(tuple(range(k - 1, -1, -1)))).reshape(-1)


def marginalize(gp: GeneralParams, S: Sequence[int]) -> GeneralParams:
    """Marginal law of ``X_S``.

    Variable ``S[k]`` of the input becomes variable ``k`` of the output, so
    the order of ``S`` is significant.
    """
    S = [int(i) for i in S]
    if not S:
        raise InvalidSubsetError("cannot marginalize onto the empty set")
    _check_subset(gp.p, S)
    t = _as_tensor(gp)
    drop = tuple(i for i in range(gp.p) if i not in S)
    kept = sorted(S)
    m = t.sum(axis=drop) if drop else t
    m = m.transpose(tuple(kept.index(i) for i in S))
    return GeneralParams(len(S), _from_tensor(m))


def conditional_coeffs(gp: GeneralParams, order: Sequence[int], position: int) -> ConditionalCoeffs:
    """Logistic coefficients of ``X_order[position]`` given its predecessors in ``order``.

    ``position`` is 0-based; the result has ``2**position`` entries.
    """
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(gp.p)):
        raise DomainError(f"{order} is not a permutation of range({gp.p})")
    if not 0 <= position < gp.p:
        raise DomainError(f"position {position} outside range(0, {gp.p})")
    marg = marginalize(gp, order[: position + 1])
    f = general_to_natural(marg).by_mask()
    target_bit = 1 << position
    coeffs = f[_grlex_masks(position) | target_bit]
    return ConditionalCoeffs(order, position, coeffs)


def _full_features(rows: np.ndarray) -> np.ndarray:
    """Full interaction features of each row, in graded-lex order."""
    rows = np.asarray(rows, dtype=np.int64)
    n, m = rows.shape
    masks = _grlex_masks(m)
    if m == 0:
        return np.ones((n, 1))
    bits = (masks[None, :, None] >> np.arange(m)[None, None, :]) & 1
    # a monomial is 1 iff every variable in its subset is 1
    missing = (bits == 1) & (rows[:, None, :] == 0)
    return (~missing.any(axis=2)).astype(float)


def sem_induced_distribution(
    coeffs_list: Sequence[ConditionalCoeffs], order: Sequence[int]
) -> GeneralParams:
    """Joint law of the structural model that draws ``X_order[j]`` from its conditional."""
    order = tuple(int(i) for i in order)
    p = len(order)
    if len(coeffs_list) != p:
        raise DomainError(f"need {p} conditional blocks, got {len(coeffs_list)}")
    configs = all_configurations(p)
    log_prob = np.zeros(1 << p)
    for j, block in enumerate(coeffs_list):
        if block.order != order or block.position != j:
            raise DomainError(f"block {j} does not match order {order}")
        z = block.logits(configs)
        x = configs[:, order[j]]
        # log sigma(z) if x == 1 else log sigma(-z)
        log_prob -= np.logaddexp(0.0, np.where(x == 1, -z, z))
    return GeneralParams(p, np.exp(log_prob))


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True, eq=False)
class BinaryDataset:
    """An ``n x p`` matrix of 0/1 observations, one sample per row."""

    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.array(self.rows)
        if rows.ndim != 2:
            raise DomainError("dataset must be two-dimensional")
        if rows.size and not np.isin(rows, (0, 1)).all():
            raise DomainError("dataset entries must be 0 or 1")
        rows = rows.astype(np.int8)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def p(self) -> int:
        return self.rows.shape[1]

    def compressed(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows with their relative frequencies."""
        if self.n == 0:
            raise DomainError("empty dataset")
        uniq, counts = np.unique(self.rows, axis=0, return_counts=True)
        return uniq.astype(np.int8), counts / self.n


def sample(gp: GeneralParams, n: int, seed) -> BinaryDataset:
    """Draw ``n`` i.i.d. rows by inverse-CDF lookup on the probability table."""
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(gp.probs)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(int(n)), side="right")
    idx = np.minimum(idx, cdf.size - 1)
    return BinaryDataset(((idx[:, None] >> np.arange(gp.p)) & 1).reshape(int(n), gp.p))


def empirical_general_params(data: BinaryDataset, smoothing: float = 0.5) -> GeneralParams:
    """Relative frequencies with additive smoothing on every configuration."""
    if smoothing < 0:
        raise DomainError("smoothing must be nonnegative")
    if data.n == 0:
        raise DomainError("empty dataset")
    if data.p > MAX_FULL_P:
        raise CapacityError(f"full tables are capped at p <= {MAX_FULL_P}")
    counts = np.bincount(_config_index(data.rows), minlength=1 << data.p).astype(float)
    return GeneralParams(data.p, (counts + smoothing) / (data.n + smoothing * (1 << data.p)))


# ---------------------------------------------------------------------------
# interaction maps


_BLOCKS = {
    "full": None,
    "first+second": {0, 1, 2},
    "first+pth": {0, 1, "p"},
    "first+second+pth": {0, 1, 2, "p"},
    "second-only": {0, 2},
    "pth-only": {0, "p"},
    "first-only": {0, 1},
}


@dataclass(frozen=True)
class InteractionMap:
    """Which interaction blocks of the extended feature map are active.

    The constant is always active. Restricted kinds keep their blocks in the
    same graded-lex positions they occupy in the full map; :meth:`subsets`
    lists only the active ones.
    """

    kind: str
    p: int

    def __post_init__(self):
        if self.kind not in _BLOCKS:
            raise DomainError(f"unknown interaction kind {self.kind!r}; expected one of {INTERACTION_KINDS}")
        if self.p < 0:
            raise DomainError("p must be nonnegative")
        if self.kind == "full" and self.p > MAX_FULL_P:
            raise CapacityError(f"the full map is capped at p <= {MAX_FULL_P}")

    def _active_sizes(self) -> set[int]:
        blocks = _BLOCKS[self.kind]
        if blocks is None:
            return set(range(self.p + 1))
        return {self.p if b == "p" else b for b in blocks if b == "p" or b <= self.p}

    def subsets(self) -> list[tuple[int, ...]]:
        """Active subsets in graded-lex order (the constant first)."""
        return [
            s
            for r in sorted(self._active_sizes())
            for s in itertools.combinations(range(self.p), r)
        ]

    @property
    def n_features(self) -> int:
        return len(self.subsets())


@lru_cache(maxsize=None)
def _subset_matrix(kind: str, p: int) -> np.ndarray:
    subsets = InteractionMap(kind, p).subsets()
    mat = np.zeros((len(subsets), p), dtype=bool)
    for k, s in enumerate(subsets):
        mat[k, list(s)] = True
    return mat


def feature_map(imap: InteractionMap, x, dense: bool = False) -> np.ndarray:
    """Interaction features of one vector or of every row of a matrix.

    By default only active features are returned. With ``dense=True`` the
    output has all ``2**p`` graded-lex slots and inactive blocks are zero.
    """
    x = np.asarray(x)
    single = x.ndim == 1
    rows = np.atleast_2d(x)
    if rows.shape[1] != imap.p:
        raise DomainError(f"expected {imap.p} columns, got {rows.shape[1]}")
    if rows.size and not np.isin(rows, (0, 1)).all():
        raise DomainError("feature maps are defined on binary vectors only")
    members = _subset_matrix(imap.kind, imap.p)
    rows = rows.astype(bool)
    # product over members == all members are one
    feats = np.ones((rows.shape[0], members.shape[0]))
    for k in range(members.shape[0]):
        cols = np.flatnonzero(members[k])
        if cols.size:
            feats[:, k] = rows[:, cols].all(axis=1)
    if dense:
        if imap.p > MAX_FULL_P:
            raise CapacityError(f"dense feature maps are capped at p <= {MAX_FULL_P}")
        full = np.zeros((rows.shape[0], 1 << imap.p))
        pos = _grlex_positions(imap.p)[[_mask_of(s) for s in imap.subsets()]]
        full[:, pos] = feats
        feats = full
    return feats[0] if single else feats


# ---------------------------------------------------------------------------
# I/O


def write_dataset(data: BinaryDataset, path) -> None:
    """Headerless CSV of 0/1 integers, one row per sample."""
    path = Path(path)
    lines = [",".join(str(int(v)) for v in row) for row in data.rows]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def read_dataset(path) -> BinaryDataset:
    path = Path(path)
    rows = []
    width = None
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            fields = [f.strip() for f in line.split(",")]
            if any(f not in ("0", "1") for f in fields):
                raise DatasetFormatError(f"{path}:{lineno}: entries must be 0 or 1, got {line!r}")
            if width is None:
                width = len(fields)
            elif len(fields) != width:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {width} columns, got {len(fields)}"
                )
            rows.append([int(f) for f in fields])
    if width is None:
        raise DatasetFormatError(f"{path}: no data rows")
    return BinaryDataset(np.asarray(rows, dtype=np.int8))


def write_general_params(gp: GeneralParams, path) -> None:
    """One header line ``p=<p>`` then one probability per configuration index."""
    lines = [f"p={gp.p}"] + [repr(float(v)) for v in gp.probs]
    Path(path).write_text("\n".join(lines) + "\n")


def read_general_params(path) -> GeneralParams:
    path = Path(path)
    lines = [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("p="):
        raise DatasetFormatError(f"{path}:1: expected header 'p=<int>'")
    try:
        p = int(lines[0][2:])
    except ValueError:
        raise DatasetFormatError(f"{path}:1: bad header {lines[0]!r}") from None
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            values.append(float(line))
        except ValueError:
            raise DatasetFormatError(f"{path}:{lineno}: not a number: {line!r}") from None
    if len(values) != 1 << p:
        raise DatasetFormatError(f"{path}: expected {1 << p} probabilities, got {len(values)}")
    return GeneralParams(p, np.asarray(values))
