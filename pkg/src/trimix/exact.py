"""Exact distributions of the chain on small groups.

The group is enumerated through its ``n(n-1)/2`` free entries. Each row
operation is a permutation of the element indices, so the transition operator
is applied as a handful of gathers and never materialised.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import stats

from .modular import UniUpperMatrix, group_order

ENUMERATION_CAP = 10**6
DRIFT_TOL = 1e-9


class SizeCapError(ValueError):
    """Requested state space is larger than the enumeration cap."""


def free_positions(n: int) -> dict[tuple[int, int], int]:
    """Map 1-based ``(i, j)``, ``i < j``, to the row-major free-entry index."""
    iu = np.triu_indices(n, 1)
    return {(int(i) + 1, int(j) + 1): p for p, (i, j) in enumerate(zip(*iu))}


def projection_positions(n: int, projection: str) -> list[int]:
    """Free-entry indices read off by a named projection."""
    pos = free_positions(n)
    if projection == "corner":
        return [pos[(1, n)]]
    if projection == "first_row":
        return [pos[(1, j)] for j in range(2, n + 1)]
    if projection == "last_column":
        return [pos[(i, n)] for i in range(1, n)]
    if projection == "full":
        return list(range(n * (n - 1) // 2))
    raise ValueError(f"unknown projection {projection!r}")


@dataclass(frozen=True)
class GroupTable:
    """All of G_n(m), indexed by the mixed-radix code of the free entries."""

    n: int
    m: int

    def __post_init__(self):
        size = group_order(self.n, self.m)
        if size > ENUMERATION_CAP:
            raise SizeCapError(
                f"|G_{self.n}({self.m})| = {self.m}^{self.n * (self.n - 1) // 2} = {size} "
                f"exceeds the enumeration cap {ENUMERATION_CAP}"
            )

    @property
    def size(self) -> int:
        return group_order(self.n, self.m)

    @property
    def n_free(self) -> int:
        return self.n * (self.n - 1) // 2

    @cached_property
    def weights(self) -> np.ndarray:
        return self.m ** np.arange(self.n_free, dtype=np.int64)

    @cached_property
    def coords(self) -> np.ndarray:
        """(size, n_free) array of free entries; row k is element k."""
        idx = np.arange(self.size, dtype=np.int64)
        return ((idx[:, None] // self.weights[None, :]) % self.m).astype(np.int32)

    def index_of(self, free: np.ndarray) -> np.ndarray:
        """Element index for one or many free-entry vectors."""
        return np.asarray(free, dtype=np.int64) @ self.weights

    def element(self, k: int) -> UniUpperMatrix:
        return UniUpperMatrix.from_free_entries(self.coords[k], self.n, self.m)

    @property
    def identity_index(self) -> int:
        return 0

    def row_op_permutation(self, i: int, sign: int) -> np.ndarray:
        """``perm[k]`` = index of ``row_add(element k, i, sign)``."""
        n, m = self.n, self.m
        pos = free_positions(n)
        c = self.coords.astype(np.int64)
        out = c.copy()
        # row i-1 gains sign * row i; row i has 1 in column i
        out[:, pos[(i - 1, i)]] = (c[:, pos[(i - 1, i)]] + sign) % m
        for j in range(i + 1, n + 1):
            out[:, pos[(i - 1, j)]] = (c[:, pos[(i - 1, j)]] + sign * c[:, pos[(i, j)]]) % m
        return self.index_of(out)

    @cached_property
    def permutations(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """For every row ``i``: (perm for +1, perm for -1); mutually inverse."""
        return [(self.row_op_permutation(i, 1), self.row_op_permutation(i, -1)) for i in range(2, self.n + 1)]


_TABLES: dict[tuple[int, int], GroupTable] = {}


def enumerate_group(n: int, m: int) -> GroupTable:
    key = (n, m)
    if key not in _TABLES:
        _TABLES[key] = GroupTable(n, m)
    return _TABLES[key]


@dataclass
class DistVector:
    table: GroupTable
    p: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        if self.p.shape != (self.table.size,):
            raise ValueError("probability vector does not match the group table")
        if np.any(self.p < -1e-15) or abs(self.p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")

    @classmethod
    def point_mass(cls, table: GroupTable, index: int = 0) -> "DistVector":
        p = np.zeros(table.size)
        p[index] = 1.0
        return cls(table, p)

    @classmethod
    def uniform(cls, table: GroupTable) -> "DistVector":
        return cls(table, np.full(table.size, 1.0 / table.size))

    def tv_to_uniform(self) -> float:
        return 0.5 * float(np.abs(self.p - 1.0 / self.table.size).sum())

    def project(self, projection: str) -> np.ndarray:
        """Marginal law of a projection, indexed by its own mixed-radix code."""
        posl = projection_positions(self.table.n, projection)
        m = self.table.m
        codes = self.table.coords[:, posl].astype(np.int64) @ (m ** np.arange(len(posl), dtype=np.int64))
        return np.bincount(codes, weights=self.p, minlength=m ** len(posl))


def _guard(q: np.ndarray) -> np.ndarray:
    drift = abs(q.sum() - 1.0)
    if drift > DRIFT_TOL:
        raise FloatingPointError(f"probability mass drifted by {drift:.3e}")
    return q


def _jump(table: GroupTable, p: np.ndarray) -> np.ndarray:
    """Non-lazy kernel: uniform row, uniform sign."""
    acc = np.zeros_like(p)
    for plus, minus in table.permutations:
        # mass at x moves to row_add(x, +1): new[y] = p[row_add(y, -1)]
        acc += p[minus] + p[plus]
    return acc / (2 * len(table.permutations))


def apply_transition(dist: DistVector) -> DistVector:
    """One step of the lazy discrete chain."""
    q = 0.5 * dist.p + 0.5 * _jump(dist.table, dist.p)
    return DistVector(dist.table, _guard(q))


def _tv(p: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - 1.0 / p.size).sum())


def tv_series(n: int, m: int, t_max: int, start: int = 0) -> np.ndarray:
    """Exact ``d_n(t)`` for ``t = 0..t_max`` from element ``start``."""
    table = enumerate_group(n, m)
    p = DistVector.point_mass(table, start).p
    out = np.empty(t_max + 1)
    out[0] = _tv(p)
    for t in range(1, t_max + 1):
        p = _guard(0.5 * p + 0.5 * _jump(table, p))
        out[t] = _tv(p)
    return out


def distribution_at(n: int, m: int, t: int, start: int = 0) -> DistVector:
    table = enumerate_group(n, m)
    d = DistVector.point_mass(table, start)
    for _ in range(t):
        d = apply_transition(d)
    return d


def exact_tv(n: int, m: int, t: int, start: int = 0) -> float:
    return float(tv_series(n, m, t, start)[-1])


def t_mix_exact(n: int, m: int, eps: float, t_cap: int = 10**7) -> int:
    """Smallest ``t`` with ``d_n(t) <= eps`` for the lazy discrete chain."""
    if not 0 < eps:
        raise ValueError("eps must be positive")
    table = enumerate_group(n, m)
    p = DistVector.point_mass(table).p
    for t in range(t_cap + 1):
        if _tv(p) <= eps:
            return t
        p = _guard(0.5 * p + 0.5 * _jump(table, p))
    raise RuntimeError(f"t_mix({eps}) exceeds {t_cap} steps")


def continuous_distribution(n: int, m: int, t: float, tol: float = 1e-13, start: int = 0) -> tuple[DistVector, float]:
    """Law of the continuous chain at time ``t`` by uniformization.

    ``P_t = sum_k Poisson((n-1) t)(k) K^k`` with ``K`` the jump kernel. The
    series is cut once the Poisson tail drops below ``tol``; that tail is
    returned as a bound on the total-variation truncation error.
    """
    table = enumerate_group(n, m)
    rate = (n - 1) * t
    p = DistVector.point_mass(table, start).p
    if rate == 0:
        return DistVector(table, p), 0.0
    kmax = int(stats.poisson.isf(tol, rate)) + 1
    w = stats.poisson.pmf(np.arange(kmax + 1), rate)
    out = w[0] * p
    for k in range(1, kmax + 1):
        p = _jump(table, p)
        out += w[k] * p
    tail = float(stats.poisson.sf(kmax, rate))
    return DistVector(table, out), tail


def continuous_tv(n: int, m: int, t: float, tol: float = 1e-13) -> tuple[float, float]:
    """Exact continuous-time ``d_n(t)`` and its truncation error bound."""
    d, err = continuous_distribution(n, m, t, tol)
    return d.tv_to_uniform(), err


def projected_tv(dist: DistVector, projection: str) -> float:
    return _tv(dist.project(projection))
