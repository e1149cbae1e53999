"""Arithmetic over Z/mZ and the unitriangular group G_n(m).

Row and column indices in the public API are 1-based, matching the usual
matrix notation (row ``i`` of an ``n x n`` matrix has ``1 <= i <= n``).
Internally everything is stored 0-based in ``numpy`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_modulus(m: int) -> int:
    m = int(m)
    if m < 2:
        raise ValueError(f"modulus must be >= 2, got {m}")
    return m


def _check_dim(n: int) -> int:
    n = int(n)
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    return n


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Residue:
    """An element of Z/mZ stored as its representative in ``[0, m)``."""

    value: int
    modulus: int

    def __post_init__(self):
        m = _check_modulus(self.modulus)
        object.__setattr__(self, "modulus", m)
        object.__setattr__(self, "value", int(self.value) % m)

    def _other(self, other) -> int:
        if isinstance(other, Residue):
            if other.modulus != self.modulus:
                raise ValueError(f"modulus mismatch: {self.modulus} vs {other.modulus}")
            return other.value
        return int(other)

    def __add__(self, other):
        return Residue(self.value + self._other(other), self.modulus)

    __radd__ = __add__

    def __sub__(self, other):
        return Residue(self.value - self._other(other), self.modulus)

    def __rsub__(self, other):
        return Residue(self._other(other) - self.value, self.modulus)

    def __mul__(self, other):
        return Residue(self.value * self._other(other), self.modulus)

    __rmul__ = __mul__

    def __neg__(self):
        return Residue(-self.value, self.modulus)

    def __int__(self):
        return self.value

    def __index__(self):
        return self.value

    def centered_magnitude(self) -> int:
        return centered_magnitude(self)

    def exceeds(self, b: int) -> bool:
        """The predicate ``|a| > b``, i.e. ``a in {b+1, ..., m-b-1}``."""
        return centered_magnitude(self) > b


def centered_magnitude(a, m: int | None = None):
    """Return ``min(a, m - a)`` for a residue ``a``.

    Accepts a :class:`Residue`, or a plain integer / integer array together
    with ``m``. Arrays are handled elementwise.
    """
    if isinstance(a, Residue):
        return min(a.value, a.modulus - a.value)
    if m is None:
        raise TypeError("modulus required for non-Residue input")
    a = np.mod(a, m)
    out = np.minimum(a, m - a)
    return int(out) if np.ndim(out) == 0 else out


class ResidueVector:
    """A length-``n`` vector over Z/mZ.

    When used as a frequency/observable vector ``y`` the first coordinate must
    be zero; build those with :meth:`frequency`.
    """

    __slots__ = ("_coords", "modulus")

    def __init__(self, coords, modulus: int):
        m = _check_modulus(modulus)
        arr = np.mod(np.asarray(coords, dtype=np.int64).reshape(-1), m)
        self._coords = _frozen(arr)
        self.modulus = m

    @classmethod
    def frequency(cls, coords, modulus: int) -> "ResidueVector":
        v = cls(coords, modulus)
        if v._coords.size == 0 or v._coords[0] != 0:
            raise ValueError("observable vector must have first coordinate 0")
        return v

    @classmethod
    def basis(cls, k: int, n: int, modulus: int) -> "ResidueVector":
        """Standard basis vector with a 1 in (1-based) coordinate ``k``."""
        if not 1 <= k <= n:
            raise ValueError(f"basis index {k} outside 1..{n}")
        c = np.zeros(n, dtype=np.int64)
        c[k - 1] = 1
        return cls(c, modulus)

    @property
    def coords(self) -> np.ndarray:
        return self._coords

    def __len__(self):
        return self._coords.size

    def __getitem__(self, k):
        return Residue(int(self._coords[k]), self.modulus)

    def __iter__(self):
        return (Residue(int(c), self.modulus) for c in self._coords)

    def __eq__(self, other):
        return (
            isinstance(other, ResidueVector)
            and other.modulus == self.modulus
            and np.array_equal(other._coords, self._coords)
        )

    def __hash__(self):
        return hash((self.modulus, self._coords.tobytes()))

    def __neg__(self):
        return ResidueVector(-self._coords, self.modulus)

    def __repr__(self):
        return f"ResidueVector({self._coords.tolist()}, m={self.modulus})"

    def is_zero(self) -> bool:
        return not self._coords.any()


def dot(y: ResidueVector, v: ResidueVector) -> Residue:
    """``sum_k y_k v_k mod m``."""
    if len(y) != len(v):
        raise ValueError(f"length mismatch: {len(y)} vs {len(v)}")
    if y.modulus != v.modulus:
        raise ValueError(f"modulus mismatch: {y.modulus} vs {v.modulus}")
    m = y.modulus
    # python ints: no overflow for any modulus
    total = sum(int(a) * int(b) for a, b in zip(y.coords, v.coords))
    return Residue(total % m, m)


def mulmod(a: np.ndarray, b: np.ndarray, m: int) -> np.ndarray:
    """Matrix product of residue arrays, reduced mod ``m``.

    Each partial product is reduced before accumulation, so entries stay
    below ``2 m`` and products below ``m**2``; safe in int64 for ``m < 2**31``.
    Works for matrix-matrix and matrix-vector operands.
    """
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    vec = b.ndim == 1
    if vec:
        b = b[:, None]
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"shape mismatch: {a.shape} @ {b.shape}")
    acc = np.zeros((a.shape[0], b.shape[1]), dtype=np.int64)
    for k in range(a.shape[1]):
        acc += np.outer(a[:, k], b[k, :]) % m
        acc %= m
    return acc[:, 0] if vec else acc


class UniUpperMatrix:
    """An element of G_n(m): upper triangular, unit diagonal, entries mod m.

    Instances are immutable; every operation returns a new matrix.
    """

    __slots__ = ("_a", "n", "m")

    def __init__(self, entries, m: int, *, _trusted: bool = False):
        m = _check_modulus(m)
        a = np.mod(np.array(entries, dtype=np.int64), m)
        if not _trusted:
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ValueError(f"expected a square matrix, got shape {a.shape}")
            _check_dim(a.shape[0])
            if np.any(np.diag(a) != 1 % m) or np.any(np.tril(a, -1)):
                raise ValueError("not upper unitriangular")
        self._a = _frozen(a)
        self.n = a.shape[0]
        self.m = m

    @classmethod
    def identity(cls, n: int, m: int) -> "UniUpperMatrix":
        return cls(np.eye(_check_dim(n), dtype=np.int64), m, _trusted=True)

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator) -> "UniUpperMatrix":
        """Uniform sample from G_n(m)."""
        n = _check_dim(n)
        a = np.triu(rng.integers(0, m, size=(n, n), dtype=np.int64), 1)
        a[np.diag_indices(n)] = 1
        return cls(a, m, _trusted=True)

    @classmethod
    def from_free_entries(cls, values, n: int, m: int) -> "UniUpperMatrix":
        """Build from the ``n(n-1)/2`` above-diagonal entries in row-major order."""
        a = np.eye(n, dtype=np.int64)
        iu = np.triu_indices(n, 1)
        a[iu] = np.asarray(values, dtype=np.int64)
        return cls(a, m)

    @property
    def entries(self) -> np.ndarray:
        return self._a

    def free_entries(self) -> np.ndarray:
        return self._a[np.triu_indices(self.n, 1)]

    def __getitem__(self, ij):
        i, j = ij
        return int(self._a[i - 1, j - 1])

    def row(self, i: int) -> ResidueVector:
        return ResidueVector(self._a[i - 1], self.m)

    def column(self, j: int) -> np.ndarray:
        return self._a[:, j - 1].copy()

    def _compatible(self, other: "UniUpperMatrix"):
        if self.n != other.n or self.m != other.m:
            raise ValueError(
                f"incompatible matrices: (n={self.n}, m={self.m}) vs (n={other.n}, m={other.m})"
            )

    def __matmul__(self, other):
        if isinstance(other, UniUpperMatrix):
            return mat_mul(self, other)
        if isinstance(other, ResidueVector):
            if other.modulus != self.m:
                raise ValueError("modulus mismatch")
            return ResidueVector(self.apply(other.coords), self.m)
        return NotImplemented

    def apply(self, vec) -> np.ndarray:
        """Matrix-vector product mod m on a raw integer vector."""
        return mulmod(self._a, np.mod(np.asarray(vec, dtype=np.int64), self.m), self.m)

    def inverse(self) -> "UniUpperMatrix":
        return mat_inverse(self)

    def row_add(self, i: int, sign: int) -> "UniUpperMatrix":
        return row_add(self, i, sign)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self._a, np.eye(self.n, dtype=np.int64)))

    def __eq__(self, other):
        return (
            isinstance(other, UniUpperMatrix)
            and other.m == self.m
            and np.array_equal(other._a, self._a)
        )

    def __hash__(self):
        return hash((self.m, self._a.tobytes()))

    def __repr__(self):
        return f"UniUpperMatrix({self._a.tolist()}, m={self.m})"


def mat_mul(a: UniUpperMatrix, b: UniUpperMatrix) -> UniUpperMatrix:
    a._compatible(b)
    return UniUpperMatrix(mulmod(a.entries, b.entries, a.m), a.m, _trusted=True)


def mat_inverse(a: UniUpperMatrix) -> UniUpperMatrix:
    """Inverse by back-substitution; the unit diagonal means no division."""
    n, m = a.n, a.m
    A = [[int(v) for v in row] for row in a.entries]
    B = [[int(i == j) for j in range(n)] for i in range(n)]
    for j in range(n):
        for i in range(j - 1, -1, -1):
            s = sum(A[i][k] * B[k][j] for k in range(i + 1, j + 1))
            B[i][j] = (-s) % m
    return UniUpperMatrix(B, m, _trusted=True)


def row_add(a: UniUpperMatrix, i: int, sign: int) -> UniUpperMatrix:
    """Add ``sign`` times row ``i`` to row ``i-1``; ``2 <= i <= n``.

    Same as left-multiplying by ``I + sign E(i-1, i)``.
    """
    if not 2 <= i <= a.n:
        raise ValueError(f"row index {i} outside 2..{a.n}")
    if sign not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {sign}")
    out = a.entries.copy()
    out[i - 2] = (out[i - 2] + sign * out[i - 1]) % a.m
    return UniUpperMatrix(out, a.m, _trusted=True)


@dataclass(frozen=True)
class ElementaryMatrix:
    """The raw elementary matrix ``sign * E(i, j)`` with ``i < j`` (1-based).

    ``dense`` gives the nilpotent matrix itself, ``unit`` the group element
    ``I + sign E(i, j)``.
    """

    i: int
    j: int
    sign: int = 1

    def __post_init__(self):
        if not 1 <= self.i < self.j:
            raise ValueError(f"need 1 <= i < j, got ({self.i}, {self.j})")

    def dense(self, n: int, m: int) -> np.ndarray:
        if self.j > n:
            raise ValueError(f"E({self.i},{self.j}) does not fit in dimension {n}")
        e = np.zeros((n, n), dtype=np.int64)
        e[self.i - 1, self.j - 1] = self.sign % m
        return e

    def unit(self, n: int, m: int) -> UniUpperMatrix:
        return UniUpperMatrix(np.eye(n, dtype=np.int64) + self.dense(n, m), m, _trusted=True)

    def apply(self, vec, m: int) -> np.ndarray:
        """``sign E(i, j) v``: a vector supported on coordinate ``i``."""
        v = np.asarray(vec, dtype=np.int64)
        out = np.zeros_like(v)
        out[self.i - 1] = (self.sign * v[self.j - 1]) % m
        return out


def group_order(n: int, m: int) -> int:
    return m ** (n * (n - 1) // 2)
