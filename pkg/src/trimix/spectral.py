"""Characters of the first-row walk and the bounds built from them.

Given the row-2 values ``w_1..w_k`` at the row-2 ring times, the first row
moves by ``sum_s a_s w_s`` with independent uniform signs. Its Fourier
coefficient at a frequency ``y`` is ``prod_s cos(2 pi <y, w_s> / m)``.

Frequencies carry ``n`` coordinates with the first fixed at 0. In the
``(n-1)``-coordinate view ``e_k`` is array position ``k`` (0-based), so
``<e_1>`` is the set of multiples of array position 1.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .exact import SizeCapError
from .modular import ResidueVector, dot
from .schedule import Schedule

Y_CAP = 2**24
_CHUNK = 2**15

E1, P2, QI, WI = "e1", "P2", "QI", "WI"
CLASSES = (E1, P2, QI, WI)


def classify(y: ResidueVector, I: int) -> str:
    """Class of a nonzero frequency: ``<e1>\\0``, ``P2``, ``Q_I`` or ``W_I``.

    Checked in that order, so the cells partition the nonzero frequencies
    even when ``I <= 3`` makes ``Q_I`` empty.
    """
    c = y.coords
    if c[0] != 0:
        raise ValueError("frequency must have first coordinate 0")
    support = np.nonzero(c)[0]
    if support.size == 0:
        raise ValueError("the zero frequency has no class")
    top = int(support.max())
    if top <= 1:
        return E1
    if top == 2:
        return P2
    if top <= I - 1:
        return QI
    return WI


@dataclass(frozen=True)
class FrequencyVector:
    y: ResidueVector
    label: str

    @classmethod
    def of(cls, y: ResidueVector, I: int) -> "FrequencyVector":
        return cls(y, classify(y, I))


@dataclass
class ConditionalSpectrum:
    """Row-2 values ``w_1..w_k`` seen at the row-2 ring times, as a (k, n) array."""

    ws: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        self.ws = np.mod(np.asarray(self.ws, dtype=np.int64).reshape(-1, self.n), self.m)

    @property
    def k(self) -> int:
        return self.ws.shape[0]

    @classmethod
    def from_vectors(cls, ws, n: int, m: int) -> "ConditionalSpectrum":
        return cls(np.array([w.coords if isinstance(w, ResidueVector) else w for w in ws]).reshape(-1, n), n, m)


def frequency_count(n: int, m: int) -> int:
    return m ** (n - 1)


def frequencies(n: int, m: int) -> np.ndarray:
    """All frequencies as an (m^(n-1), n) array; row 0 is the zero frequency.

    Row ``r`` encodes ``r`` in base ``m`` over positions ``1..n-1``.
    """
    M = frequency_count(n, m)
    if M > Y_CAP:
        raise SizeCapError(f"frequency space has m^(n-1) = {M} vectors, cap is {Y_CAP}; pass a restricted sample")
    idx = np.arange(M, dtype=np.int64)
    out = np.zeros((M, n), dtype=np.int64)
    out[:, 1:] = (idx[:, None] // (m ** np.arange(n - 1, dtype=np.int64))[None, :]) % m
    return out


def eigenvalue(y: ResidueVector, w: ResidueVector) -> float:
    """``cos(2 pi <y, w> / m)``."""
    return math.cos(2.0 * math.pi * dot(y, w).value / y.modulus)


def _cos_sums(spec: ConditionalSpectrum, ys: np.ndarray):
    """Per-frequency ``sum_s cos`` and ``prod_s cos``, chunked over ``ys``."""
    m = spec.m
    sums = np.empty(len(ys))
    prods = np.empty(len(ys))
    W = spec.ws.T
    for a in range(0, len(ys), _CHUNK):
        block = ys[a:a + _CHUNK]
        if spec.k == 0:
            sums[a:a + len(block)] = 0.0
            prods[a:a + len(block)] = 1.0
            continue
        c = np.cos(2.0 * np.pi * ((block @ W) % m) / m)
        sums[a:a + len(block)] = c.sum(axis=1)
        prods[a:a + len(block)] = c.prod(axis=1)
    return sums, prods


def _nonzero(ys: np.ndarray) -> np.ndarray:
    return ys[np.any(ys != 0, axis=1)]


def l2_bound(spec: ConditionalSpectrum, ys: np.ndarray | None = None) -> float:
    """``sum_{y != 0} exp(-2 (k - sum_s cos(2 pi <y, w_s> / m)))``.

    This exponential form only dominates the squared Fourier coefficients
    when every cosine is nonnegative; see :func:`l2_exact` for the sum that
    always dominates ``4 TV^2``.
    """
    ys = _nonzero(frequencies(spec.n, spec.m) if ys is None else np.asarray(ys, dtype=np.int64))
    sums, _ = _cos_sums(spec, ys)
    return float(np.exp(-2.0 * (spec.k - sums)).sum())


def l2_exact(spec: ConditionalSpectrum, ys: np.ndarray | None = None) -> float:
    """``sum_{y != 0} prod_s cos^2(2 pi <y, w_s> / m)``, the squared l2 distance times m^(n-1)."""
    ys = _nonzero(frequencies(spec.n, spec.m) if ys is None else np.asarray(ys, dtype=np.int64))
    _, prods = _cos_sums(spec, ys)
    return float((prods**2).sum())


def fourier_coefficients(spec: ConditionalSpectrum) -> np.ndarray:
    _, prods = _cos_sums(spec, frequencies(spec.n, spec.m))
    return prods


def conditional_law(spec: ConditionalSpectrum) -> np.ndarray:
    """Law of ``sum_s a_s w_s`` on coordinates ``2..n``, by Fourier inversion.

    Indexed like :func:`frequencies` (base-``m`` code of coordinates 2..n).
    """
    ys = frequencies(spec.n, spec.m)
    M = len(ys)
    if M * M > 4 * Y_CAP:
        raise SizeCapError(f"direct inversion over {M} points is too large")
    phi = fourier_coefficients(spec)
    p = np.empty(M)
    # coefficients are real and even, so the inverse transform is a cosine sum
    for a in range(0, M, _CHUNK):
        xs = ys[a:a + _CHUNK]
        p[a:a + len(xs)] = np.cos(2.0 * np.pi * ((xs @ ys.T) % spec.m) / spec.m) @ phi / M
    return p


def conditional_exact_tv(spec: ConditionalSpectrum) -> float:
    """Exact TV between the conditional first-row law and uniform on (Z/mZ)^(n-1)."""
    p = conditional_law(spec)
    return 0.5 * float(np.abs(p - 1.0 / len(p)).sum())


def spectral_sum_bound(x: float, m: int) -> tuple[float, float]:
    """Both sides of ``sum_{j=1}^{m-1} e^{-2x(1-cos(2 pi j/m))} <= m e^{-2x} + sqrt(3) m / (2 sqrt(2 pi x))``."""
    if not x > 0:
        raise ValueError(f"x must be positive, got {x}")
    if m < 2:
        raise ValueError(f"m must be >= 2, got {m}")
    j = np.arange(1, m)
    lhs = float(np.exp(-2.0 * x * (1.0 - np.cos(2.0 * np.pi * j / m))).sum())
    rhs = m * math.exp(-2.0 * x) + math.sqrt(3.0) * m / (2.0 * math.sqrt(2.0 * math.pi * x))
    return lhs, rhs


def class_counts(n: int, m: int, I: int) -> dict[str, int]:
    """Exact cell sizes of the partition used by :func:`classify`."""
    top = max(2, min(I - 1, n - 1))
    counts = {E1: m - 1, P2: 0, QI: 0, WI: 0}
    if n >= 3:
        counts[P2] = m * m - m
        counts[QI] = m**top - m * m
        counts[WI] = m ** (n - 1) - m**top
    return counts


@dataclass
class BoundBreakdown:
    k: float
    term_e1: float
    term_P2: float
    term_QI: float
    term_WI: float
    term_e1_bound: float | None
    total: float

    def to_json(self) -> str:
        return json.dumps({"schema_version": 1, **asdict(self)}, sort_keys=True)

    def csv_row(self) -> list[float]:
        return [self.k, self.term_e1, self.term_P2, self.term_QI, self.term_WI, self.total]


CSV_HEADER = ["k", "term_e1", "term_P2", "term_QI", "term_WI", "total"]


def _class_term(count: float, k: float, threshold: float, m: float) -> float:
    # every ring with |Z| > threshold contributes an eigenvalue below cos(2 pi threshold / m)
    return count * math.exp(-2.0 * k * (1.0 - math.cos(2.0 * math.pi * threshold / m)))


def lemma_q_bound_terms(n: int, m: int, k: float, schedule: Schedule, exact_counts: bool = False) -> BoundBreakdown:
    """Four-class bound on ``4 ||q - u||^2`` with ``k`` qualifying row-2 rings.

    Cell sizes default to the crude ``m^2``, ``m^I`` and ``m^n``; pass
    ``exact_counts=True`` for the true cardinalities. The ``<e_1>`` term is
    the exact trigonometric sum, with its closed-form bound reported beside it.
    """
    if schedule.n != n or schedule.m != m:
        raise ValueError("schedule was built for a different (n, m)")
    if not 2 <= schedule.I <= n:
        raise ValueError(f"schedule row index I={schedule.I} outside 2..{n}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    for name in ("x", "w", "p2_threshold"):
        if not 0 <= getattr(schedule, name) <= m / 2:
            raise ValueError(f"threshold {name}={getattr(schedule, name)} outside [0, m/2]")
    if k == 0:
        e1, e1_bound = float(m - 1), None
    else:
        e1, e1_bound = spectral_sum_bound(k, m)
    if exact_counts:
        cc = class_counts(n, m, schedule.I)
        nP, nQ, nW = cc[P2], cc[QI], cc[WI]
    else:
        nP, nQ, nW = m**2, m**schedule.I, m**n
    tP = _class_term(nP, k, schedule.p2_threshold, m)
    tQ = _class_term(nQ, k, schedule.w, m)
    tW = _class_term(nW, k, schedule.x, m)
    return BoundBreakdown(k, e1, tP, tQ, tW, e1_bound, e1 + tP + tQ + tW)


def prime_wi_term(n: int, m: int, k: float) -> float:
    """``m^n e^{-k (2 - sqrt 2)}``: the W_I term at threshold m/8."""
    return m**n * math.exp(-k * (2.0 - math.sqrt(2.0)))


def enumerate_classes(n: int, m: int, I: int) -> dict[str, int]:
    """Brute-force cell sizes (for checking :func:`class_counts`)."""
    counts = dict.fromkeys(CLASSES, 0)
    for tail in itertools.product(range(m), repeat=n - 1):
        if any(tail):
            counts[classify(ResidueVector((0, *tail), m), I)] += 1
    return counts


__all__ = [
    "BoundBreakdown",
    "ConditionalSpectrum",
    "FrequencyVector",
    "class_counts",
    "classify",
    "conditional_exact_tv",
    "conditional_law",
    "eigenvalue",
    "frequencies",
    "l2_bound",
    "l2_exact",
    "lemma_q_bound_terms",
    "spectral_sum_bound",
]
