"""Monte Carlo estimators built on replica farms.

Replicas are grouped into fixed-size blocks. Block ``b`` of a run tagged
``tag`` draws from ``stream(seed, tag, ..., b)``, so the partition and hence
every estimate is fixed by the run description, whatever the thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .chain import DISCRETE, BatchChain, ChainConfig, generate_log, simulate
from .exact import (
    ENUMERATION_CAP,
    SizeCapError,
    continuous_distribution,
    continuous_tv,
    distribution_at,
    t_mix_exact,
)
from .modular import ResidueVector, group_order
from .observables import column_over_Z, column_trace, detect_intervals, good_intervals, track_Z
from .schedule import Constants, Schedule, schedule_eval
from .spectral import ConditionalSpectrum, conditional_exact_tv

BLOCK = 1 << 14
BOOTSTRAP_RESAMPLES = 200
PROJECTIONS = ("corner", "first_row", "last_column", "full")

# stream tags, one per estimator family
_TAG_PROJ, _TAG_BOOT, _TAG_EXPON, _TAG_INDUCT, _TAG_TAIL, _TAG_SCALE = range(101, 107)


def default_threads() -> int:
    return os.cpu_count() or 1


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def _blocks(replicas: int, block: int = BLOCK) -> list[int]:
    full, rest = divmod(replicas, block)
    return [block] * full + ([rest] if rest else [])


def farm(fn: Callable[[int, int], np.ndarray], replicas: int, threads: int | None = 1, block: int = BLOCK) -> np.ndarray:
    """Sum ``fn(b, size_b)`` over the replica blocks.

    ``fn`` must be a pure function of its block index, and its outputs
    integer-valued so that the merge is exact in any order.
    """
    sizes = _blocks(replicas, block)
    if not threads or threads <= 1 or len(sizes) == 1:
        parts = [fn(b, s) for b, s in enumerate(sizes)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(fn, range(len(sizes)), sizes))
    return np.sum(parts, axis=0)


# ---------------------------------------------------------------- projections


def codomain_size(n: int, m: int, projection: str) -> int:
    if projection == "corner":
        d = 1
    elif projection in ("first_row", "last_column"):
        d = n - 1
    elif projection == "full":
        d = n * (n - 1) // 2
    else:
        raise ValueError(f"unknown projection {projection!r}; choose from {PROJECTIONS}")
    return m**d


def encode(X: np.ndarray, projection: str, m: int) -> np.ndarray:
    """Mixed-radix code of a projection of a (R, n, n) batch of states.

    Matches the indexing of :meth:`trimix.exact.DistVector.project`.
    """
    n = X.shape[-1]
    if projection == "corner":
        cols = X[:, 0, n - 1][:, None]
    elif projection == "first_row":
        cols = X[:, 0, 1:]
    elif projection == "last_column":
        cols = X[:, : n - 1, n - 1]
    elif projection == "full":
        iu = np.triu_indices(n, 1)
        cols = X[:, iu[0], iu[1]]
    else:
        raise ValueError(f"unknown projection {projection!r}")
    return cols.astype(np.int64) @ (m ** np.arange(cols.shape[1], dtype=np.int64))


@dataclass
class EmpiricalDist:
    """Replica counts over a finite codomain."""

    counts: np.ndarray
    replicas: int = field(default=-1)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.replicas < 0:
            self.replicas = int(self.counts.sum())
        if int(self.counts.sum()) != self.replicas:
            raise ValueError("counts do not sum to the replica count")

    @property
    def cells(self) -> int:
        return self.counts.size

    @property
    def probs(self) -> np.ndarray:
        return self.counts / self.replicas

    def tv_to_uniform(self) -> float:
        return 0.5 * float(np.abs(self.probs - 1.0 / self.cells).sum())

    def tv_to(self, p: np.ndarray) -> float:
        return 0.5 * float(np.abs(self.probs - np.asarray(p)).sum())

    def bootstrap_se(self, rng: np.random.Generator, resamples: int = BOOTSTRAP_RESAMPLES) -> float:
        """Bootstrap standard error of the plug-in TV to uniform."""
        draws = rng.multinomial(self.replicas, self.probs, size=resamples) / self.replicas
        tvs = 0.5 * np.abs(draws - 1.0 / self.cells).sum(axis=1)
        return float(tvs.std(ddof=1))

    def bias_scale(self) -> float:
        """Order of the plug-in estimator's upward bias, ``sqrt(cells / replicas)``."""
        return math.sqrt(self.cells / self.replicas)

    def merge(self, other: "EmpiricalDist") -> "EmpiricalDist":
        return EmpiricalDist(self.counts + other.counts, self.replicas + other.replicas)


def _advance(bc: BatchChain, variant: str, dt: float, rng: np.random.Generator):
    if variant == DISCRETE:
        bc.step_discrete(rng, int(round(dt)))
    else:
        bc.advance_continuous(dt, rng)


def mc_projection_series(config: ChainConfig, projection: str, times: Sequence[float], replicas: int,
                         threads: int | None = 1, tag: int = _TAG_PROJ) -> list[EmpiricalDist]:
    """Empirical projected laws at sorted ``times`` (same replicas followed through time)."""
    n, m = config.n, config.m
    cells = codomain_size(n, m, projection)
    if cells > ENUMERATION_CAP:
        raise SizeCapError(f"{projection} codomain has {cells} cells, cap is {ENUMERATION_CAP}")
    times = [float(t) for t in times]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < 0):
        raise ValueError("times must be sorted and nonnegative")
    if config.variant == DISCRETE and any(t != int(t) for t in times):
        raise ValueError("discrete times must be integers")
    start = config.start_state()

    def block(b: int, size: int) -> np.ndarray:
        rng = _stream(config.seed, tag, b)
        bc = BatchChain(n, m, size, start)
        out = np.zeros((len(times), cells), dtype=np.int64)
        now = 0.0
        for j, t in enumerate(times):
            _advance(bc, config.variant, t - now, rng)
            now = t
            out[j] = np.bincount(encode(bc.X, projection, m), minlength=cells)
        return out

    counts = farm(block, replicas, threads)
    return [EmpiricalDist(c, replicas) for c in counts]


def mc_projection_tv(config: ChainConfig, projection: str, t: float, replicas: int,
                     threads: int | None = 1) -> tuple[float, float]:
    """Plug-in TV of a projection to uniform, with bootstrap SE.

    The estimate is biased upward by roughly ``sqrt(cells / replicas)``; the
    projected TV is itself a lower bound on the full ``d_n(t)``.
    """
    emp = mc_projection_series(config, projection, [t], replicas, threads)[0]
    return emp.tv_to_uniform(), emp.bootstrap_se(_stream(config.seed, _TAG_BOOT))


def mc_tv_series(config: ChainConfig, projection: str, times: Sequence[float], replicas: int,
                 threads: int | None = 1) -> list[tuple[float, float]]:
    emps = mc_projection_series(config, projection, times, replicas, threads)
    return [(e.tv_to_uniform(), e.bootstrap_se(_stream(config.seed, _TAG_BOOT, j))) for j, e in enumerate(emps)]


def exact_projected_law(n: int, m: int, t: float, projection: str, variant: str = DISCRETE) -> np.ndarray:
    if variant == DISCRETE:
        d = distribution_at(n, m, int(t))
    else:
        d, _ = continuous_distribution(n, m, t)
    return d.project(projection)


def exact_projected_tv(n: int, m: int, t: float, projection: str, variant: str = DISCRETE) -> float:
    p = exact_projected_law(n, m, t, projection, variant)
    return 0.5 * float(np.abs(p - 1.0 / p.size).sum())


# ---------------------------------------------------------------- tail checks


@dataclass
class ExponRow:
    k: int
    upper_exact: float  # P(sum > 2k)
    upper_bound: float  # (2/e)^k
    lower_exact: float  # P(sum < k/2)
    lower_bound: float  # (6/7)^k
    upper_mc: float = math.nan
    lower_mc: float = math.nan
    trials: int = 0

    @property
    def ok(self) -> bool:
        return self.upper_exact <= self.upper_bound and self.lower_exact <= self.lower_bound


def expon_tail_check(k_values: Iterable[int], trials: int = 0, seed: int = 0) -> list[ExponRow]:
    """Tails of a sum of ``k`` mean-one exponentials against ``(2/e)^k`` and ``(6/7)^k``.

    Exact values come from the Gamma(k, 1) distribution; with ``trials > 0``
    a direct Monte Carlo frequency is reported beside them.
    """
    rows = []
    for k in k_values:
        k = int(k)
        if k < 1:
            raise ValueError("k must be >= 1")
        row = ExponRow(
            k,
            float(stats.gamma.sf(2 * k, k)),
            (2.0 / math.e) ** k,
            float(stats.gamma.cdf(k / 2.0, k)),
            (6.0 / 7.0) ** k,
        )
        if trials:
            s = _stream(seed, _TAG_EXPON, k).exponential(size=(trials, k)).sum(axis=1)
            row.upper_mc = float(np.mean(s > 2 * k))
            row.lower_mc = float(np.mean(s < k / 2.0))
            row.trials = trials
        rows.append(row)
    return rows


@dataclass
class TailRow:
    """Empirical ``P(event)`` against a reference value."""

    label: str
    param: float
    freq: float
    se: float
    bound: float
    samples: int

    @property
    def ok(self) -> bool:
        """Frequency within three standard errors of the bound."""
        return self.freq <= self.bound + 3.0 * self.se


def _freq_row(label, param, hits: int, total: int, bound: float) -> TailRow:
    p = hits / total if total else math.nan
    se = math.sqrt(p * (1 - p) / total) if total else math.nan
    return TailRow(label, float(param), p, se, float(bound), total)


def hitting_tail(n: int, m: int, c_values: Sequence[float], replicas: int, seed: int = 0) -> list[TailRow]:
    """``P(T_2 > n - 1 + c)`` for ``y = e_n`` against ``e^{-c}``."""
    if n < 3:
        raise ValueError("need n >= 3")
    horizon = n - 1 + max(c_values)
    y = ResidueVector.basis(n, n, m)
    T = np.empty(replicas)
    for r in range(replicas):
        cfg = ChainConfig(n, m, horizon, seed=seed, replica=r)
        log = generate_log(cfg)
        tr = column_trace(log, y, min_row=2).row(2)
        nz = np.nonzero(tr.values)[0]
        T[r] = tr.times[nz[0]] if nz.size else math.inf
    return [_freq_row("T2", c, int(np.sum(T > n - 1 + c)), replicas, math.exp(-c)) for c in c_values]


def _interval_lengths(n: int, m: int, horizon: float, replicas: int, seed: int, y=None):
    y = ResidueVector.basis(n, n, m) if y is None else y
    zero, nonzero = [], []
    for r in range(replicas):
        log = generate_log(ChainConfig(n, m, horizon, seed=seed, replica=r))
        tr = column_trace(log, y, min_row=2).row(2)
        for rec in detect_intervals(tr):
            (zero if rec.kind == "y-zero" else nonzero).append((rec.length, rec.censored))
    return zero, nonzero


def zero_interval_tail(n: int, m: int, k_values: Sequence[float], replicas: int, horizon: float = 200.0,
                       seed: int = 0) -> list[TailRow]:
    """Pooled ``P(zero-interval length > 13k)`` against ``e^{-k}``.

    A censored interval counts as exceeding only if it already does.
    """
    zero, _ = _interval_lengths(n, m, horizon, replicas, seed)
    lens = np.array([ln for ln, _ in zero])
    return [_freq_row("zero>13k", k, int(np.sum(lens > 13 * k)), len(lens), math.exp(-k)) for k in k_values]


def nonzero_interval_short(n: int, m: int, k_values: Sequence[float], replicas: int, horizon: float = 200.0,
                           seed: int = 0, reference: str = "coupling") -> list[TailRow]:
    """Pooled ``P(nonzero-interval length <= k)`` over uncensored intervals.

    ``reference='coupling'`` compares with ``1 - e^{-k}``, the law of the
    wait for the next row-3 ring that any such interval must outlast;
    ``'literal'`` compares with ``e^{-k}``.
    """
    _, nonzero = _interval_lengths(n, m, horizon, replicas, seed)
    lens = np.array([ln for ln, c in nonzero if not c])
    ref = (lambda k: 1 - math.exp(-k)) if reference == "coupling" else (lambda k: math.exp(-k))
    return [_freq_row(f"nonzero<=k/{reference}", k, int(np.sum(lens <= k)), len(lens), ref(k)) for k in k_values]


def column_max_tail(n: int, x: float, k: int, D: float, replicas: int, seed: int = 0) -> TailRow:
    """``P(max_{t<=x, i<=k} |Z_t(n-i)| > (x log D)^{k/2})`` for the integer column, against ``2k/D``."""
    if not 1 <= k <= n - 2:
        raise ValueError("need 1 <= k <= n - 2")
    thr = (x * math.log(D)) ** (k / 2.0)
    hits = 0
    for r in range(replicas):
        col = column_over_Z(ChainConfig(n, 2, x, seed=seed, replica=r))
        hits += col.max_abs(x, k) > thr
    return _freq_row(f"colmax(k={k},D={D})", x, hits, replicas, 2.0 * k / D)


def good_interval_probe(n: int, m: int, y, replicas: int, schedule: Schedule | None = None,
                        seed: int = 0) -> TailRow:
    """Frequency of ``M_y^t <= t/(10L)`` at the schedule horizon (directional check only)."""
    sch = schedule or schedule_eval(n, m)
    y = y if isinstance(y, ResidueVector) else ResidueVector(y, m)
    T = sch.t_nm
    L = sch.interval_length
    hits = 0
    for r in range(replicas):
        traj = simulate(ChainConfig(n, m, T, seed=seed, replica=r))
        rep = good_intervals(track_Z(traj, y, sch.I), sch)
        hits += rep.M(T) <= T / (10 * L)
    return _freq_row("M<=t/10L", T, hits, replicas, math.nan)


# ---------------------------------------------------------------- induction


@dataclass
class InductionReport:
    n: int
    m: int
    t: float
    lhs: float
    d_prev: float
    q_mean: float
    q_se: float
    replicas: int
    truncation: float

    @property
    def rhs(self) -> float:
        return self.d_prev + self.q_mean

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + 3.0 * self.q_se + self.truncation

    def to_dict(self) -> dict:
        return {**asdict(self), "rhs": self.rhs, "slack": self.slack, "ok": self.ok}


def induction_probe(n: int, m: int, t: float, replicas: int, seed: int = 0) -> InductionReport:
    """Probe ``d_n(t) <= d_{n-1}(t) + E || q_t - u ||`` for the continuous chain.

    ``d_n`` and ``d_{n-1}`` are exact (uniformization). ``q_t`` is the law of
    the first row given the rows below it, computed exactly for each
    simulated trajectory from the row-2 values at the row-2 ring times.
    """
    if n < 3:
        raise ValueError("need n >= 3")
    for nn in (n, n - 1):
        if group_order(nn, m) > ENUMERATION_CAP:
            raise SizeCapError(f"|G_{nn}({m})| exceeds the enumeration cap")
    lhs, e1 = continuous_tv(n, m, t)
    d_prev, e2 = continuous_tv(n - 1, m, t)
    cache: dict[tuple, float] = {}
    vals = np.empty(replicas)
    for r in range(replicas):
        cfg = ChainConfig(n, m, t, seed=seed, replica=r)
        log = generate_log(cfg)
        ws = []
        a = cfg.start_state().entries.copy()
        for row, sg in zip(log.rows.tolist(), log.signs.tolist()):
            if row == 2:
                ws.append(tuple(a[1].tolist()))
            else:
                a[row - 2] = (a[row - 2] + sg * a[row - 1]) % m
        key = tuple(sorted(ws))  # the conditional law ignores ring order
        if key not in cache:
            cache[key] = conditional_exact_tv(ConditionalSpectrum(np.array(ws).reshape(-1, n), n, m))
        vals[r] = cache[key]
    se = float(vals.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.nan
    return InductionReport(n, m, float(t), lhs, d_prev, float(vals.mean()), se, replicas, e1 + e2)


# ---------------------------------------------------------------- scaling


@dataclass
class ScalingRow:
    n: int
    m: int
    t_mix: float
    se: float
    replicas: int
    seed: int
    method: str  # "exact" or "mc:<projection>"
    bracket: tuple[float, float] | None = None
    partial: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ScalingFit:
    axis: str  # "m" (n fixed) or "n" (m fixed)
    fixed: int
    exponent: float
    stderr: float
    ci95: tuple[float, float]
    points: int


@dataclass
class ScalingResult:
    rows: list[ScalingRow]
    fits: list[ScalingFit]
    partial: bool
    se_method: str = "exact rows: none; MC rows: half-width of the bisection bracket"


def _mc_tmix(n: int, m: int, eps: float, projection: str, replicas: int, seed: int, budget: list[int],
             threads) -> tuple[float, tuple[float, float], bool]:
    """Bisection over integer steps on the projected TV; ``budget[0]`` counts remaining probes."""
    cache: dict[int, float] = {}

    def tv(t: int) -> float | None:
        if t not in cache:
            if budget[0] <= 0:
                return None
            budget[0] -= 1
            emp = mc_projection_series(ChainConfig(n, m, t, seed=seed, variant=DISCRETE), projection, [t],
                                       replicas, threads, tag=_TAG_SCALE)[0]
            cache[t] = emp.tv_to_uniform()
        return cache[t]

    lo, hi = 0, 1
    while True:
        v = tv(hi)
        if v is None:
            return math.nan, (lo, math.inf), True
        if v <= eps:
            break
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        v = tv(mid)
        if v is None:
            return (lo + hi) / 2, (lo, hi), True
        lo, hi = (mid, hi) if v > eps else (lo, mid)
    return float(hi), (lo, hi), False


def _fit(axis: str, fixed: int, xs, ys) -> ScalingFit | None:
    pts = [(x, y) for x, y in zip(xs, ys) if y > 0 and math.isfinite(y)]
    if len({x for x, _ in pts}) < 2:
        return None
    lx, ly = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    res = stats.linregress(lx, ly)
    dof = len(pts) - 2
    half = stats.t.ppf(0.975, dof) * res.stderr if dof > 0 else math.inf
    return ScalingFit(axis, fixed, float(res.slope), float(res.stderr), (res.slope - half, res.slope + half), len(pts))


def scaling_study(grid: Sequence[tuple[int, int]], eps: float = 0.25, budget: int = 200, replicas: int = 20000,
                  projection: str = "first_row", seed: int = 0, threads: int | None = 1) -> ScalingResult:
    """Discrete-time ``t_mix(eps)`` over a grid of ``(n, m)`` plus log-log fits.

    Enumerable points are exact. Others use Monte Carlo bisection on a
    projection, which estimates the projection's mixing time, a lower bound
    for the full one. ``budget`` caps the total number of Monte Carlo probes;
    once spent, the remaining rows are flagged partial.
    """
    left = [budget]
    rows = []
    for n, m in grid:
        if group_order(n, m) <= ENUMERATION_CAP:
            rows.append(ScalingRow(n, m, float(t_mix_exact(n, m, eps)), 0.0, 0, seed, "exact"))
            continue
        tm, br, part = _mc_tmix(n, m, eps, projection, replicas, seed, left, threads)
        se = (br[1] - br[0]) / 2 if math.isfinite(br[1]) else math.inf
        rows.append(ScalingRow(n, m, tm, se, replicas, seed, f"mc:{projection}", br, part))
    fits = []
    for n in sorted({r.n for r in rows}):
        sub = [r for r in rows if r.n == n]
        f = _fit("m", n, [r.m for r in sub], [r.t_mix for r in sub])
        if f:
            fits.append(f)
    for m in sorted({r.m for r in rows}):
        sub = [r for r in rows if r.m == m]
        f = _fit("n", m, [r.n for r in sub], [r.t_mix for r in sub])
        if f:
            fits.append(f)
    return ScalingResult(rows, fits, any(r.partial for r in rows))


__all__ = [
    "Constants",
    "EmpiricalDist",
    "ScalingRow",
    "expon_tail_check",
    "induction_probe",
    "mc_projection_tv",
    "scaling_study",
    "schedule_eval",
]
