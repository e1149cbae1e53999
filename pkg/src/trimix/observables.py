"""Processes watched along a trajectory.

The central object is the column ``Z_y^t = X_t y``. A ring of clock ``r``
with sign ``a`` changes it by ``Z(r-1) += a Z(r)``, so ``Z`` can be followed
on its own without the rest of the matrix. Its row-``i`` coordinate is
``Z_y^t(i) = X_t(i) . y``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .chain import ChainConfig, CheckReport, EventLog, Trajectory, generate_log, replay
from .modular import ElementaryMatrix, ResidueVector, UniUpperMatrix, centered_magnitude, mat_inverse, mulmod
from .schedule import Schedule

ZERO = "y-zero"
NONZERO = "y-nonzero"


def _events(log: EventLog):
    """Non-hold events as (time, row, sign) triples."""
    keep = log.signs != 0
    return zip(log.times[keep].tolist(), log.rows[keep].tolist(), log.signs[keep].tolist())


@dataclass
class ColumnTrace:
    """Piecewise-constant vector process; ``values[k]`` holds on ``[times[k], times[k+1])``."""

    times: np.ndarray
    values: np.ndarray  # (K, n)
    horizon: float
    m: int | None  # None for integer (unreduced) arithmetic

    def at(self, t: float) -> np.ndarray:
        return self.values[bisect.bisect_right(self.times, t) - 1]

    def row(self, i: int) -> "ZTrace":
        vals = np.asarray([v[i - 1] for v in self.values])
        keep = np.concatenate(([True], vals[1:] != vals[:-1]))
        return ZTrace(None, i, np.asarray(self.times)[keep], vals[keep], self.horizon, self.m)


@dataclass
class ZTrace:
    """Scalar piecewise-constant trace ``Z_y^t(i)`` with its change times.

    ``times[0] = 0``; ``values[k]`` is the value on ``[times[k], times[k+1])``.
    """

    y: ResidueVector | None
    i: int
    times: np.ndarray
    values: np.ndarray
    horizon: float
    m: int | None

    def value_at(self, t: float):
        return self.values[bisect.bisect_right(self.times, t) - 1]

    def value_before(self, t: float):
        """Left limit at ``t``."""
        return self.values[max(bisect.bisect_left(self.times, t) - 1, 0)]

    def segments(self, a: float = 0.0, b: float | None = None):
        """(start, end, value) pieces covering ``[a, b]``."""
        b = self.horizon if b is None else b
        T = list(self.times) + [self.horizon]
        for k, v in enumerate(self.values):
            lo, hi = max(T[k], a), min(T[k + 1], b)
            if hi > lo:
                yield lo, hi, v

    def nonzero_measure(self, a: float, b: float) -> float:
        return sum(hi - lo for lo, hi, v in self.segments(a, b) if v != 0)


def column_trace(log: EventLog, y, start: UniUpperMatrix | None = None, min_row: int = 1) -> ColumnTrace:
    """Trace of ``Z_y = X y`` driven by ``log``.

    Only events that can move rows ``>= min_row`` are recorded as change
    times; the vector below ``min_row`` is then stale and should not be read.
    """
    cfg = log.config
    m = cfg.m
    start = start or cfg.start_state()
    z = [int(v) for v in start.apply(y.coords if isinstance(y, ResidueVector) else y)]
    times, values = [0.0], [tuple(z)]
    for t, r, s in _events(log):
        if r - 1 < min_row:
            continue
        new = (z[r - 2] + s * z[r - 1]) % m
        if new != z[r - 2]:
            z[r - 2] = new
            times.append(float(t))
            values.append(tuple(z))
    return ColumnTrace(np.asarray(times), np.asarray(values, dtype=np.int64), float(cfg.horizon), m)


def _as_frequency(y, n: int, m: int) -> ResidueVector:
    if not isinstance(y, ResidueVector):
        y = ResidueVector(y, m)
    if len(y) != n or y.modulus != m:
        raise ValueError("y does not match the chain dimensions")
    if y.coords[0] != 0:
        raise ValueError("observable vector must have first coordinate 0")
    return y


def track_Z(traj: Trajectory, y, i: int) -> ZTrace:
    """Exact trace of ``Z_y^t(i)`` over ``[0, horizon]``."""
    cfg = traj.config
    y = _as_frequency(y, cfg.n, cfg.m)
    if not 1 <= i <= cfg.n:
        raise ValueError(f"row {i} outside 1..{cfg.n}")
    tr = column_trace(traj.log, y, traj.start, min_row=i).row(i)
    tr.y = y
    return tr


def hitting_time(traj: Trajectory, y, i: int) -> float:
    """First ``t`` with ``Z_y^t(i) != 0``; ``inf`` if it never happens by the horizon."""
    tr = track_Z(traj, y, i)
    nz = np.nonzero(tr.values)[0]
    return float(tr.times[nz[0]]) if nz.size else math.inf


@dataclass(frozen=True)
class IntervalRecord:
    kind: str
    start: float
    end: float
    censored: bool = False  # cut off by the horizon

    @property
    def length(self) -> float:
        return self.end - self.start


def detect_intervals(trace: ZTrace) -> list[IntervalRecord]:
    """Alternating y-non-zero / y-zero intervals tiling ``[T_2, horizon]``."""
    out: list[IntervalRecord] = []
    cur_kind, cur_start = None, None
    for t, v in zip(trace.times.tolist(), trace.values.tolist()):
        kind = NONZERO if v != 0 else ZERO
        if cur_kind is None:
            if kind == NONZERO:
                cur_kind, cur_start = kind, t
            continue
        if kind != cur_kind:
            out.append(IntervalRecord(cur_kind, cur_start, t))
            cur_kind, cur_start = kind, t
    if cur_kind is not None:
        out.append(IntervalRecord(cur_kind, cur_start, trace.horizon, censored=True))
    return out


@dataclass
class GoodIntervalReport:
    L: float
    g: float
    t0: float
    starts: np.ndarray
    measures: np.ndarray  # nonzero time inside each window
    flags: np.ndarray
    x_prob: float = field(init=False)

    def __post_init__(self):
        self.x_prob = 0.1 + 0.9 / self.g

    @property
    def counts(self) -> np.ndarray:
        """``M_y`` after each window."""
        return np.cumsum(self.flags)

    def M(self, t: float) -> int:
        """Number of good windows completed by time ``t``."""
        done = self.starts + self.L <= t
        return int(self.flags[done].sum())

    @property
    def fraction(self) -> float:
        return float(self.flags.mean()) if len(self.flags) else math.nan


def good_intervals(trace: ZTrace, schedule: Schedule | None = None, *, L: float | None = None,
                   g: float | None = None, t0: float | None = None) -> GoodIntervalReport:
    """Flag windows ``[t0 + jL, t0 + (j+1)L]`` where the trace is nonzero at least ``L/g`` of the time."""
    if schedule is not None:
        L = schedule.interval_length if L is None else L
        g = schedule.g if g is None else g
        t0 = schedule.t0 if t0 is None else t0
    g = 15.0 if g is None else g
    if L is None or t0 is None:
        raise ValueError("need an interval length and a start time (or a schedule)")
    if trace.horizon < t0 + 2 * L:
        raise ValueError(f"horizon {trace.horizon} shorter than t0 + 2L = {t0 + 2 * L}")
    J = int((trace.horizon - t0) // L)
    starts = t0 + L * np.arange(J)
    meas = np.array([trace.nonzero_measure(s, s + L) for s in starts])
    return GoodIntervalReport(L, g, t0, starts, meas, meas >= L / g)


def ring_counter_A(traj: Trajectory, y, x: float, t: float, when: str = "pre") -> int:
    """Row-2 rings at times ``s <= t`` with ``|Z_y^s(2)| > x``.

    ``when='pre'`` reads ``Z`` just before the ring, ``'post'`` just after.
    A row-2 ring only touches row 1, so both readings agree.
    """
    cfg = traj.config
    if not 0 <= x <= cfg.m // 2:
        raise ValueError(f"threshold {x} outside [0, m/2]")
    tr = track_Z(traj, y, 2)
    read = tr.value_before if when == "pre" else tr.value_at
    rings = traj.log.ring_times(2)
    rings = rings[rings <= t]
    return sum(1 for s in rings.tolist() if centered_magnitude(int(read(s)), cfg.m) > x)


def corner_process(traj: Trajectory) -> ZTrace:
    """Trace of the corner entry ``X_t(1, n)``."""
    n = traj.config.n
    return column_trace(traj.log, ResidueVector.basis(n, n, traj.config.m), traj.start).row(1)


def east_column(traj: Trajectory) -> ColumnTrace:
    """Trace of the last column ``X_t e_n`` (the East-model projection)."""
    n = traj.config.n
    return column_trace(traj.log, ResidueVector.basis(n, n, traj.config.m), traj.start)


@dataclass
class IntegerColumn:
    """Last column evolved over Z (no reduction), from ``(0, ..., 0, 1)``."""

    times: np.ndarray
    values: list[tuple[int, ...]]
    n: int

    def max_abs(self, x: float, k: int) -> int:
        """``max_{t <= x, 1 <= i <= k} |Z_t(n - i)|``."""
        stop = bisect.bisect_right(self.times, x)
        return max(abs(v[self.n - 1 - i]) for v in self.values[:stop] for i in range(1, k + 1))


def column_over_Z(source: ChainConfig | EventLog, horizon: float | None = None) -> IntegerColumn:
    log = generate_log(source) if isinstance(source, ChainConfig) else source
    n = log.config.n
    if horizon is None:
        horizon = float(log.config.horizon)
    z = [0] * (n - 1) + [1]
    times, values = [0.0], [tuple(z)]
    for t, r, s in _events(log):
        if t > horizon:
            break
        z[r - 2] += s * z[r - 1]  # python ints: exact at any size
        times.append(float(t))
        values.append(tuple(z))
    return IntegerColumn(np.asarray(times), values, n)


def theta_k(samples, k: float) -> float:
    """Largest mass any set of at most ``k`` points carries.

    ``samples`` is a vector of counts or probabilities over Z/mZ.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    p = np.asarray(getattr(samples, "counts", samples), dtype=float)
    p = p / p.sum()
    kk = min(int(math.floor(k)), p.size)
    return float(np.sort(p)[::-1][:kk].sum())


def _zero_block_ok(a: np.ndarray, I: int) -> bool:
    return not a[: I - 1, I - 1:].any()


def backwards_identity_check(traj: Trajectory, y, I: int, query_times: Sequence[float] | None = None) -> CheckReport:
    """Verify the decomposition of ``Z_y^t`` along the backwards process.

    With ``E = E(I-1, I)``, ``s_k`` the rings of clock ``I`` at which
    ``Z_y(I) != 0`` and ``a_k`` their signs, checks

        Z^t = Y_{0,t} Z^0 + sum_{s_k <= t} a_k Y_{s_k,t} E Y_{0,s_k} Z^0

    at every query time and every ``s_k``, where ``Y_{t',t}`` is the ordered
    product of the other clocks' updates in ``(t', t]``, formed as
    ``Y_{T-t}^{-1} Y_{T-t'}`` from the backwards process ``Y``. Also checks
    the one-step recursion ``Z^{s_{l+1}} = (I + a E) Y_{s_l, s_{l+1}} Z^{s_l}``
    and that every backwards product vanishes on the
    ``[1, I-1] x [I, n]`` block.
    """
    cfg = traj.config
    n, m = cfg.n, cfg.m
    y = _as_frequency(y, n, m)
    if not 2 <= I <= n:
        raise ValueError(f"I={I} outside 2..{n}")
    rep = CheckReport(f"backwards-identity(I={I})")
    Z0 = traj.start.apply(y.coords)

    events = list(_events(traj.log))
    other = [(t, r, s) for t, r, s in events if r != I]
    other_times = [t for t, _, _ in other]

    # suffix products S_j = W_L ... W_{j+1}; the backwards process is Y_u = S_{L(T-u)}
    L = len(other)
    S = [None] * (L + 1)
    acc = np.eye(n, dtype=np.int64)
    S[L] = acc.copy()
    for j in range(L - 1, -1, -1):
        _, r, s = other[j]
        acc = acc.copy()
        acc[:, r - 1] = (acc[:, r - 1] + s * acc[:, r - 2]) % m  # right-multiply by I + s E(r-1, r)
        S[j] = acc
        rep.checks += 1
        if not _zero_block_ok(acc, I):
            rep.fail(kind="zero-block", index=j, matrix=acc.tolist())
    S_inv: dict[int, np.ndarray] = {}

    def inv(j: int) -> np.ndarray:
        if j not in S_inv:
            S_inv[j] = mat_inverse(UniUpperMatrix(S[j], m, _trusted=True)).entries
        return S_inv[j]

    def count(t: float) -> int:
        return bisect.bisect_right(other_times, t)

    def Y(t1: float, t2: float) -> np.ndarray:
        """``Y_{t1,t2}`` via the backwards process."""
        out = mulmod(inv(count(t2)), S[count(t1)], m)
        rep.checks += 1
        if not _zero_block_ok(out, I):
            rep.fail(kind="zero-block", t1=t1, t2=t2, matrix=out.tolist())
        return out

    # qualifying rings of clock I, found on the directly evolved column
    quals: list[tuple[float, int]] = []
    z = [int(v) for v in Z0]
    for t, r, s in events:
        if r == I and z[I - 1] % m:
            quals.append((t, s))
        z[r - 2] = (z[r - 2] + s * z[r - 1]) % m

    qt = list(traj.query_times) if query_times is None else list(query_times)
    checks = sorted(set(qt) | {t for t, _ in quals})
    actual = dict(zip(checks, (X.apply(y.coords) for X in replay(traj.log, checks, traj.start))))

    base = mulmod(S[0], Z0, m)  # Y_T Z^0
    inner = []  # S_{L(s_k)} a_k E Y_{0,s_k} Z^0, so that Y_{s_k,t} term = S_{L(t)}^{-1} inner_k
    for s_k, a_k in quals:
        v = mulmod(Y(0.0, s_k), Z0, m)
        inner.append(mulmod(S[count(s_k)], ElementaryMatrix(I - 1, I, a_k).apply(v, m), m))

    for t in checks:
        tot = base.copy()
        for (s_k, _), vec in zip(quals, inner):
            if s_k <= t:
                tot = (tot + vec) % m
        rhs = mulmod(inv(count(t)), tot, m)
        rep.checks += 1
        if not np.array_equal(rhs, actual[t]):
            rep.fail(kind="decomposition", time=t, expected=actual[t].tolist(), got=rhs.tolist())

    for (s0, _), (s1, a1) in zip(quals, quals[1:]):
        step = mulmod(Y(s0, s1), actual[s0], m)
        step = (step + ElementaryMatrix(I - 1, I, a1).apply(step, m)) % m
        rep.checks += 1
        if not np.array_equal(step, actual[s1]):
            rep.fail(kind="recursion", time=s1, expected=actual[s1].tolist(), got=step.tolist())
    return rep
