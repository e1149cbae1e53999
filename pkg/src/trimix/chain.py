"""Discrete lazy chain and continuous Poisson-clock chain on G_n(m).

Discrete: each step picks a row ``i`` in ``2..n`` uniformly, then adds it to
row ``i-1`` w.p. 1/4, subtracts it w.p. 1/4 and holds otherwise.

Continuous: every row ``i`` in ``2..n`` carries a rate-1 Poisson clock; a ring
adds or subtracts row ``i`` to row ``i-1`` with probability 1/2 each. We
simulate the superposition (one rate ``n-1`` clock with uniform row labels).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .modular import UniUpperMatrix, group_order

DISCRETE = "discrete"
CONTINUOUS = "continuous"
VARIANTS = (DISCRETE, CONTINUOUS)
LOG_SCHEMA_VERSION = 1


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for the stream named by ``(seed, *keys)``.

    Replica ``r`` of a run with seed ``s`` uses ``stream(s, r)``; streams for
    distinct key tuples are statistically independent.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


@dataclass(frozen=True)
class ChainConfig:
    n: int
    m: int
    horizon: float
    seed: int = 0
    variant: str = CONTINUOUS
    replica: int = 0
    start: tuple | None = None  # free above-diagonal entries; None = identity

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if self.horizon < 0:
            raise ValueError(f"horizon must be >= 0, got {self.horizon}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.variant == DISCRETE and int(self.horizon) != self.horizon:
            raise ValueError("discrete horizon must be an integer")
        if self.start is not None:
            object.__setattr__(self, "start", tuple(int(v) for v in self.start))
            if len(self.start) != self.n * (self.n - 1) // 2:
                raise ValueError("start must list n(n-1)/2 free entries")

    def start_state(self) -> UniUpperMatrix:
        if self.start is None:
            return UniUpperMatrix.identity(self.n, self.m)
        return UniUpperMatrix.from_free_entries(self.start, self.n, self.m)

    def rng(self) -> np.random.Generator:
        return stream(self.seed, self.replica)


@dataclass(frozen=True)
class Event:
    time: float  # step index for the discrete variant
    row: int
    sign: int  # 0 = hold (discrete only)


@dataclass
class EventLog:
    """Time-ordered clock rings. Stored column-wise for speed."""

    config: ChainConfig
    times: np.ndarray
    rows: np.ndarray
    signs: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64 if self.config.variant == DISCRETE else float)
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.signs = np.asarray(self.signs, dtype=np.int64)
        if not (len(self.times) == len(self.rows) == len(self.signs)):
            raise ValueError("ragged event log")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("event times must be strictly increasing")
        if self.config.variant == CONTINUOUS and np.any(self.signs == 0):
            raise ValueError("hold events only exist in the discrete variant")

    def __len__(self):
        return len(self.times)

    @property
    def events(self) -> list[Event]:
        return [Event(t.item(), int(r), int(s)) for t, r, s in zip(self.times, self.rows, self.signs)]

    def ring_times(self, row: int) -> np.ndarray:
        """Times at which clock ``row`` rang (holds excluded)."""
        return self.times[(self.rows == row) & (self.signs != 0)]

    def to_jsonl(self) -> str:
        header = {"schema_version": LOG_SCHEMA_VERSION, "config": asdict(self.config)}
        key = "step" if self.config.variant == DISCRETE else "t"
        lines = [json.dumps(header, sort_keys=True)]
        for t, r, s in zip(self.times.tolist(), self.rows.tolist(), self.signs.tolist()):
            lines.append(json.dumps({key: t, "row": r, "sign": s}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EventLog":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = json.loads(lines[0])
        cfg = dict(header["config"])
        if cfg.get("start") is not None:
            cfg["start"] = tuple(cfg["start"])
        config = ChainConfig(**cfg)
        recs = [json.loads(ln) for ln in lines[1:]]
        key = "step" if config.variant == DISCRETE else "t"
        return cls(
            config,
            [r[key] for r in recs],
            [r["row"] for r in recs],
            [r["sign"] for r in recs],
        )


@dataclass
class Trajectory:
    query_times: np.ndarray
    states: list[UniUpperMatrix]
    log: EventLog
    start: UniUpperMatrix = field(repr=False, default=None)

    def __post_init__(self):
        if self.start is None:
            self.start = self.log.config.start_state()

    @property
    def config(self) -> ChainConfig:
        return self.log.config

    def state_at(self, t: float) -> UniUpperMatrix:
        return replay(self.log, [t], self.start)[0]


@dataclass
class CheckReport:
    """Outcome of an exact identity check over one or many trajectories."""

    name: str
    ok: bool = True
    checks: int = 0
    first_mismatch: dict | None = None

    def fail(self, **where):
        if self.ok:
            self.ok = False
            self.first_mismatch = where

    def merge(self, other: "CheckReport") -> "CheckReport":
        out = CheckReport(self.name, self.ok and other.ok, self.checks + other.checks, self.first_mismatch)
        if out.first_mismatch is None and not other.ok:
            out.first_mismatch = other.first_mismatch
        return out


def _apply_rowop(a: np.ndarray, row: int, sign: int, m: int):
    # in place on a raw (n, n) residue array
    a[row - 2] = (a[row - 2] + sign * a[row - 1]) % m


def replay(log: EventLog, query_times: Iterable[float], start: UniUpperMatrix | None = None) -> list[UniUpperMatrix]:
    """States at ``query_times`` (sorted), counting events with time <= t."""
    cfg = log.config
    a = (start or cfg.start_state()).entries.copy()
    out = []
    k = 0
    N = len(log)
    times, rows, signs = log.times, log.rows, log.signs
    for t in query_times:
        while k < N and times[k] <= t:
            if signs[k]:
                _apply_rowop(a, int(rows[k]), int(signs[k]), cfg.m)
            k += 1
        out.append(UniUpperMatrix(a.copy(), cfg.m, _trusted=True))
    return out


def step_discrete(state: UniUpperMatrix, rng: np.random.Generator, step: int = 1) -> tuple[UniUpperMatrix, Event]:
    """One lazy step. Returns the new state and the event (sign 0 = hold)."""
    row = int(rng.integers(2, state.n + 1))
    sign = (1, -1, 0, 0)[int(rng.integers(0, 4))]
    if sign:
        state = state.row_add(row, sign)
    return state, Event(step, row, sign)


def _discrete_events(n: int, steps: int, rng: np.random.Generator):
    rows = rng.integers(2, n + 1, size=steps)
    signs = np.array([1, -1, 0, 0], dtype=np.int64)[rng.integers(0, 4, size=steps)]
    return np.arange(1, steps + 1, dtype=np.int64), rows, signs


def _continuous_events(n: int, horizon: float, rng: np.random.Generator):
    rate = n - 1
    chunk = int(rate * horizon + 4 * np.sqrt(rate * horizon + 1) + 16)
    times: list[np.ndarray] = []
    t = 0.0
    while True:
        dts = rng.exponential(1.0 / rate, size=chunk)
        cum = t + np.cumsum(dts)
        if np.any(np.diff(np.concatenate(([t], cum))) <= 0):
            # floating-point collision: redraw colliding gaps one by one
            cum = np.empty(chunk)
            cur = t
            for q in range(chunk):
                nxt = cur + dts[q]
                while nxt <= cur:
                    nxt = cur + rng.exponential(1.0 / rate)
                cum[q] = cur = nxt
        stop = np.searchsorted(cum, horizon, side="right")
        times.append(cum[:stop])
        if stop < chunk:
            break
        t = cum[-1]
    times_arr = np.concatenate(times) if times else np.empty(0)
    k = len(times_arr)
    rows = rng.integers(2, n + 1, size=k)
    signs = 2 * rng.integers(0, 2, size=k) - 1
    return times_arr, rows, signs


def generate_log(config: ChainConfig) -> EventLog:
    rng = config.rng()
    if config.variant == DISCRETE:
        t, r, s = _discrete_events(config.n, int(config.horizon), rng)
    else:
        t, r, s = _continuous_events(config.n, float(config.horizon), rng)
    return EventLog(config, t, r, s)


def _check_queries(config: ChainConfig, query_times) -> np.ndarray:
    if query_times is None:
        query_times = [0, config.horizon]
    q = np.asarray(query_times, dtype=float)
    if q.size and (np.any(np.diff(q) < 0) or q[0] < 0 or q[-1] > config.horizon):
        raise ValueError("query times must be sorted and lie in [0, horizon]")
    return q


def simulate(config: ChainConfig, query_times: Sequence[float] | None = None) -> Trajectory:
    """Simulate either variant and record states at ``query_times``."""
    q = _check_queries(config, query_times)
    log = generate_log(config)
    start = config.start_state()
    return Trajectory(q, replay(log, q, start), log, start)


def simulate_continuous(config: ChainConfig, query_times: Sequence[float] | None = None) -> Trajectory:
    if config.variant != CONTINUOUS:
        raise ValueError("config.variant must be 'continuous'")
    return simulate(config, query_times)


def simulate_discrete(config: ChainConfig, query_times: Sequence[float] | None = None) -> Trajectory:
    if config.variant != DISCRETE:
        raise ValueError("config.variant must be 'discrete'")
    return simulate(config, query_times)


def count_row2_rings(log: EventLog, t: float) -> int:
    """``N(t)``: number of rings of the row-2 clock at times <= t."""
    return int(np.searchsorted(log.ring_times(2), t, side="right"))


def decompose_first_row(traj: Trajectory) -> CheckReport:
    """Check ``X_t = Y_t + sum_j a_j E(1,2) Y_{t_j}`` at every query time.

    ``Y`` is the trajectory with every first-row update suppressed (so its
    first row stays at the start value), ``t_j`` are the row-2 ring times and
    ``a_j`` their signs. ``E(1,2) Y`` is the matrix whose first row is row 2
    of ``Y`` and whose other rows vanish.
    """
    log, cfg = traj.log, traj.config
    m = cfg.m
    Y = traj.start.entries.copy()
    acc = np.zeros(cfg.n, dtype=np.int64)
    rep = CheckReport("separating")
    k, N = 0, len(log)
    for q, X in zip(traj.query_times, traj.states):
        while k < N and log.times[k] <= q:
            r, s = int(log.rows[k]), int(log.signs[k])
            if s:
                if r == 2:
                    acc = (acc + s * Y[1]) % m
                else:
                    _apply_rowop(Y, r, s, m)
            k += 1
        rhs = Y.copy()
        rhs[0] = (rhs[0] + acc) % m
        rep.checks += 1
        if not np.array_equal(rhs, X.entries):
            rep.fail(time=float(q), expected=X.entries.tolist(), got=rhs.tolist())
    return rep


class BatchChain:
    """Many independent replicas advanced in lockstep, states as (R, n, n)."""

    def __init__(self, n: int, m: int, replicas: int, start: UniUpperMatrix | None = None):
        self.n, self.m, self.R = n, m, replicas
        s = (start or UniUpperMatrix.identity(n, m)).entries
        self.X = np.broadcast_to(s, (replicas, n, n)).copy()

    def _apply(self, rows: np.ndarray, signs: np.ndarray):
        X, m = self.X, self.m
        for r in range(2, self.n + 1):
            idx = np.nonzero((rows == r) & (signs != 0))[0]
            if idx.size:
                X[idx, r - 2] = (X[idx, r - 2] + signs[idx, None] * X[idx, r - 1]) % m

    def step_discrete(self, rng: np.random.Generator, steps: int = 1):
        for _ in range(steps):
            rows = rng.integers(2, self.n + 1, size=self.R)
            signs = np.array([1, -1, 0, 0], dtype=np.int64)[rng.integers(0, 4, size=self.R)]
            self._apply(rows, signs)

    def advance_continuous(self, dt: float, rng: np.random.Generator):
        """Run every replica for ``dt`` more time units."""
        if dt <= 0:
            return
        counts = rng.poisson((self.n - 1) * dt, size=self.R)
        for k in range(int(counts.max(initial=0))):
            active = counts > k
            rows = np.where(active, rng.integers(2, self.n + 1, size=self.R), 0)
            signs = 2 * rng.integers(0, 2, size=self.R) - 1
            self._apply(rows, signs)


def uniform_tv_floor(n: int, m: int) -> float:
    """TV between a point mass and uniform on G_n(m)."""
    return 1.0 - 1.0 / group_order(n, m)
