"""Parameter schedules: horizons, interval lengths, row index I and thresholds.

The universal constants that the analysis leaves unspecified live in
:class:`Constants`; everything here is plain arithmetic on them.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

PRIME = "prime"
GENERAL = "general"
_EPS = 1e-9


@dataclass(frozen=True)
class Constants:
    A: float = 1.0
    D: float = 1.0
    C: float = 1.0
    c: float = 1.0
    d: float = 1.0
    delta: float = 1.0
    K: float = 1.0
    # m/K_tilde must stay below m/2 for the Q_I threshold to mean anything
    K_tilde: float = 8.0
    r: float = 1.0
    beta: float = 1.0
    g: float = 15.0


@dataclass(frozen=True)
class Schedule:
    variant: str
    n: int
    m: float
    J: float
    I: int
    t_nm: float
    L: float | None = None  # prime variant
    L1: float | None = None  # general variant, W_I intervals
    L2: float | None = None  # Q_I intervals
    L3: float | None = None  # P_2 intervals
    x: float = 0.0  # W_I threshold
    w: float = 0.0  # Q_I threshold
    p2_threshold: float = 0.0
    g: float = 15.0
    t0: float = 0.0
    constants: Constants = field(default_factory=Constants)

    @property
    def x_prob(self) -> float:
        """Fraction of time ``1/10 + 9/(10 g)`` used when counting good intervals."""
        return 0.1 + 0.9 / self.g

    @property
    def interval_length(self) -> float:
        return self.L if self.variant == PRIME else self.L1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x_prob"] = self.x_prob
        return d


def horizon(n: int, m: float, variant: str, k: Constants) -> float:
    """Continuous-time horizon ``t_{n,m}``."""
    lm = math.log(m)
    if variant == PRIME:
        growth = n * math.exp(9.0 * math.sqrt(lm))
    else:
        growth = n * math.exp(k.C * lm ** (2.0 / 3.0))
    return k.D * (m * m * math.log(n) + growth) + k.c * m * m * math.log(math.log(n))


def schedule_eval(n: int, m: float, constants: Constants | None = None, variant: str = GENERAL) -> Schedule:
    if n < 2 or m < 2:
        raise ValueError("need n >= 2 and m >= 2")
    k = constants or Constants()
    lm = math.log(m)
    common = dict(
        n=n,
        m=m,
        t_nm=horizon(n, m, variant, k),
        w=m / k.K_tilde,
        p2_threshold=math.sqrt(lm) / 2.0,
        g=k.g,
        t0=float(n),
        constants=k,
    )
    if variant == PRIME:
        J = math.sqrt(lm)
        I = min(n, 2 + int(math.floor(J + _EPS)))
        return Schedule(PRIME, J=J, I=I, L=k.d * m ** (4.0 / J), x=m / 8.0, **common)
    if variant == GENERAL:
        J = max(1, int(math.floor(lm ** (1.0 / 3.0) + _EPS)))
        I = min(n, 1 + J)
        D_ah = 20.0 * (J + 1)
        A_jdm = 2.0 * m ** (2.0 / J) / math.log(D_ah)
        return Schedule(
            GENERAL,
            J=float(J),
            I=I,
            L1=k.d * A_jdm,
            L2=k.d * m,
            L3=k.delta * lm,
            x=m * math.exp(-k.K * lm ** (2.0 / 3.0)),
            **common,
        )
    raise ValueError(f"unknown variant {variant!r}")
