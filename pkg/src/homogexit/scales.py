"""Inductive length scales and derived exponents.

Two regimes are supported. ``paper`` enforces the small-exponent constraint
``a <= beta / (1000 d)`` and keeps every ``L_n`` as an exact Python integer;
``desk`` relaxes ``a`` so that the first few scales are simulable.
"""
from __future__ import annotations

import csv
import io
import math
import sys
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

REGIMES = ("paper", "desk")


class ScheduleError(ValueError):
    """Raised when schedule parameters violate their invariants."""


@dataclass(frozen=True)
class ScheduleParams:
    L0: int
    a: float
    beta: float = 0.5
    c0: float = 1.0
    d: int = 3
    n_max: int = 3
    regime: str = "desk"

    def validate(self) -> None:
        if not isinstance(self.L0, int) or self.L0 <= 0:
            raise ScheduleError("L0 must be a positive integer")
        if self.L0 % 5 != 0:
            raise ScheduleError(f"L0={self.L0} is not a multiple of 5")
        if not 0.0 < self.a < 0.41:
            raise ScheduleError("a must lie in (0, 0.41)")
        if 2 * self.a + self.a ** 2 >= 1.0:
            raise ScheduleError("2a + a^2 >= 1: m_bar undefined")
        if not 0.0 < self.beta <= 0.5:
            raise ScheduleError("beta must lie in (0, 1/2]")
        if self.c0 <= 0:
            raise ScheduleError("c0 must be positive")
        if self.d < 3:
            raise ScheduleError("dimension must be at least 3")
        if self.n_max < 0:
            raise ScheduleError("n_max must be nonnegative")
        if self.regime not in REGIMES:
            raise ScheduleError(f"regime must be one of {REGIMES}")
        if self.regime == "paper" and self.a > self.beta / (1000 * self.d):
            raise ScheduleError("paper regime requires a <= beta/(1000 d)")


# ---------------------------------------------------------------------------
# exact integer power comparisons


def _rational(a: float) -> Fraction:
    """The decimal value the user wrote, e.g. 0.2 -> 1/5."""
    return Fraction(Decimal(repr(a)))


def _log_int(n) -> float:
    """Natural log of a (possibly huge) positive integer or fraction."""
    if isinstance(n, Fraction):
        return math.log(n.numerator) - math.log(n.denominator)
    return math.log(n)


def _int_str(n: int) -> str:
    """Decimal string of an arbitrarily long integer."""
    setter = getattr(sys, "set_int_max_str_digits", None)
    if setter is None:
        return str(n)
    old = sys.get_int_max_str_digits()
    setter(0)
    try:
        return str(n)
    finally:
        setter(old)


def _ln_decimal(n: int, prec: int) -> Decimal:
    """High-precision natural log of a huge positive integer via its leading bits."""
    with localcontext() as ctx:
        ctx.prec = prec + 10
        bits = n.bit_length()
        keep = min(bits, 4 * prec)
        top = n >> (bits - keep)
        return Decimal(top).ln() + Decimal(bits - keep) * Decimal(2).ln()


def floor_power(L: int, a: float) -> int:
    """Exact ``floor(L ** a)`` for integer ``L`` and the decimal exponent ``a``."""
    q = _rational(a)
    digits = int(float(q) * _log_int(L) / math.log(10)) + 40
    with localcontext() as ctx:
        ctx.prec = digits + 20
        y = (Decimal(q.numerator) / Decimal(q.denominator) * _ln_decimal(L, digits + 10)).exp()
        m = int(y.to_integral_value(rounding="ROUND_FLOOR"))
        frac = y - m
        if Decimal("1e-30") < frac < 1 - Decimal("1e-30"):
            return m
    # near an integer: settle the boundary exactly
    for cand in (m + 1, m):
        if cand > 0 and cmp_power(cand, L, q) <= 0:
            return cand
    return m - 1


def cmp_power(m, L: int, a) -> int:
    """Sign of ``m - L**a`` for integer or rational ``m`` (exact for moderate denominators of ``a``)."""
    q = a if isinstance(a, Fraction) else _rational(a)
    p, r = q.numerator, q.denominator
    # compare m**r against L**p, first by logarithms, then exactly
    lhs = r * _log_int(m)
    rhs = p * _log_int(L)
    if abs(lhs - rhs) > 1e-9 * max(1.0, abs(rhs)) + 1e-6:
        return 1 if lhs > rhs else -1
    if r > 100_000 or p > 100_000:
        raise ScheduleError("exponent denominator too large for an exact comparison")
    a_ = m ** r
    b_ = L ** p
    return (a_ > b_) - (a_ < b_)


# ---------------------------------------------------------------------------
# levels


def log_kappa(L: float | int, c0: float) -> float:
    """``log kappa = c0 (log log L)^2``."""
    ll = math.log(_log_int(L) if isinstance(L, int) else math.log(L))
    return c0 * ll * ll


@dataclass(frozen=True)
class ScaleLevel:
    """One level of the schedule; kappa values are kept in log space."""

    n: int
    L: int
    ell: int
    log_kappa: float

    @property
    def log_kappa_tilde(self) -> float:
        return 2.0 * self.log_kappa

    @property
    def kappa(self) -> float:
        return math.exp(self.log_kappa)

    @property
    def kappa_tilde(self) -> float:
        return math.exp(self.log_kappa_tilde)

    @property
    def log_L(self) -> float:
        return _log_int(self.L)

    @property
    def log_D(self) -> float:
        return self.log_L + self.log_kappa

    @property
    def log_D_tilde(self) -> float:
        return self.log_L + self.log_kappa_tilde

    @property
    def D(self) -> float:
        return _safe_exp(self.log_D)

    @property
    def D_tilde(self) -> float:
        return _safe_exp(self.log_D_tilde)

    @classmethod
    def at_length(cls, L: int, c0: float = 1.0, a: float = 0.2, n: int = 0) -> "ScaleLevel":
        """Free-standing desk level at an arbitrary length, e.g. L=10 for a quick estimator run."""
        ell = 5 * (floor_power(L, a) // 5) if L > 1 else 0
        return cls(n=n, L=int(L), ell=ell, log_kappa=log_kappa(int(L), c0))


def _safe_exp(v: float) -> float:
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


@dataclass
class ScaleSchedule:
    params: ScheduleParams
    levels: list

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, n: int) -> ScaleLevel:
        return self.levels[n]

    def level_for(self, inv_eps: float):
        """Index n with ``L_n <= inv_eps < L_{n+1}``, or None if outside the schedule."""
        for lev, nxt in zip(self.levels, self.levels[1:]):
            if lev.L <= inv_eps < nxt.L:
                return lev.n
        return None

    def check_invariants(self) -> None:
        a = self.params.a
        for lev, nxt in zip(self.levels, self.levels[1:]):
            if lev.ell < 5 or lev.ell % 5:
                raise ScheduleError(f"ell_{lev.n}={lev.ell} is not a positive multiple of 5")
            if nxt.L != lev.ell * lev.L:
                raise ScheduleError("L_{n+1} != ell_n L_n")
            # (1/2) L^{1+a} <= ell L <= 2 L^{1+a}  <=>  L^a <= 2 ell and ell / 2 <= L^a
            if cmp_power(2 * lev.ell, lev.L, a) < 0:
                raise ScheduleError(f"L_{nxt.n} below L^(1+a)/2")
            if cmp_power(Fraction(lev.ell, 2), lev.L, a) > 0:
                raise ScheduleError(f"L_{nxt.n} above 2 L^(1+a)")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "L_n", "ell_n", "log_kappa_n", "D_n", "D_tilde_n"])
        paper = self.params.regime == "paper"
        for lev in self.levels:
            w.writerow([
                lev.n,
                _int_str(lev.L),
                _int_str(lev.ell),
                repr(lev.log_kappa),
                _fmt_big(lev.log_D) if paper else repr(lev.D),
                _fmt_big(lev.log_D_tilde) if paper else repr(lev.D_tilde),
            ])
        return buf.getvalue()


def _fmt_big(log_value: float) -> str:
    """Decimal scientific string for exp(log_value), safe beyond float range."""
    e10 = log_value / math.log(10)
    exp10 = math.floor(e10)
    mant = 10 ** (e10 - exp10)
    return f"{mant:.12f}e{exp10:+d}"


def build_schedule(params: ScheduleParams) -> ScaleSchedule:
    """Levels 0..n_max with ``ell_n = 5 floor(L_n^a / 5)`` and ``L_{n+1} = ell_n L_n``."""
    params.validate()
    levels = []
    L = params.L0
    for n in range(params.n_max + 1):
        ell = 5 * (floor_power(L, params.a) // 5)
        if ell < 5:
            raise ScheduleError(f"ell_{n} = {ell} < 5: L0 too small for a={params.a}")
        levels.append(ScaleLevel(n=n, L=L, ell=ell, log_kappa=log_kappa(L, params.c0)))
        L = ell * L
    sched = ScaleSchedule(params=params, levels=levels)
    return sched


# ---------------------------------------------------------------------------
# exponents


@dataclass
class DerivedExponents:
    delta: float
    m0: int
    M0_min: float
    m_bar: int
    zeta: float | None = None
    level_check: dict = field(default_factory=dict)


def m_bar_for(a: float) -> int:
    """Smallest integer strictly above ``1 - log(1-2a-a^2)/log(1+a)``."""
    inner = 1.0 - 2.0 * a - a * a
    if inner <= 0:
        raise ScheduleError("1 - 2a - a^2 <= 0")
    bound = 1.0 - math.log(inner) / math.log1p(a)
    return math.floor(bound) + 1


def m0_for(a: float) -> int:
    """The integer with ``(1+a)^(m0-2) <= 100 < (1+a)^(m0-1)``."""
    m0 = 2
    while (1.0 + a) ** (m0 - 1) <= 100.0:
        m0 += 1
    return m0


def derive_exponents(params: ScheduleParams, schedule: ScaleSchedule | None = None) -> DerivedExponents:
    if 1.0 - 2.0 * params.a - params.a ** 2 <= 0:
        raise ScheduleError("1 - 2a - a^2 <= 0")
    m0 = m0_for(params.a)
    ex = DerivedExponents(
        delta=5.0 * params.beta / 32.0,
        m0=m0,
        M0_min=100.0 * params.d * (1.0 + params.a) ** (m0 + 2),
        m_bar=m_bar_for(params.a),
    )
    if params.regime == "paper":
        sched = schedule if schedule is not None else build_schedule(params)
        ex.level_check = check_level_products(sched, ex.m_bar)
    return ex


def _cmp_products(x1: int, x2: int, y1: int, y2: int) -> int:
    """Sign of ``x1*x2 - y1*y2`` using bit lengths before any big multiplication."""
    lo_x = x1.bit_length() + x2.bit_length() - 2
    hi_x = x1.bit_length() + x2.bit_length()
    lo_y = y1.bit_length() + y2.bit_length() - 2
    hi_y = y1.bit_length() + y2.bit_length()
    if hi_x < lo_y:
        return -1
    if lo_x > hi_y:
        return 1
    p, q = x1 * x2, y1 * y2
    return (p > q) - (p < q)


def check_level_products(schedule: ScaleSchedule, m_bar: int) -> dict:
    """``L_{n+1} L_{n-m_bar} <= L_{n-1}^2`` for every representable ``n >= m_bar + 1``."""
    Ls = [lev.L for lev in schedule.levels]
    checked = {}
    for n in range(m_bar + 1, len(Ls) - 1):
        checked[n] = _cmp_products(Ls[n + 1], Ls[n - m_bar], Ls[n - 1], Ls[n - 1]) <= 0
    return checked


@dataclass
class ZetaFit:
    zeta: float
    diagnostic: str
    per_level: list


def fit_zeta(schedule: ScaleSchedule, exponents: DerivedExponents) -> ZetaFit:
    """Largest ``zeta`` satisfying the three level inequalities with unit constant, in log space."""
    mb = exponents.m_bar
    levels = schedule.levels
    if len(levels) < mb + 3:
        raise ScheduleError(f"needs levels up to n = m_bar + 2 = {mb + 2}; have {len(levels) - 1}")
    a, d, delta = schedule.params.a, schedule.params.d, exponents.delta
    rows = []
    best = math.inf
    for n in range(mb + 1, len(levels) - 1):
        lo, prev, cur, nxt = levels[n - mb], levels[n - 1], levels[n], levels[n + 1]
        lp = prev.log_L
        z1 = 2.0 - (nxt.log_L + lo.log_D_tilde) / lp
        z2 = -(lo.log_kappa_tilde + (16.0 * a - delta) * lo.log_L) / lp
        z3 = d * a * cur.log_L / lp
        rows.append({"n": n, "zeta_1": z1, "zeta_2": z2, "zeta_3": z3})
        best = min(best, z1, z2, z3)
    if best > 0:
        return ZetaFit(zeta=best, diagnostic="ok", per_level=rows)
    reasons = []
    if 16.0 * a - delta > 0:
        reasons.append("16a-delta>0")
    if any(r["zeta_1"] <= 0 for r in rows):
        reasons.append("L_{n+1} D~_{n-m} exceeds L_{n-1}^2")
    if any(r["zeta_2"] <= 0 for r in rows) and "16a-delta>0" not in reasons:
        reasons.append("kappa~ factor dominates")
    return ZetaFit(zeta=0.0, diagnostic="; ".join(reasons) or "no positive zeta", per_level=rows)


# ---------------------------------------------------------------------------
# relaxed levels for desk-scale stopping rules


@dataclass(frozen=True)
class StopLevel:
    """Lengths consumed by the discrete stopping rules at one scale.

    ``L`` plays the role of ``L_n``; ``L_prev`` of ``L_{n-1}``; ``L_sub`` of
    ``L_{n-m_bar}``; ``L_next2`` of ``L_{n+2}``.
    """

    L: float
    L_prev: float
    L_sub: float
    D_tilde_sub: float
    L_next2: float
    source: str

    @classmethod
    def from_schedule(cls, schedule: ScaleSchedule, n: int, m_bar: int) -> "StopLevel":
        if n - m_bar < 0 or n + 2 >= len(schedule.levels):
            raise ScheduleError("level index outside the schedule window")
        lv = schedule.levels
        return cls(
            L=float(lv[n].L),
            L_prev=float(lv[n - 1].L),
            L_sub=float(lv[n - m_bar].L),
            D_tilde_sub=lv[n - m_bar].D_tilde,
            L_next2=float(lv[n + 2].L),
            source="schedule",
        )

    @classmethod
    def relaxed(cls, L: float, a: float, c0: float, m_bar: int) -> "StopLevel":
        """Continuous relaxation ``L_{n-j} = L^{(1+a)^-j}`` of the recursion (no rounding to multiples of 5)."""
        g = 1.0 + a
        L_sub = L ** (g ** -m_bar)
        return cls(
            L=float(L),
            L_prev=L ** (1.0 / g),
            L_sub=L_sub,
            D_tilde_sub=L_sub * math.exp(2.0 * log_kappa(L_sub, c0)),
            L_next2=L ** (g * g),
            source="relaxed",
        )


def schedule_rows(schedule: ScaleSchedule) -> list:
    return [
        {"n": lev.n, "L_n": lev.L, "ell_n": lev.ell, "log_kappa_n": lev.log_kappa, "D_n": lev.D, "D_tilde_n": lev.D_tilde}
        for lev in schedule.levels
    ]
