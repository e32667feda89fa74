"""Continued fractions, exact convergents and approximation profiles.

A real number is never held as a float here. It is described by its partial
quotients, either a finite list (a rational number) or a generator rule
``n -> a_n`` (an irrational number given by a pattern). Convergents are exact
Python integers, and every gap ``|q_n x - p_n|`` is reported with the classical
two sided bracket

    1 / (q_n (q_n + q_{n+1}))  <  |x - p_n/q_n|  <  1 / (q_n q_{n+1})

so values far below double precision stay meaningful.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import mpmath

from .report import int_text

__all__ = [
    "ContinuedFraction",
    "ConvergentRecord",
    "ApproximationProfile",
    "PrecisionError",
    "convergents",
    "approximation_profile",
    "named_pattern",
    "log_convergents",
    "LogConvergent",
    "PATTERNS",
]


class PrecisionError(ArithmeticError):
    """Raised when a requested quantity cannot be resolved at the allowed precision."""


def _factorial_pow10_power(n: int) -> tuple[int, int]:
    # a_n = 10^{(n+1)!}, so the list starts 10, 100, 10^6, 10^24, ...
    return 10, math.factorial(n + 1)


def _liouville_demo_power(n: int) -> tuple[int, int]:
    # [0; 1, ..., 1, 10^150, 10^300, 10^900, ...]: golden-ratio convergents up
    # to q_12 = 233, then super-exponentially growing quotients. The first
    # huge gap (about 10^-152 at q = 233) falls inside desk-scale truncations.
    if n == 0:
        return 0, 1
    if n <= 12:
        return 1, 1
    return 10, 150 * math.factorial(n - 12)


def _power_rule(power: Callable[[int], tuple[int, int]]) -> Callable[[int], int]:
    def rule(n: int) -> int:
        b, e = power(n)
        return b ** e

    return rule


def _golden(n: int) -> int:
    return 1


def _sqrt2(n: int) -> int:
    return 1 if n == 0 else 2


# patterns whose quotients are b^e are stored in power form, so logs and
# residues stay available long after the integers become too large to build
_POWER_PATTERNS: dict[str, Callable[[int], tuple[int, int]]] = {
    "factorial-pow10": _factorial_pow10_power,
    "liouville-demo": _liouville_demo_power,
}

PATTERNS: dict[str, Callable[[int], int]] = {
    "factorial-pow10": _power_rule(_factorial_pow10_power),
    "golden": _golden,
    "sqrt2": _sqrt2,
    "liouville-demo": _power_rule(_liouville_demo_power),
}


def named_pattern(name: str) -> "ContinuedFraction":
    try:
        rule = PATTERNS[name]
    except KeyError:
        raise ValueError(f"unknown continued fraction pattern {name!r}; known: {sorted(PATTERNS)}") from None
    return ContinuedFraction(rule=rule, name=name, power=_POWER_PATTERNS.get(name))


class ContinuedFraction:
    """Simple continued fraction [a_0; a_1, a_2, ...] with exact convergents.

    Exactly one of ``quotients`` (finite, hence rational) or ``rule`` (infinite)
    must be supplied. Instances are immutable from the outside; the convergent
    cache only ever grows and is guarded by a lock.
    """

    def __init__(
        self,
        quotients: Sequence[int] | None = None,
        rule: Callable[[int], int] | None = None,
        name: str | None = None,
        power: Callable[[int], tuple[int, int]] | None = None,
    ):
        if (quotients is None) == (rule is None):
            raise ValueError("give either a finite quotient list or a generator rule")
        if quotients is not None:
            qs = [int(a) for a in quotients]
            if not qs:
                raise ValueError("empty continued fraction")
            if any(a <= 0 for a in qs[1:]):
                raise ValueError("partial quotients a_n, n >= 1, must be positive")
            self._finite: tuple[int, ...] | None = tuple(qs)
        else:
            self._finite = None
        self._rule = rule
        self._power = power
        self.name = name or ("[" + ", ".join(str(a) for a in self._finite) + "]" if self._finite else "pattern")
        self._lock = threading.Lock()
        self._a: list[int] = []
        self._p: list[int] = []
        self._q: list[int] = []

    # construction helpers -------------------------------------------------
    @classmethod
    def from_rational(cls, x: Fraction | int | str) -> "ContinuedFraction":
        x = Fraction(x)
        num, den = x.numerator, x.denominator
        qs = []
        while True:
            a, r = divmod(num, den)
            qs.append(a)
            if r == 0:
                break
            num, den = den, r
        # a_0 may be negative; later quotients are positive by construction
        return cls(quotients=qs, name=str(x))

    @property
    def is_rational(self) -> bool:
        return self._finite is not None

    @property
    def length(self) -> int | None:
        """Number of partial quotients, or None for an infinite pattern."""
        return None if self._finite is None else len(self._finite)

    def quotient(self, n: int) -> int:
        if self._finite is not None:
            if n >= len(self._finite):
                raise IndexError(n)
            return self._finite[n]
        a = int(self._rule(n))
        if n > 0 and a <= 0:
            raise ValueError(f"pattern produced non-positive quotient a_{n} = {a}")
        return a

    def quotient_log_mod(self, n: int, modulus: int) -> tuple[mpmath.mpf, int]:
        """(log a_n, a_n mod modulus) without building a_n when it is a stored power."""
        if self._power is not None:
            b, e = self._power(n)
            if b > 0:
                return e * mpmath.log(b), pow(b, e, modulus)
        a = self.quotient(n)
        return (mpmath.log(a) if a > 0 else mpmath.mpf("-inf")), a % modulus

    def quotient_bits(self, n: int) -> float:
        """Approximate bit length of a_n (cheap for stored powers)."""
        if self._power is not None:
            b, e = self._power(n)
            return e * math.log2(b) if b > 1 else 1.0
        return float(self.quotient(n).bit_length())

    def _extend(self, n: int) -> None:
        with self._lock:
            while len(self._p) <= n:
                k = len(self._p)
                a = self.quotient(k)
                pm1, pm2 = (self._p[-1], self._p[-2]) if k >= 2 else ((self._p[-1], 1) if k == 1 else (1, 0))
                qm1, qm2 = (self._q[-1], self._q[-2]) if k >= 2 else ((self._q[-1], 0) if k == 1 else (0, 1))
                self._a.append(a)
                self._p.append(a * pm1 + pm2)
                self._q.append(a * qm1 + qm2)

    def convergent(self, n: int) -> tuple[int, int]:
        if self._finite is not None and n >= len(self._finite):
            raise IndexError(f"rational continued fraction has only {len(self._finite)} quotients")
        self._extend(n)
        return self._p[n], self._q[n]

    def value(self) -> Fraction:
        if self._finite is None:
            raise ValueError("infinite continued fraction has no exact rational value")
        p, q = self.convergent(len(self._finite) - 1)
        return Fraction(p, q)

    def mp_value(self, bits: int) -> mpmath.mpf:
        """Value to ``bits`` bits, using a convergent whose error is certified smaller."""
        if self._finite is not None:
            v = self.value()
            with mpmath.workprec(bits):
                return mpmath.mpf(v.numerator) / v.denominator
        n = self.depth_for_bits(bits + 16)
        p, q = self.convergent(n)
        with mpmath.workprec(bits):
            return mpmath.mpf(p) / q

    def depth_for_bits(self, bits: int, max_depth: int = 100_000) -> int:
        """Smallest n with 1/(q_n q_{n+1}) < 2^-bits (infinite patterns only)."""
        target = 1 << bits
        n = 0
        while n < max_depth:
            _, qn = self.convergent(n)
            _, qn1 = self.convergent(n + 1)
            if qn * qn1 > target:
                return n
            n += 1
        raise PrecisionError(f"no convergent reaches 2^-{bits} within depth {max_depth}")

    def enclosure(self, n: int) -> tuple[Fraction, Fraction]:
        """Rational interval containing the number, from convergents n and n+1."""
        p0, q0 = self.convergent(n)
        if self._finite is not None and n + 1 >= len(self._finite):
            v = Fraction(p0, q0)
            return v, v
        p1, q1 = self.convergent(n + 1)
        a, b = Fraction(p0, q0), Fraction(p1, q1)
        return (a, b) if a <= b else (b, a)

    def __repr__(self) -> str:
        return f"ContinuedFraction({self.name})"


EXACT_BITS = 1 << 18


@dataclass(frozen=True)
class LogConvergent:
    """Rigorous log brackets and residues of p_n, q_n; exact values when small."""

    n: int
    log_p: tuple
    log_q: tuple
    p_mod: int
    q_mod: int
    p: int | None = None
    q: int | None = None


def _interval_sum(lo_a, hi_a, lo_b, hi_b):
    # log(e^x + e^y) bracket, the mpf sums are padded by a relative ulp margin
    lo = mpmath.log(mpmath.exp(lo_a) + mpmath.exp(lo_b)) if lo_b > -mpmath.inf else lo_a
    hi = mpmath.log(mpmath.exp(hi_a) + mpmath.exp(hi_b)) if hi_b > -mpmath.inf else hi_a
    return lo, hi


def log_convergents(cf: ContinuedFraction, n: int, modulus: int = 2, bits: int = 128) -> list[LogConvergent]:
    """p_k, q_k for k <= n as log intervals and residues mod ``modulus``.

    Exact integers are used while the quotients stay below EXACT_BITS bits;
    after that p_k = a_k p_{k-1} + p_{k-2} is bracketed in log space from
    log a_k, so the numbers are never built. Brackets are widened by
    2^-(bits-16) relative to absorb rounding.
    """
    out: list[LogConvergent] = []
    exact = True
    pm = [1, 0]  # residues p_{k-1}, p_{k-2}
    qm = [0, 1]
    lp = [(mpmath.mpf(0), mpmath.mpf(0)), (mpmath.mpf("-inf"), mpmath.mpf("-inf"))]
    lq = [(mpmath.mpf("-inf"), mpmath.mpf("-inf")), (mpmath.mpf(0), mpmath.mpf(0))]
    with mpmath.workprec(bits):
        pad = mpmath.mpf(2) ** (16 - bits)
        for k in range(n + 1):
            if exact and (k == 0 or cf.quotient_bits(k) < EXACT_BITS):
                p, q = cf.convergent(k)
                a_mod = cf.quotient(k) % modulus
                lpk = (mpmath.log(p), mpmath.log(p)) if p > 0 else (mpmath.mpf("-inf"),) * 2
                lqk = (mpmath.log(q),) * 2
                rec = LogConvergent(k, lpk, lqk, p % modulus, q % modulus, p, q)
            else:
                exact = False
                la, a_mod = cf.quotient_log_mod(k, modulus)
                vals = []
                for (l1, h1), (l2, h2) in ((lp[0], lp[1]), (lq[0], lq[1])):
                    lo, hi = _interval_sum(la + l1, la + h1, l2, h2)
                    vals.append((lo - pad * abs(lo), hi + pad * abs(hi)))
                lpk, lqk = vals
                rec = LogConvergent(k, lpk, lqk, (a_mod * pm[0] + pm[1]) % modulus, (a_mod * qm[0] + qm[1]) % modulus)
            pm = [rec.p_mod, pm[0]]
            qm = [rec.q_mod, qm[0]]
            lp = [rec.log_p, lp[0]]
            lq = [rec.log_q, lq[0]]
            out.append(rec)
    return out


def convergents(cf: ContinuedFraction | Sequence[int], n: int) -> list[tuple[int, int]]:
    """Exact convergents (p_0, q_0), ..., (p_n, q_n).

    For a finite continued fraction shorter than n+1 the list stops at its end.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if not isinstance(cf, ContinuedFraction):
        cf = ContinuedFraction(quotients=list(cf))
    stop = n + 1 if cf.length is None else min(n + 1, cf.length)
    return [cf.convergent(k) for k in range(stop)]


@dataclass(frozen=True)
class ConvergentRecord:
    n: int
    p: int
    q: int
    log_q: float
    log_gap: float  # log |q_n x - p_n| at the working precision
    log_gap_lower: float  # rigorous: -log(q_n + q_{n+1})
    log_gap_upper: float  # rigorous: -log(q_{n+1})
    power_exponent: float  # c with |q x - p| = q^-c
    exp_rate: float  # eps with |q x - p| = exp(-eps q^{1/s})


@dataclass(frozen=True)
class ApproximationProfile:
    name: str
    rational: bool
    s: float
    bits: int
    records: tuple[ConvergentRecord, ...] = field(default_factory=tuple)
    tested_exponents: tuple[float, ...] = ()
    liouville_consistent: bool = False
    exp_liouville_consistent: bool = False
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "rational": self.rational,
            "s": self.s,
            "precision_bits": self.bits,
            "tested_exponents": list(self.tested_exponents),
            "liouville_consistent": self.liouville_consistent,
            "exp_liouville_consistent": self.exp_liouville_consistent,
            "records": [
                {
                    "n": r.n,
                    "p": int_text(r.p),
                    "q": int_text(r.q),
                    "log_q": r.log_q,
                    "log_gap": r.log_gap,
                    "log_gap_lower": r.log_gap_lower,
                    "log_gap_upper": r.log_gap_upper,
                    "power_exponent": r.power_exponent,
                    "exp_rate": r.exp_rate,
                }
                for r in self.records
            ],
            "notes": list(self.notes),
        }


def _mp_log_int(x: int) -> mpmath.mpf:
    return mpmath.log(mpmath.mpf(x))


def _gap_fraction(cf: ContinuedFraction, n: int, bits: int) -> tuple[int, int]:
    """Exact (num, den) with num/den equal to |q_n x - p_n| to relative error 2^-bits.

    The gap is evaluated as an exact rational (q_n p_N - p_n q_N)/q_N, with
    N chosen so that the substitution error is below 2^-(bits+8) of the gap.
    """
    p, q = cf.convergent(n)
    _, q1 = cf.convergent(n + 1)
    # |x - p_N/q_N| < 1/(q_N q_{N+1}); gap >= 1/(q + q1). Need q/(q_N q_{N+1}) < 2^-(bits+8)/(q+q1).
    bound = (q + q1) * q << (bits + 8)
    # N >= n + 2 keeps the approximant strictly inside the classical bracket
    N = n + 2
    while True:
        if cf.is_rational and N + 1 >= cf.length:
            N = cf.length - 1
            break
        _, qN = cf.convergent(N)
        _, qN1 = cf.convergent(N + 1)
        if qN * qN1 > bound:
            break
        N += 1
    pN, qN = cf.convergent(N)
    num = abs(q * pN - p * qN)
    if num == 0:
        raise PrecisionError("gap collapsed to zero; increase depth")
    return num, qN


def _gap_log(cf: ContinuedFraction, n: int, bits: int) -> mpmath.mpf:
    """log |q_n x - p_n| with relative error below 2^-bits."""
    if cf.is_rational and n + 1 >= cf.length:
        return mpmath.mpf("-inf")
    num, den = _gap_fraction(cf, n, bits)
    with mpmath.workprec(bits + 32):
        return _mp_log_int(num) - _mp_log_int(den)


def approximation_profile(
    cf: ContinuedFraction,
    n: int,
    s: float = 1.0,
    bits: int = 512,
    exponents: Iterable[float] = (2.0, 3.0, 4.0),
    exp_eps: float = 1e-3,
) -> ApproximationProfile:
    """Per-convergent approximation quality of ``cf`` up to depth ``n``.

    Liouville-consistent means that for every tested exponent c some computed
    convergent satisfies |q x - p| < q^-c. The exponential rate for order s is
    eps_n = -log|q_n x - p_n| / q_n^{1/s}; the number is reported as not
    exponential-Liouville of order s (``exp_liouville_consistent`` False) when
    these rates decrease along the tail of the profile and end below ``exp_eps``.
    That reading is a shape check of the lower bound exp(-eps q^{1/s}); the
    formal definition of the notion is external to this package.
    """
    if n < 2:
        raise ValueError("profile needs depth n >= 2")
    exps = tuple(float(c) for c in exponents)
    if cf.is_rational:
        return ApproximationProfile(
            name=cf.name, rational=True, s=s, bits=bits, tested_exponents=exps,
            notes=("rational input: terminating expansion, profile empty",),
        )
    recs = []
    with mpmath.workprec(bits + 32):
        for k in range(n + 1):
            p, q = cf.convergent(k)
            _, q1 = cf.convergent(k + 1)
            num, den = _gap_fraction(cf, k, bits)
            # the bracket 1/(q + q1) < gap < 1/q1 is checked in exact integers
            if not (num * (q + q1) > den and num * q1 < den):
                raise PrecisionError(f"gap at n={k} escaped its rigorous bracket")
            lg = _mp_log_int(num) - _mp_log_int(den)
            lo = -_mp_log_int(q + q1)
            hi = -_mp_log_int(q1)
            lq = _mp_log_int(q) if q > 1 else mpmath.mpf(0)
            pe = float(-lg / lq) if q > 1 else math.inf
            # q^{1/s} may be astronomically large: work in logs
            log_scale = lq / s
            er = float(mpmath.exp(mpmath.log(-lg) - log_scale)) if lg < 0 else 0.0
            recs.append(ConvergentRecord(k, p, q, float(lq), float(lg), float(lo), float(hi), pe, er))
    for a, b in zip(recs, recs[1:]):
        if not b.log_gap < a.log_gap:
            raise PrecisionError("log gaps not strictly decreasing")
    best = max(r.power_exponent for r in recs if r.q > 1) if any(r.q > 1 for r in recs) else 0.0
    liou = all(any(r.q > 1 and r.power_exponent > c for r in recs) for c in exps)
    tail = [r.exp_rate for r in recs if r.q > 1][-3:]
    decreasing = all(y <= x for x, y in zip(tail, tail[1:]))
    not_exp = decreasing and tail[-1] < exp_eps if tail else False
    notes = [
        f"best power exponent on profile: {best:.6g}",
        "exponential-Liouville reading follows the bound shape exp(-eps q^{1/s}); definition is external",
    ]
    return ApproximationProfile(
        name=cf.name, rational=False, s=s, bits=bits, records=tuple(recs),
        tested_exponents=exps, liouville_consistent=liou,
        exp_liouville_consistent=not not_exp, notes=tuple(notes),
    )
