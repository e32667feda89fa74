from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from komatsu.diophantine import (
    ContinuedFraction,
    PrecisionError,
    approximation_profile,
    convergents,
    log_convergents,
    named_pattern,
)

# hand recurrence for [10; 100, 10^6]
P = [10, 1001, 1001000010]
Q = [1, 100, 100000001]


def test_truncated_pattern_convergents_exact():
    assert convergents([10, 100, 10**6], 2) == list(zip(P, Q))
    cf = named_pattern("factorial-pow10")
    assert [cf.quotient(n) for n in range(4)] == [10, 100, 10**6, 10**24]
    assert [cf.convergent(n) for n in range(3)] == list(zip(P, Q))


def test_gap_bracket_rigorous():
    cf = named_pattern("factorial-pow10")
    p1, q1 = cf.convergent(1)
    p2, q2 = cf.convergent(2)
    lo, hi = cf.enclosure(4)
    # |x - p1/q1| for every x in the enclosure lies in the classical bracket
    for x in (lo, hi):
        gap = abs(x - Fraction(p1, q1))
        assert Fraction(1, q1 * (q1 + q2)) < gap < Fraction(1, q1 * q2)


def test_golden_fibonacci():
    cf = named_pattern("golden")
    fib = [1, 1]
    for _ in range(30):
        fib.append(fib[-1] + fib[-2])
    for n in range(25):
        assert cf.convergent(n) == (fib[n + 1], fib[n])


def test_rational_expansion():
    cf = ContinuedFraction.from_rational(Fraction(415, 93))
    assert cf._finite == (4, 2, 6, 7)
    assert cf.value() == Fraction(415, 93)
    neg = ContinuedFraction.from_rational("-7/3")
    assert neg.value() == Fraction(-7, 3)
    with pytest.raises(ValueError):
        ContinuedFraction(quotients=[1, 0, 2])
    with pytest.raises(IndexError):
        cf.convergent(4)


@settings(max_examples=60)
@given(st.fractions(min_value=-50, max_value=50, max_denominator=10**6))
def test_rational_roundtrip(x):
    assert ContinuedFraction.from_rational(x).value() == x


def test_mp_value():
    cf = named_pattern("sqrt2")
    with mpmath.workprec(300):
        assert abs(cf.mp_value(256) - mpmath.sqrt(2)) < mpmath.mpf(2) ** -250


def test_profile_factorial_pow10():
    prof = approximation_profile(named_pattern("factorial-pow10"), 4, s=2.0)
    assert prof.liouville_consistent
    assert not prof.exp_liouville_consistent
    # log gap at n = 1 is -log q_2 to within the bracket width
    r1 = prof.records[1]
    assert r1.log_gap_lower <= r1.log_gap <= r1.log_gap_upper
    assert r1.log_gap_upper == pytest.approx(-float(mpmath.log(100000001)), rel=1e-15)


def test_profile_golden_not_liouville():
    prof = approximation_profile(named_pattern("golden"), 25)
    assert not prof.liouville_consistent
    assert prof.records[-1].power_exponent == pytest.approx(1.0, abs=0.1)


def test_profile_rational_empty():
    prof = approximation_profile(ContinuedFraction.from_rational("3/7"), 3)
    assert prof.rational and not prof.records


def test_log_convergents_contain_exact(monkeypatch):
    import komatsu.diophantine as d

    exact = log_convergents(named_pattern("factorial-pow10"), 6, modulus=12)
    monkeypatch.setattr(d, "EXACT_BITS", 8)
    approx = log_convergents(named_pattern("factorial-pow10"), 6, modulus=12)
    for e, a in zip(exact, approx):
        assert e.p_mod == a.p_mod and e.q_mod == a.q_mod
        if e.n >= 1:
            assert a.log_q[0] <= e.log_q[0] <= a.log_q[1]
            assert a.log_p[0] <= e.log_p[0] <= a.log_p[1]
            assert a.log_q[1] - a.log_q[0] < 1e-25


def test_patterns_unknown():
    with pytest.raises(ValueError):
        named_pattern("pi")


def test_precision_error_type():
    assert issubclass(PrecisionError, ArithmeticError)
