import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest

from komatsu import _accel
from komatsu.duals import SU2, TORUS
from komatsu.operator import (
    Coupling,
    GaussianRational,
    VectorFieldSpec,
    convergent_extrapolation,
    diophantine_fit,
    divisor_spectrum,
    kernel_set,
    smoothness_fit,
)
from komatsu.weights import AssociatedFunction, WeightSequence

# 100 a - 1001 for a = [10; 100, 10^6, 10^24, ...], from convergent 5 at 60 digits
FROZEN_GAP = "-0.00000000999999990000000099999998999999"

EXAMPLE = VectorFieldSpec(TORUS, SU2, {"pattern": "factorial-pow10"})


def test_coupling_parse():
    assert Coupling.parse("3/7").kind == "rational"
    assert Coupling.parse("0.25").rational == Fraction(1, 4)
    # a finite expansion is a rational number: [1; 2, 2] = 7/5
    fin = Coupling.parse({"cf": [1, 2, 2]})
    assert fin.kind == "rational" and fin.rational == Fraction(7, 5)
    assert Coupling.parse({"pattern": "golden"}).kind == "cf"
    assert Coupling.parse({"float": 0.3}).kind == "float"
    with pytest.raises(ValueError):
        Coupling.parse({"bogus": 1})
    with pytest.raises(TypeError):
        Coupling.parse(True)
    assert GaussianRational.of([0, "1/2"]).im == Fraction(1, 2)


def test_spec_json():
    s = VectorFieldSpec.from_json({"groups": ["torus", "su2"], "a": {"pattern": "factorial-pow10"},
                                   "q": {"const": [0, "1/2"]}})
    assert s.groups == (TORUS, SU2)
    assert s.q_const.im == Fraction(1, 2)
    assert s.describe()["groups"] == ["torus", "su2"]


def test_divisor_mp_tiny_value():
    # k = -1001, m = 100: D = k + a m
    d = EXAMPLE.divisor_mp(-2002, 200, bits=256)
    with mpmath.workprec(256):
        assert abs(mpmath.re(d) - mpmath.mpf(FROZEN_GAP)) < mpmath.mpf(10) ** -37  # oracle has 30 digits
    assert not EXAMPLE.exact_zero(-2002, 200)


def test_exact_zero_forms():
    rat = VectorFieldSpec(TORUS, TORUS, "2")
    assert rat.exact_zero(-4, 2) is True  # k = -2, m = 1
    assert rat.exact_zero(-4, 4) is False
    shifted = EXAMPLE.with_shift(q_coef=(0, 1))  # D = k + a(m + 1)
    assert shifted.exact_zero(0, -2) is True
    assert EXAMPLE.with_shift(q_const=(0, "1/2")).exact_zero(-1, 0) is True


def test_kernel_rational_torus():
    sp = divisor_spectrum(VectorFieldSpec(TORUS, TORUS, "2"), 10, 10)
    ker = kernel_set(sp)
    # k + 2m = 0 with |k| <= 10: m = -5..5
    assert ker.count == 11
    assert ker.still_growing


def test_kernel_example_small():
    q0 = EXAMPLE.with_shift(q_const=(0, "1/2"))
    assert kernel_set(divisor_spectrum(q0, 300, 20)).empty
    ker = kernel_set(divisor_spectrum(EXAMPLE.with_shift(q_coef=(0, 1)), 300, 20))
    # k = 0, m = -1, every l = 1..20
    assert ker.count == 20
    assert ker.still_growing
    assert all(e[0] == 0 for e in ker.elements)


def _brute_cummin(sp, p, edges):
    recs = sp.records()
    best = np.full(edges.size - 1, np.inf)
    for r in recs:
        if r.exact_zero:
            continue
        b = min(max(np.searchsorted(edges, r.w, side="right") - 1, 0), edges.size - 2)
        best[b] = min(best[b], r.log_abs_D + p * math.log(r.w))
    return np.minimum.accumulate(best)


@pytest.mark.parametrize("spec,cuts", [
    (VectorFieldSpec(TORUS, SU2, {"pattern": "factorial-pow10"}, q_const=GaussianRational.of([0, "1/2"])), (40, 6)),
    (VectorFieldSpec(TORUS, TORUS, {"pattern": "golden"}), (30, 30)),
    (VectorFieldSpec(SU2, SU2, "1/3"), (5, 5)),
])
def test_scan_matches_records(spec, cuts):
    from komatsu.operator import _accel as acc

    sp = divisor_spectrum(spec, *cuts)
    res = sp.scan([(acc.FIT_POLY, 2.0)])
    # reduced rows (l = |m|) are exact for minima over w <= W, not per bin
    ref = _brute_cummin(sp, 2.0, res.edges)
    got = np.minimum.accumulate(res.best[0])
    fin = np.isfinite(ref)
    assert np.array_equal(fin, np.isfinite(got))
    np.testing.assert_allclose(got[fin], ref[fin], rtol=1e-9, atol=1e-9)


@pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba unavailable")
def test_numba_numpy_agree():
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    for spec, cuts in [(EXAMPLE.with_shift(q_const=(0, "1/2")), (500, 30)),
                       (EXAMPLE.with_shift(q_coef=(0, 1)), (300, 20)),
                       (VectorFieldSpec(TORUS, TORUS, "3/5"), (80, 80))]:
        sp = divisor_spectrum(spec, *cuts)
        fits = [(_accel.FIT_POLY, 3.0), (_accel.FIT_ASSOC, math.log(0.5))]
        af.ensure(sp.w_max)
        a = sp.scan(fits, af, backend="numba")
        b = sp.scan(fits, af, backend="numpy")
        np.testing.assert_allclose(a.best, b.best, rtol=1e-12)
        assert sorted(map(tuple, a.zeros)) == sorted(map(tuple, b.zeros))
        assert a.n_candidates == b.n_candidates


def test_fit_golden_consistent():
    sp = divisor_spectrum(VectorFieldSpec(TORUS, TORUS, {"pattern": "golden"}), 2000, 2000)
    v = diophantine_fit(sp, AssociatedFunction(WeightSequence.gevrey(2.0)), "roumieu")
    assert v.hypoelliptic_consistent
    sm = smoothness_fit(sp, (2.0,))
    assert sm.condition_consistent


def test_fit_rejects_bad_mode():
    sp = divisor_spectrum(VectorFieldSpec(TORUS, TORUS, {"pattern": "golden"}), 20, 20)
    with pytest.raises(ValueError):
        diophantine_fit(sp, AssociatedFunction(WeightSequence.gevrey(2.0)), "both")


def test_extrapolation_collapse():
    rows = convergent_extrapolation(EXAMPLE.with_shift(q_const=(0, "1/2")), 10.0, depth=11)
    by_n = {r.n: r for r in rows}
    assert set(by_n) == {1, 3, 5, 7, 9, 11}
    for r in rows:
        assert r.log_absD_lower <= r.log_absD_upper
        assert r.log_value_lower <= r.log_value_upper
    # |D| w^10 still grows at n = 7 and is below exp(-10^6) from n = 9 on
    assert by_n[7].log_value_lower > 0
    assert by_n[9].log_value_upper < -1e6
    # n = 1: t = 1/2, k = -501, m = 50
    assert (by_n[1].x1_2, by_n[1].x2_2) == (-1002, 100)


def test_precision_env(monkeypatch):
    from komatsu.operator import precision_bits

    monkeypatch.setenv("KOMATSU_PRECISION_BITS", "512")
    assert precision_bits() == 512
