"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are repeated in the
terminal summary) or ``python3 tests/test_acceptance.py``. Tolerances and
runtime limits are fixed; a criterion that cannot be met stays red.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import gammaln

from komatsu.diophantine import convergents, named_pattern
from komatsu.duals import SU2, TORUS
from komatsu.operator import VectorFieldSpec, diophantine_fit, divisor_spectrum, kernel_set, smoothness_fit
from komatsu.perturbation import conjugation_residual, exp_derivative_bound_check, reduce
from komatsu.solver import adversarial_field, apply, classify_decay, kernel_component, solve
from komatsu.transforms import CoefficientField, EulerPoint, analyze, h_function, synthesize, tr_field
from komatsu.weights import (
    AssociatedFunction,
    WeightSequence,
    associated_value,
    halving_inequality_check,
    polynomial_domination_constant,
    shipped_sequences,
)

RESULTS: list[str] = []

EXAMPLE = VectorFieldSpec(TORUS, SU2, {"pattern": "factorial-pow10"})
Q0 = EXAMPLE.with_shift(q_const=(0, "1/2"))
Q1 = EXAMPLE.with_shift(q_coef=(0, 1))


def _record(n, ok, detail, elapsed, limit):
    ok = ok and elapsed < limit
    line = f"ACCEPTANCE {n:2d} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {limit:.0f}s]"
    RESULTS.append(line)
    print(line)
    return ok


def criterion_1():
    t0 = time.perf_counter()
    worst, ratio_ok = 0.0, True
    rs = np.geomspace(1.0, 1e6, 50)
    k = np.arange(2001)
    for s in (1.0, 2.0, 3.0):
        # brute force over k <= 2000 against the table M_0..M_2000
        af = AssociatedFunction(WeightSequence.gevrey(s, kmax=2000, extendable=False))
        brute = np.array([max(0.0, float(np.max(k * math.log(r) - s * gammaln(k + 1.0)))) for r in rs])
        worst = max(worst, float(np.max(np.abs(np.array([associated_value(af, r) for r in rs]) - brute))))
        full = AssociatedFunction(WeightSequence.gevrey(s))
        big = rs[rs >= 1e4]
        full.ensure(big.max())
        ratio = full(big) / (s * big ** (1.0 / s))
        ratio_ok &= bool(np.all((ratio >= 0.8) & (ratio <= 1.2)))
    ok = worst <= 1e-10 and ratio_ok
    return _record(1, ok, f"max |M - brute| = {worst:.2e} (<= 1e-10), growth ratio in [0.8, 1.2]: {ratio_ok}",
                   time.perf_counter() - t0, 5)


def criterion_2():
    t0 = time.perf_counter()
    worst, finite = 0.0, True
    for seq in shipped_sequences().values():
        af = AssociatedFunction(seq)
        for p, q, d in ((1.0, 1.0, 0.5), (2.0, 0.5, 0.25), (4.0, 2.0, 1.0)):
            finite &= math.isfinite(polynomial_domination_constant(af, p, q, d).C)
        for q in (0.25, 0.5, 1.0, 2.0, 4.0):
            worst = max(worst, halving_inequality_check(af, q).max_violation)
    ok = finite and worst <= 1e-10
    return _record(2, ok, f"domination constants finite: {finite}, max halving violation = {worst:.2e} (<= 1e-10)",
                   time.perf_counter() - t0, 5)


def criterion_3():
    t0 = time.perf_counter()
    k0 = kernel_set(divisor_spectrum(Q0, 20000, 200))
    k1 = kernel_set(divisor_spectrum(Q1, 20000, 200))
    ok = k0.empty and k1.count >= 200
    return _record(3, ok, f"q0 kernel size {k0.count} (empty), q1 kernel size {k1.count} (>= 200), "
                          f"still growing {k1.still_growing}", time.perf_counter() - t0, 60)


def _is_convergent_scale(rec, cf, depth=8):
    k, two_m = rec.freq.xi.label, 2 * (rec.freq.m - 1) - rec.freq.eta.label
    m = Fraction(two_m, 2)
    for n in range(depth):
        p, q = cf.convergent(n)
        t = m / q
        if t > 0 and t.denominator <= 2 and abs(k + Fraction(1, 2) + t * p) == 0:
            return True
    return False


def criterion_4():
    t0 = time.perf_counter()
    sp = divisor_spectrum(Q0, 20000, 200)
    sm = smoothness_fit(sp, (10.0,))
    row = sm.rows[0]
    thresh = row.log_C_levels[0] - math.log(1e3)
    cf = EXAMPLE.a.cf
    wit = [r for r in row.witnesses if r.log_abs_D + 10.0 * math.log(r.w) < thresh and _is_convergent_scale(r, cf)]
    dv = diophantine_fit(sp, AssociatedFunction(WeightSequence.gevrey(2.0)), "roumieu", (0.25, 0.5, 1.0, 2.0))
    stable = all(r.log_C_levels[-1] >= r.log_C_levels[0] - math.log(10.0) for r in dv.rows)
    ok = len(wit) >= 3 and stable
    return _record(4, ok, f"smooth N'=10 witnesses below 1e-3 C: {len(wit)} (>= 3); "
                          f"Gevrey-2 C_N stable within 10x: {stable}", time.perf_counter() - t0, 120)


def _random_admissible(spec, cuts, rng):
    d = CoefficientField.zeros(spec.groups, cuts).to_dense()
    f = CoefficientField.from_dense(spec.groups, rng.normal(size=d.shape) + 1j * rng.normal(size=d.shape), cuts)
    return f - kernel_component(f, spec)


def criterion_5():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    ops = [(Q0, (8, 6)), (VectorFieldSpec(TORUS, TORUS, "2"), (10, 10)),
           (VectorFieldSpec(SU2, SU2, {"pattern": "golden"}, q_coef=(0, 1)), (5, 5))]
    rel, lin = 0.0, 0.0
    for spec, cuts in ops:
        for _ in range(20):
            f = _random_admissible(spec, cuts, rng)
            g = _random_admissible(spec, cuts, rng)
            u = solve(f, spec)
            rel = max(rel, apply(spec, u).max_abs_diff(f) / f.max_abs())
            c = complex(rng.normal(), rng.normal())
            lhs = solve(f + g.scaled(c), spec)
            rhs = u + solve(g, spec).scaled(c)
            lin = max(lin, lhs.max_abs_diff(rhs) / max(1.0, rhs.max_abs()))
    ok = rel <= 1e-12 and lin <= 1e-14
    return _record(5, ok, f"apply(solve f) rel err {rel:.2e} (<= 1e-12), linearity {lin:.2e} (<= 1e-14)",
                   time.perf_counter() - t0, 10)


def criterion_6():
    t0 = time.perf_counter()
    seq = WeightSequence.gevrey(2.0)
    af = AssociatedFunction(seq)
    spec = VectorFieldSpec(TORUS, TORUS, {"pattern": "golden"})
    consistent = diophantine_fit(divisor_spectrum(spec, 400, 400), af, "roumieu").hypoelliptic_consistent
    blocks = {}
    for k in range(-60, 61):
        for m in range(-60, 61):
            if k == 0 and m == 0:
                continue
            w = math.hypot(1, k) + math.hypot(1, m)
            blocks[(k, m)] = np.array([[math.exp(-float(af(2 * w)))]], complex)
    v = classify_decay(solve(CoefficientField((TORUS, TORUS), blocks), spec), af)
    H = seq.H
    ok = consistent and v.label == "Roumieu-function" and 2 / H ** 2 <= v.fitted_N <= 2 * H ** 2
    return _record(6, ok, f"operator consistent: {consistent}; solve(f) label {v.label}, fitted N = {v.fitted_N:.3g} "
                          f"in [{2 / H ** 2:.3g}, {2 * H ** 2:.3g}]", time.perf_counter() - t0, 10)


def criterion_7():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    q = analyze(lambda t, p, th, ps: np.cos(t) + h_function(p, th, ps) + 0.5j + 0 * t, (TORUS, SU2), (1, 0.5),
                tol=1e-14)
    prob = reduce(q, EXAMPLE)
    res = 0.0
    for _ in range(10):
        v = CoefficientField.from_dense((TORUS, SU2), rng.normal(size=(9, 5, 9, 9)) + 1j * rng.normal(size=(9, 5, 9, 9)),
                                        (4, 4))
        res = max(res, conjugation_residual(prob, v))
    dpsi = apply(VectorFieldSpec(SU2), tr_field())
    pts = EulerPoint.random((SU2,), rng, 1000)
    ang = np.array([p.coords[0] for p in pts])
    pw = float(np.max(np.abs(synthesize(dpsi, pts) - h_function(*ang.T))))
    ok = res <= 1e-8 and pw <= 1e-12
    return _record(7, ok, f"conjugation residual {res:.2e} (<= 1e-8), |d_psi tr - h| = {pw:.2e} (<= 1e-12)",
                   time.perf_counter() - t0, 30)


def criterion_8():
    t0 = time.perf_counter()
    rep = exp_derivative_bound_check(np.sin, WeightSequence.gevrey(1.0), h=1.0, max_order=10)
    ok = rep.holds and rep.K <= 10
    return _record(8, ok, f"single K = {rep.K:.4g} (<= 10) for p <= 10", time.perf_counter() - t0, 5)


def criterion_9():
    t0 = time.perf_counter()
    quot = [10, 100, 10**6]
    p, q = [1, quot[0]], [0, 1]
    for a in quot[1:]:
        p.append(a * p[-1] + p[-2])
        q.append(a * q[-1] + q[-2])
    exact = convergents(quot, 2) == list(zip(p[1:], q[1:]))
    cf = named_pattern("factorial-pow10")
    (p1, q1), (_, q2) = cf.convergent(1), cf.convergent(2)
    lo, hi = cf.enclosure(6)
    brack = all(Fraction(1, q1 * (q1 + q2)) <= abs(q1 * x - p1) <= Fraction(1, q2) for x in (lo, hi))
    ok = exact and brack
    return _record(9, ok, f"convergents exact: {exact}; |q1 a - p1| in [1/(q1(q1+q2)), 1/q2]: {brack}",
                   time.perf_counter() - t0, 1)


def criterion_10():
    t0 = time.perf_counter()
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    spec = VectorFieldSpec(TORUS, TORUS, {"pattern": "liouville-demo"})
    v = diophantine_fit(divisor_spectrum(spec, 12000, 12000), af, "roumieu")
    wit = v.witnesses()
    f = adversarial_field(spec, wit, "hypo-roumieu")
    u = solve(f, spec)
    fl = classify_decay(f, af)
    ul = classify_decay(u, af)
    uw = max(abs(abs(u.block((r.freq.xi.label, r.freq.eta.label))[0, 0]) - r.w) / r.w for r in wit)
    f_fun = fl.has("Roumieu-function")
    u_dist = ul.has("distribution-finite-order") and not ul.has("smooth")
    ok = (not v.hypoelliptic_consistent) and f_fun and u_dist and uw < 1e-12
    return _record(10, ok, f"witnesses {len(wit)}; f label {fl.label} (needs Roumieu-function); u label {ul.label} "
                           f"(needs non-smooth distribution); max | |u|/w - 1 | = {uw:.1e}",
                   time.perf_counter() - t0, 30)


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8,
            criterion_9, criterion_10]


@pytest.mark.parametrize("n", range(1, 11))
def test_criterion(n):
    assert CRITERIA[n - 1]()


if __name__ == "__main__":
    for c in CRITERIA:
        c()
