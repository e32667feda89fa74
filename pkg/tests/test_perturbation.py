import math

import numpy as np
import pytest
from scipy.special import iv

from komatsu.duals import SU2, TORUS
from komatsu.operator import VectorFieldSpec
from komatsu.perturbation import (
    BandOverflowError,
    conjugation_residual,
    exp_derivative_bound_check,
    exp_field,
    multiply,
    reduce,
    solve_perturbed,
    sup_bound,
)
from komatsu.solver import InadmissibleError, apply
from komatsu.transforms import CoefficientField, analyze, h_function, tr_function
from komatsu.weights import WeightSequence

X = VectorFieldSpec(TORUS, SU2, {"pattern": "factorial-pow10"})


def example_q(c=0.5j):
    return analyze(lambda t, p, th, ps: np.cos(t) + h_function(p, th, ps) + c + 0 * t, (TORUS, SU2), (1, 0.5),
                   tol=1e-14)


def test_reduce_example():
    prob = reduce(example_q(), X)
    assert prob.q0 == pytest.approx(0.5j, abs=1e-15)
    assert prob.shifted.q_const.im == 0.5 and prob.shifted.q_const.re == 0
    a = complex(X.a).real
    ref = analyze(lambda t, p, th, ps: np.sin(t) + tr_function(p, th, ps) / a + 0 * t, (TORUS, SU2), (1, 0.5),
                  tol=1e-14)
    assert prob.Q.max_abs_diff(ref) < 1e-15
    assert prob.primitive_residual < 1e-15


def test_reduce_rejects_shifted_or_kernel():
    with pytest.raises(ValueError):
        reduce(example_q(), X.with_shift(q_const=(0, 1)))
    T2 = VectorFieldSpec(TORUS, TORUS, "2")
    q = CoefficientField.single((TORUS, TORUS), (2, -1))
    with pytest.raises(InadmissibleError):
        reduce(q, T2)
    assert not reduce(q, T2, strict=False).has_primitive


def test_exp_matches_bessel():
    # e^{sin t} = sum_k I_k(1) (-i)^k ... ; for cos t: e^{cos t} = sum I_k(1) e^{ikt}
    Q = analyze(lambda t: np.cos(t), (TORUS,), (1,), tol=1e-15)
    E = exp_field(Q, tol=1e-15).field
    for k in range(-8, 9):
        assert E.block((k,))[0, 0] == pytest.approx(iv(abs(k), 1.0), abs=1e-14)


def test_multiply_band_and_overflow(rng):
    a = CoefficientField.single((TORUS, SU2), (1, 1), 1, 2, 1.0)
    b = CoefficientField.single((TORUS, SU2), (-1, 1), 2, 1, 1.0)
    p = multiply(a, b)
    assert max(abs(k[0]) for k in p.keys()) <= 2 and max(k[1] for k in p.keys()) <= 2
    big = CoefficientField.zeros((TORUS,), (40,))
    with pytest.raises(BandOverflowError):
        multiply(big, big)


def test_sup_bound_dominates():
    Q = example_q(0.0)
    grid = np.linspace(0, 2 * np.pi, 17)
    vals = np.cos(grid)[:, None] + h_function(0.3, 1.1, grid)[None, :]
    assert np.abs(vals).max() <= sup_bound(Q) + 1e-12


def test_conjugation_residual(rng):
    prob = reduce(example_q(), X)
    for _ in range(2):
        v = CoefficientField.from_dense((TORUS, SU2), rng.normal(size=(9, 5, 9, 9)) + 0j, (4, 4))
        assert conjugation_residual(prob, v) < 1e-8


def test_solve_perturbed_inverts_band_interior(rng):
    prob = reduce(example_q(), X)
    f = CoefficientField.single((TORUS, SU2), (0, 1), 1, 1, 1.0)
    u = solve_perturbed(prob, f)
    from komatsu.perturbation import apply_shifted

    back = apply_shifted(prob.X, prob.q, u).restricted(cuts=(2, 2))
    assert back.max_abs_diff(f.restricted(cuts=(2, 2))) < 1e-6


def test_envelope_sin():
    rep = exp_derivative_bound_check(np.sin, WeightSequence.gevrey(1.0), h=1.0)
    assert rep.holds and rep.K <= 10
    assert rep.K == pytest.approx(math.e, rel=1e-9)  # the p = 0 term: sup e^{sin t}
    assert max(rep.f_certificate) <= 1.0 + 1e-12


def test_envelope_violation_reports_witness():
    rep = exp_derivative_bound_check(lambda t: 3 * np.sin(4 * t), WeightSequence.gevrey(1.0), h=1.0, K_max=10)
    assert not rep.holds
    assert rep.witness_order is not None
