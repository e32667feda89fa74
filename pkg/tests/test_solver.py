import math

import numpy as np
import pytest

from komatsu.duals import SU2, TORUS
from komatsu.operator import VectorFieldSpec, diophantine_fit, divisor_spectrum
from komatsu.solver import (
    LABELS,
    InadmissibleError,
    InsufficientSpanError,
    adversarial_field,
    apply,
    block_divisors,
    check_admissible,
    classify_decay,
    kernel_component,
    solve,
)
from komatsu.transforms import CoefficientField
from komatsu.weights import AssociatedFunction, WeightSequence

OPERATORS = [
    VectorFieldSpec(TORUS, SU2, {"pattern": "factorial-pow10"}, q_const=(0, "1/2")),
    VectorFieldSpec(TORUS, TORUS, "2"),
    VectorFieldSpec(SU2, SU2, {"pattern": "golden"}, q_coef=(0, 1)),
]


def random_admissible(spec, cuts, rng):
    f = CoefficientField.zeros(spec.groups, cuts)
    d = f.to_dense()
    f = CoefficientField.from_dense(spec.groups, rng.normal(size=d.shape) + 1j * rng.normal(size=d.shape), cuts)
    return f - kernel_component(f, spec)


@pytest.mark.parametrize("spec", OPERATORS)
def test_roundtrip_and_linearity(spec, rng):
    cuts = tuple(6 if g == TORUS else 4 for g in spec.groups)
    for _ in range(5):
        f = random_admissible(spec, cuts, rng)
        g = random_admissible(spec, cuts, rng)
        u = solve(f, spec)
        assert apply(spec, u).max_abs_diff(f) <= 1e-12 * f.max_abs()
        lin = solve(f + g.scaled(2.5 - 1j), spec)
        ref = u + solve(g, spec).scaled(2.5 - 1j)
        assert lin.max_abs_diff(ref) <= 1e-14 * max(1.0, ref.max_abs())
        # canonical solution vanishes on kernel rows
        assert kernel_component(u, spec).max_abs() == 0.0


def test_inadmissible():
    spec = VectorFieldSpec(TORUS, TORUS, "2")
    f = CoefficientField.single((TORUS, TORUS), (2, -1))  # k + 2m = 0
    rep = check_admissible(f, spec)
    assert not rep.admissible and rep.offending[0][0] == (2, -1)
    with pytest.raises(InadmissibleError):
        solve(f, spec)
    u = solve(f, spec, check=False)
    assert u.max_abs() == 0.0


def test_block_divisors_values():
    spec = VectorFieldSpec(TORUS, SU2, "3", q_const=(0, "1/2"))
    D, zero, _ = block_divisors(spec, (1, 2))
    # rows m = -1, 0, 1: D = k + 3m + 1/2
    np.testing.assert_allclose(D.real, [1 - 3 + 0.5, 1.5, 4.5])
    assert not zero.any()


def _decay_field(fn, n=60):
    blocks = {}
    for k in range(-n, n + 1):
        for l in range(-n, n + 1):
            w = math.hypot(1, k) + math.hypot(1, l)
            blocks[(k, l)] = np.array([[fn(w)]], complex)
    return CoefficientField((TORUS, TORUS), blocks)


def test_classify_roumieu_function():
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    v = classify_decay(_decay_field(lambda w: math.exp(-af(2 * w))), af)
    assert v.label == "Roumieu-function"
    H = 2.0 ** 2
    assert 2 / H ** 2 <= v.fitted_N <= 2 * H ** 2
    assert v.labels == LABELS[1:]


def _line_field(fn, n=20000):
    # a long torus line: polynomial and subexponential rates separate only at large w
    return CoefficientField((TORUS,), {(k,): np.array([[fn(math.hypot(1, k))]], complex) for k in range(-n, n + 1)})


def test_small_window_limitation():
    # on w <= 120, w^-3 is indistinguishable from exp(-M(w/16)): the fit says function
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    assert classify_decay(_decay_field(lambda w: w ** -3), af).label == "Roumieu-function"


def test_classify_polynomial():
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    v = classify_decay(_line_field(lambda w: w ** -3), af)
    assert v.label == "distribution-finite-order"
    grow = classify_decay(_line_field(lambda w: w ** 2.0), af)
    assert grow.label == "distribution-finite-order"
    assert grow.fitted_order == 2.0


def test_classify_ultradistribution():
    af = AssociatedFunction(WeightSequence.gevrey(1.0))
    v = classify_decay(_line_field(lambda w: math.exp(min(af(w), 600.0)), n=400), af)
    assert v.label == "Beurling-ultradistribution"
    assert not v.has("Roumieu-ultradistribution")


def test_classify_insufficient():
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    with pytest.raises(InsufficientSpanError):
        classify_decay(_decay_field(lambda w: 1.0, n=2), af)


def test_adversarial_fields_shape():
    spec = VectorFieldSpec(TORUS, TORUS, {"pattern": "liouville-demo"})
    sp = divisor_spectrum(spec, 3000, 3000)
    v = diophantine_fit(sp, AssociatedFunction(WeightSequence.gevrey(2.0)), "roumieu")
    wit = v.witnesses()
    assert wit, "liouville coupling must produce witnesses"
    f = adversarial_field(spec, wit, "hypo-roumieu")
    u = solve(f, spec)
    for rec in wit:
        key = (rec.freq.xi.label, rec.freq.eta.label)
        assert abs(u.block(key)[0, 0]) == pytest.approx(rec.w, rel=1e-12)
    g = adversarial_field(spec, wit, "solv-roumieu")
    assert all(abs(b[0, 0]) == 1.0 for b in g.blocks.values())
    with pytest.raises(ValueError):
        adversarial_field(spec, wit, "nope")
