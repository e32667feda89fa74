import math

import numpy as np
import pytest

from komatsu.duals import SU2, TORUS
from komatsu.transforms import (
    AliasingWarning,
    CoefficientField,
    EulerPoint,
    Grid,
    analyze,
    h_field,
    h_function,
    plancherel_norm,
    quadrature_norm,
    su2_matrix,
    synthesize,
    tr_field,
    tr_function,
    wigner_d,
)

# d^j_{mn}(0.7), evaluated symbolically and frozen; (2j, 2m, 2n, value)
FROZEN_D = [
    (1, 1, -1, -0.34289780745545134),
    (2, 2, 0, -0.45553069520608575),
    (2, 0, 0, 0.7648421872844884),
    (3, 1, -3, 0.19130573264292788),
    (4, 4, -2, -0.07574641112173049),
    (5, -3, 1, 0.3767720237798166),
    (6, 2, -4, -0.1972854617961712),
    (10, 6, 4, -0.18328112321555126),
]


@pytest.mark.parametrize("T,m2,n2,val", FROZEN_D)
def test_wigner_frozen(T, m2, n2, val):
    d = wigner_d(T, 0.7)
    assert d[(m2 + T) // 2, (n2 + T) // 2] == pytest.approx(val, abs=1e-13)


def test_wigner_unitary_high_l():
    th = np.linspace(0.05, 3.1, 7)
    for T in (9, 40, 81):
        d = wigner_d(T, th)
        eye = np.eye(T + 1)
        for k in range(th.size):
            assert np.max(np.abs(d[k] @ d[k].T - eye)) < 1e-11


def test_su2_matrix_homomorphism(rng):
    # t^l(x) t^l(y) = t^l(xy) checked through the spin-1/2 matrices
    for _ in range(5):
        a = rng.uniform(0, 2 * math.pi, 3)
        a[1] = rng.uniform(0, math.pi)
        U = su2_matrix(1, *a)
        assert np.allclose(U @ U.conj().T, np.eye(2), atol=1e-14)
        assert abs(np.linalg.det(U) - 1) < 1e-14


def test_tr_and_h_closed_forms(rng):
    pts = EulerPoint.random((SU2,), rng, 1000)
    ang = np.array([p.coords[0] for p in pts])
    phi, th, psi = ang.T
    tr = synthesize(tr_field(), pts)
    h = synthesize(h_field(), pts)
    assert np.max(np.abs(tr - tr_function(phi, th, psi))) < 1e-12
    assert np.max(np.abs(h - h_function(phi, th, psi))) < 1e-12
    # d/dpsi tr by hand: -cos(theta/2) sin((phi+psi)/2)
    assert np.max(np.abs(h_function(phi, th, psi) + np.cos(th / 2) * np.sin((phi + psi) / 2))) < 1e-15


def test_analyze_cos_times_tr():
    f = analyze(lambda t, p, th, ps: np.cos(t) * tr_function(p, th, ps), (TORUS, SU2), (2, 1), tol=1e-14)
    assert sorted(f.keys()) == [(-1, 1), (1, 1)]
    np.testing.assert_allclose(f.block((1, 1)), np.eye(2) / 4, atol=1e-15)


def random_field(groups, cuts, rng):
    f = CoefficientField.zeros(groups, cuts)
    dense = f.to_dense()
    dense = rng.normal(size=dense.shape) + 1j * rng.normal(size=dense.shape)
    return CoefficientField.from_dense(groups, dense, cuts)


@pytest.mark.parametrize("groups,cuts", [((TORUS,), (6,)), ((SU2,), (5,)), ((TORUS, SU2), (3, 4)),
                                         ((TORUS, TORUS), (4, 3)), ((SU2, SU2), (2, 3))])
def test_roundtrip_and_plancherel(groups, cuts, rng):
    f = random_field(groups, cuts, rng)
    grid = Grid.for_band(groups, cuts)
    from komatsu.transforms import synthesize_grid

    v = synthesize_grid(f, grid)
    g = analyze(v, groups, cuts=cuts, grid=grid)
    assert g.max_abs_diff(f) < 1e-12 * max(1.0, f.max_abs())
    assert plancherel_norm(f) == pytest.approx(quadrature_norm(f), rel=1e-12)


def test_pointwise_synthesis_matches_grid(rng):
    groups, cuts = (TORUS, SU2), (2, 3)
    f = random_field(groups, cuts, rng)
    pts = EulerPoint.random(groups, rng, 20)
    vals = synthesize(f, pts)
    # direct sum over blocks with the explicit matrices
    for p, v in zip(pts, vals):
        t, (phi, th, psi) = p.coords
        tot = 0j
        for key in f.keys():
            k, two_l = key
            A = np.exp(1j * k * t) * su2_matrix(two_l, phi, th, psi)
            tot += (two_l + 1) * np.trace(A @ f.block(key))
        assert abs(tot - v) < 1e-11


def test_aliasing_warning():
    grid = Grid.for_band((TORUS,), (2,))
    with pytest.warns(AliasingWarning):
        analyze(lambda t: np.cos(t), (TORUS,), cuts=(5,), grid=grid)


def test_csv_roundtrip(tmp_path, rng):
    f = random_field((TORUS, SU2), (2, 2), rng)
    p = tmp_path / "f.csv"
    f.to_csv(p)
    g = CoefficientField.from_csv(p)
    assert g.groups == f.groups
    assert g.max_abs_diff(f) == 0.0


def test_field_algebra(rng):
    f = random_field((SU2,), (3,), rng)
    g = random_field((SU2,), (3,), rng)
    assert (f + g - g).max_abs_diff(f) < 1e-14
    assert f.scaled(2.0).max_abs_diff(f + f) < 1e-14
    assert f.restricted(cuts=(1,)).keys() == [(0,), (1,)]
