"""Low order perturbations L_q = X + q.

With a primitive Q of q - q0 (X Q = q - q0, q0 the mean of q) one has
L_q (e^{-Q} v) = e^{-Q} L_{q0} v, which reduces L_q to a constant shift.
Pointwise products leave coefficient space: both factors are synthesised on a
grid exact for the sum of their band limits and the product is analysed back.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .duals import SU2, TORUS
from .operator import (
    DEFAULT_N_GRID,
    DiophantineVerdict,
    GaussianRational,
    VectorFieldSpec,
    diophantine_fit,
    divisor_spectrum,
)
from .solver import InadmissibleError, apply, check_admissible, solve
from .transforms import CoefficientField, Grid, analyze, synthesize_grid
from .weights import AssociatedFunction, WeightSequence

__all__ = [
    "BandOverflowError",
    "PerturbationProblem",
    "reduce",
    "multiply",
    "apply_shifted",
    "exp_field",
    "conjugation_residual",
    "solve_perturbed",
    "exp_derivative_bound_check",
    "constant_shift_analyze",
    "sup_bound",
]

MAX_CUT = 64


class BandOverflowError(ValueError):
    pass


def _trivial_key(groups):
    return tuple(0 for _ in groups)


def _snap(z: complex, tol=1e-13) -> GaussianRational:
    """Nearby Gaussian rational with a small denominator, else the exact binary value."""
    parts = []
    for x in (z.real, z.imag):
        f = Fraction(x).limit_denominator(1 << 20)
        parts.append(f if abs(float(f) - x) <= tol * max(1.0, abs(x)) else Fraction(x))
    return GaussianRational(*parts)


@dataclass(frozen=True, eq=False)
class PerturbationProblem:
    X: VectorFieldSpec
    q: CoefficientField
    q0: complex
    Q: CoefficientField | None
    shifted: VectorFieldSpec
    has_primitive: bool
    primitive_residual: float | None
    note: str = ""

    def to_dict(self):
        return {
            "X": self.X.describe(),
            "q0": [self.q0.real, self.q0.imag],
            "has_primitive": self.has_primitive,
            "primitive_residual": self.primitive_residual,
            "Q_band": None if self.Q is None else list(self.Q.limits),
            "shifted": self.shifted.describe(),
            "note": self.note,
        }


def reduce(q: CoefficientField, X: VectorFieldSpec, strict: bool = True) -> PerturbationProblem:
    """Split q = q0 + X Q with q0 the trivial coefficient and Q the canonical solution."""
    if X.q_const.is_zero() is False or X.q_coef.is_zero() is False:
        raise ValueError("X must be an unshifted vector field")
    key = _trivial_key(q.groups)
    q0 = complex(q.block(key)[0, 0])
    rest = dict(q.blocks)
    if key in rest:
        rest[key] = np.zeros_like(rest[key])
    qq = CoefficientField(q.groups, rest, q.cuts).pruned(0.0)
    shifted = X.with_shift(q_const=_snap(q0))
    rep = check_admissible(qq, X)
    if not rep.admissible:
        if strict:
            raise InadmissibleError("q - q0 has no primitive: it meets kernel frequencies of X")
        return PerturbationProblem(X, q, q0, None, shifted, False, None, "no primitive in class")
    Q = solve(qq, X, check=False)
    res = apply(X, Q).max_abs_diff(qq)
    return PerturbationProblem(X, q, q0, Q, shifted, True, res)


# --------------------------------------------------------------------------
# pointwise algebra


def multiply(a: CoefficientField, b: CoefficientField, cuts=None) -> CoefficientField:
    """Pointwise product, exact for band-limited factors; optionally truncated to ``cuts``."""
    if a.groups != b.groups:
        raise ValueError("group mismatch")
    full = tuple(x + y for x, y in zip(a.cuts, b.cuts))
    if max(full) > MAX_CUT:
        raise BandOverflowError(f"product band {full} exceeds the supported limit {MAX_CUT}")
    grid = Grid.for_band(a.groups, full)
    va = synthesize_grid(CoefficientField(a.groups, a.blocks, full), grid)
    vb = synthesize_grid(CoefficientField(b.groups, b.blocks, full), grid)
    out = analyze(va * vb, a.groups, cuts=full, grid=grid)
    return out if cuts is None else out.restricted(cuts=cuts)


def sup_bound(Q: CoefficientField) -> float:
    """Upper bound of sup|Q| by sum d |Tr(U F)| <= sum d sqrt(d) ||F||_HS."""
    s = 0.0
    for k, b in Q.blocks.items():
        d = Q.block_dim(k)
        s += d * math.sqrt(d) * float(np.linalg.norm(b))
    return s


@dataclass(frozen=True)
class ExpResult:
    field: CoefficientField
    order: int
    tail_bound: float


def exp_field(Q: CoefficientField, order: int | None = None, cuts=None, sign: float = 1.0,
              tol: float = 1e-12) -> ExpResult:
    """e^{sign Q} by its Taylor series up to ``order`` (adaptive when None).

    The partial sum is a polynomial in Q, hence band-limited by order * band(Q);
    it is computed pointwise on a grid exact for that band and analysed back,
    then truncated to ``cuts``. The tail bound is B^{P+1}/(P+1)! e^B with B a
    bound of sup|Q|.
    """
    B = sup_bound(Q)

    def tail(P):
        return B ** (P + 1) / math.factorial(P + 1) * math.exp(B)

    if order is None:
        P = 1
        while tail(P) >= tol:
            P += 1
            if P > 200:
                raise ValueError("exponential series does not reach the tolerance")
    else:
        if order < 1:
            raise ValueError("order must be >= 1")
        P = order
    full = tuple(P * c for c in Q.cuts)
    if max(full) > MAX_CUT:
        if cuts is None:
            raise BandOverflowError(f"e^Q band {full} exceeds {MAX_CUT}; pass output cuts")
        full = tuple(min(f, max(c, MAX_CUT // 2)) for f, c in zip(full, cuts))
    grid = Grid.for_band(Q.groups, full)
    v = sign * synthesize_grid(CoefficientField(Q.groups, Q.blocks, full), grid)
    term = np.ones_like(v)
    acc = np.ones_like(v)
    for p in range(1, P + 1):
        term = term * v / p
        acc = acc + term
    out = analyze(acc, Q.groups, cuts=full, grid=grid)
    if cuts is not None:
        out = out.restricted(cuts=cuts)
    return ExpResult(out, P, tail(P))


def apply_shifted(spec: VectorFieldSpec, q: CoefficientField | None, u: CoefficientField,
                  cuts=None) -> CoefficientField:
    """(X + q) u with X given by ``spec`` (which may carry a constant shift)."""
    out = apply(spec, u)
    if q is not None and q.blocks:
        qu = multiply(q, u)
        out = CoefficientField(u.groups, out.blocks, qu.cuts) + qu
    return out if cuts is None else out.restricted(cuts=cuts)


def _e_minus_Q(prob: PerturbationProblem, cuts):
    if prob.Q is None:
        raise ValueError("problem has no primitive Q")
    return exp_field(prob.Q, cuts=cuts, sign=-1.0).field


def conjugation_residual(prob: PerturbationProblem, v: CoefficientField, e_cuts=None) -> float:
    """max |L_q(e^{-Q} v) - e^{-Q} L_{q0} v| over coefficients, relative to the right side.

    ``e_cuts`` truncates e^{-Q} (default: 14 torus modes / l <= 6 beyond Q's band).
    """
    if prob.Q is None:
        raise ValueError("problem has no primitive Q")
    if not prob.Q.blocks:
        return 0.0
    if e_cuts is None:
        e_cuts = tuple((14 if g == TORUS else 12) for g in prob.Q.groups)
    E = _e_minus_Q(prob, e_cuts)
    Ev = multiply(E, v)
    lhs = apply_shifted(prob.X, prob.q, Ev)
    rhs = multiply(E, apply(prob.shifted, v))
    scale = max(rhs.max_abs(), 1e-300)
    return lhs.max_abs_diff(rhs) / scale


def solve_perturbed(prob: PerturbationProblem, f: CoefficientField, e_cuts=None) -> CoefficientField:
    """u = e^{-Q} u0 with L_{q0} u0 = e^{Q} f (band-truncated)."""
    if prob.Q is None:
        raise ValueError("problem has no primitive Q")
    if e_cuts is None:
        e_cuts = tuple((14 if g == TORUS else 12) for g in prob.Q.groups)
    Ep = exp_field(prob.Q, cuts=e_cuts, sign=1.0).field
    Em = exp_field(prob.Q, cuts=e_cuts, sign=-1.0).field
    g = multiply(Ep, f)
    u0 = solve(g, prob.shifted)
    return multiply(Em, u0)


# --------------------------------------------------------------------------
# derivative envelope of e^f on the torus


@dataclass(frozen=True)
class EnvelopeReport:
    orders: tuple
    sup_derivative: tuple
    K_per_order: tuple
    K: float
    K_max: float
    h: float
    holds: bool
    f_certificate: tuple  # (C, h) check for f itself: max_p sup|f^(p)| / (C h^p M_p)
    witness_order: int | None
    witness_point: float | None

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def _denoise(c, rel=1e-15):
    """Drop coefficients at roundoff level; (ik)^p would otherwise amplify them."""
    c = c.copy()
    c[np.abs(c) <= rel * np.abs(c).max()] = 0.0
    return c


def exp_derivative_bound_check(f, seq: WeightSequence, h: float = 1.0, C: float = 1.0, max_order: int = 10,
                               K_max: float = 10.0, n_samples: int = 1024) -> EnvelopeReport:
    """Spectral derivatives of e^f against K (2h)^p M_p for p <= max_order.

    ``f`` is a callable of t on the circle (or a torus CoefficientField).
    K per order is sup|d^p e^f| / ((2h)^p M_p); the envelope holds with the
    single constant K = max over orders when K <= K_max. The certificate
    sup|f^(p)| <= C h^p M_p is evaluated as well.
    """
    if max_order > 10:
        raise ValueError("orders above 10 are out of scope")
    t = 2 * math.pi * np.arange(n_samples) / n_samples
    if isinstance(f, CoefficientField):
        if f.groups != (TORUS,):
            raise ValueError("torus field expected")
        vals = np.zeros(n_samples, complex)
        for (k,), b in f.blocks.items():
            vals += b[0, 0] * np.exp(1j * k * t)
    else:
        vals = np.asarray(f(t), dtype=complex) * np.ones(n_samples)
    k = np.fft.fftfreq(n_samples, 1.0 / n_samples)
    fhat = _denoise(np.fft.fft(vals) / n_samples)
    ehat = _denoise(np.fft.fft(np.exp(vals)) / n_samples)
    logm = seq.log_m
    sups, Ks, fc = [], [], []
    wit_p, wit_t, worst = None, None, -math.inf
    for p in range(max_order + 1):
        d = np.fft.ifft(ehat * (1j * k) ** p) * n_samples
        a = np.abs(d)
        j = int(np.argmax(a))
        sups.append(float(a[j]))
        env = (2 * h) ** p * math.exp(logm[p])
        Kp = float(a[j]) / env
        Ks.append(Kp)
        if Kp > worst:
            worst, wit_p, wit_t = Kp, p, float(t[j])
        df = np.abs(np.fft.ifft(fhat * (1j * k) ** p) * n_samples)
        fc.append(float(df.max()) / (C * h ** p * math.exp(logm[p])))
    K = max(Ks)
    holds = K <= K_max
    return EnvelopeReport(tuple(range(max_order + 1)), tuple(sups), tuple(Ks), K, K_max, h, holds, tuple(fc),
                          None if holds else wit_p, None if holds else wit_t)


# --------------------------------------------------------------------------
# constant shifts


def constant_shift_analyze(X: VectorFieldSpec, q, weights: AssociatedFunction, mode: str = "roumieu",
                           cutoff: float = 20, n_grid=DEFAULT_N_GRID) -> DiophantineVerdict:
    """Diophantine verdict for X + q with divisor lambda - i q on a single group."""
    if X.g2 is not None:
        raise ValueError("constant_shift_analyze expects a single group operator")
    g = GaussianRational.of(q) if not isinstance(q, complex) else _snap(q)
    spec = X.with_shift(q_const=g)
    return diophantine_fit(divisor_spectrum(spec, cutoff), weights, mode, n_grid)
