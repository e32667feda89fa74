"""The vector field L = X1 + a X2 (+ constant shift q) as a spectral multiplier.

On the row (m, r) of the block (xi, eta) the symbol acts by i D with

    D = lambda_m(xi) + a mu_r(eta) - i q,

where lambda = c1 * k (torus) or c1 * m (SU(2)), likewise mu. With the shift
written as q = q_const + q_coef * a this reads D = P + a B, where P and B are
Gaussian rationals. That split drives exact zero detection:

* irrational a (continued fraction pattern): D = 0 iff P = 0 and B = 0,
* rational a = u/v: D = 0 iff vP + uB = 0, checked in integers,
* float a: no exact zeros; tiny values are flagged numerically ambiguous.

Magnitudes come from a float scan; pairs whose float value shows heavy
cancellation are re-evaluated at KOMATSU_PRECISION_BITS (default 256) with the
coupling taken from a certified convergent, raising precision as needed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import mpmath
import numpy as np

from . import _accel
from .diophantine import ContinuedFraction, PrecisionError, log_convergents, named_pattern
from .duals import SU2, TORUS, ProductFrequency, RepIndex, factor_rows, weight
from .report import int_text
from .weights import AssociatedFunction

__all__ = [
    "Coupling",
    "GaussianRational",
    "VectorFieldSpec",
    "DivisorRecord",
    "DivisorSpectrum",
    "KernelCensus",
    "DiophantineVerdict",
    "SmoothnessVerdict",
    "divisor_spectrum",
    "kernel_set",
    "diophantine_fit",
    "smoothness_fit",
    "convergent_extrapolation",
    "precision_bits",
    "DEFAULT_N_GRID",
]

DEFAULT_N_GRID = tuple(2.0 ** j for j in range(-4, 5))
CAND_REL = 2.0 ** -20  # float cancellation beyond 20 bits triggers high precision
AMB_TOL = 1e-13
MAX_BITS = 1 << 16
_INT_BOUND = 1 << 62


def precision_bits() -> int:
    return max(64, int(os.environ.get("KOMATSU_PRECISION_BITS", "256")))


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(x)
    return Fraction(str(x)) if isinstance(x, str) else Fraction(x)


@dataclass(frozen=True)
class GaussianRational:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    @classmethod
    def of(cls, x) -> "GaussianRational":
        if isinstance(x, GaussianRational):
            return x
        if isinstance(x, complex):
            return cls(Fraction(x.real), Fraction(x.imag))
        if isinstance(x, (list, tuple)):
            return cls(_frac(x[0]), _frac(x[1]))
        return cls(_frac(x), Fraction(0))

    def __complex__(self):
        return complex(float(self.re), float(self.im))

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def __str__(self):
        return f"{self.re}+{self.im}i"


class Coupling:
    """The coupling a: exact rational, continued fraction, or plain float/complex."""

    def __init__(self, value=None, cf: ContinuedFraction | None = None):
        self.cf = None
        self.rational: Fraction | None = None
        self.float_value: complex | None = None
        if cf is not None:
            if cf.is_rational:
                self.rational = cf.value()
            else:
                self.cf = cf
        elif isinstance(value, (Fraction, int)) or isinstance(value, str):
            self.rational = _frac(value)
        elif isinstance(value, (float, complex)):
            self.float_value = complex(value)
        else:
            raise TypeError(f"unsupported coupling {value!r}")

    @classmethod
    def parse(cls, obj) -> "Coupling":
        """JSON forms: number, "p/q" or decimal string, {"cf": [...]}, {"pattern": name}, {"float": x}."""
        if isinstance(obj, Coupling):
            return obj
        if isinstance(obj, ContinuedFraction):
            return cls(cf=obj)
        if isinstance(obj, dict):
            if "cf" in obj:
                return cls(cf=ContinuedFraction(quotients=[int(a) for a in obj["cf"]]))
            if "pattern" in obj:
                return cls(cf=named_pattern(obj["pattern"]))
            if "rational" in obj:
                return cls(_frac(obj["rational"]))
            if "float" in obj:
                v = obj["float"]
                return cls(complex(*v) if isinstance(v, list) else float(v))
            raise ValueError(f"cannot parse coupling {obj!r}")
        if isinstance(obj, bool):
            raise TypeError("boolean coupling")
        if isinstance(obj, (int, str, Fraction)):
            return cls(obj)
        if isinstance(obj, float):
            return cls(obj)
        raise TypeError(f"cannot parse coupling {obj!r}")

    @property
    def kind(self) -> str:
        if self.cf is not None:
            return "cf"
        return "rational" if self.rational is not None else "float"

    @property
    def is_real(self) -> bool:
        return self.float_value is None or self.float_value.imag == 0

    def __complex__(self):
        if self.cf is not None:
            return complex(float(self.cf.mp_value(80)))
        if self.rational is not None:
            return complex(float(self.rational))
        return self.float_value

    def mp(self, bits: int):
        if self.cf is not None:
            return self.cf.mp_value(bits)
        with mpmath.workprec(bits):
            if self.rational is not None:
                return mpmath.mpf(self.rational.numerator) / self.rational.denominator
            v = self.float_value
            return mpmath.mpc(v.real, v.imag) if v.imag else mpmath.mpf(v.real)

    def describe(self):
        if self.cf is not None:
            return {"kind": "cf", "name": self.cf.name}
        if self.rational is not None:
            return {"kind": "rational", "value": str(self.rational)}
        v = self.float_value
        return {"kind": "float", "value": [v.real, v.imag]}


@dataclass(frozen=True, eq=False)
class VectorFieldSpec:
    """L = c1 X1 + a c2 X2 - i(...) bookkeeping, see module docstring.

    ``g2`` None means a single group operator X + q (then ``a`` is unused).
    ``q_const`` and ``q_coef`` give the shift q = q_const + q_coef * a.
    """

    g1: str
    g2: str | None = None
    a: Coupling = field(default_factory=lambda: Coupling(0))
    c1: Fraction = Fraction(1)
    c2: Fraction = Fraction(1)
    q_const: GaussianRational = GaussianRational()
    q_coef: GaussianRational = GaussianRational()

    def __post_init__(self):
        for g in (self.g1, self.g2):
            if g is not None and g not in (TORUS, SU2):
                raise ValueError(f"unknown group {g!r}")
        object.__setattr__(self, "a", Coupling.parse(self.a))
        object.__setattr__(self, "c1", _frac(self.c1))
        object.__setattr__(self, "c2", _frac(self.c2))
        object.__setattr__(self, "q_const", GaussianRational.of(self.q_const))
        object.__setattr__(self, "q_coef", GaussianRational.of(self.q_coef))
        if self.g2 is None and not self.q_coef.is_zero():
            raise ValueError("a single group operator cannot couple its shift to a")

    # norms of the factor fields: |lambda| <= |c| <xi>
    @property
    def norms(self) -> tuple[float, float]:
        return abs(float(self.c1)), abs(float(self.c2))

    @property
    def groups(self) -> tuple[str, ...]:
        return (self.g1,) if self.g2 is None else (self.g1, self.g2)

    @classmethod
    def from_json(cls, obj: dict) -> "VectorFieldSpec":
        groups = obj["groups"]
        q = obj.get("q", {})
        if not isinstance(q, dict):
            q = {"const": q}
        return cls(
            g1=groups[0],
            g2=groups[1] if len(groups) > 1 else None,
            a=Coupling.parse(obj.get("a", 0)),
            c1=_frac(obj.get("c1", 1)),
            c2=_frac(obj.get("c2", 1)),
            q_const=GaussianRational.of(q.get("const", 0)),
            q_coef=GaussianRational.of(q.get("a_coef", 0)),
        )

    def describe(self) -> dict:
        return {
            "groups": list(self.groups),
            "a": self.a.describe(),
            "c1": str(self.c1),
            "c2": str(self.c2),
            "q_const": str(self.q_const),
            "q_coef": str(self.q_coef),
            "divisor": "D = c1*lambda + a*c2*mu - i*(q_const + q_coef*a)",
        }

    def with_shift(self, q_const=None, q_coef=None) -> "VectorFieldSpec":
        return VectorFieldSpec(self.g1, self.g2, self.a, self.c1, self.c2,
                               self.q_const if q_const is None else GaussianRational.of(q_const),
                               self.q_coef if q_coef is None else GaussianRational.of(q_coef))

    # ---- exact parts ---------------------------------------------------------
    def parts(self, x1_2: int, x2_2: int = 0) -> tuple[Fraction, Fraction, Fraction, Fraction]:
        """(Re P, Im P, Re B, Im B) for doubled row values (2k or 2m)."""
        rp = self.c1 * Fraction(x1_2, 2) + self.q_const.im
        ip = -self.q_const.re
        if self.g2 is None:
            return rp, ip, Fraction(0), Fraction(0)
        rb = self.c2 * Fraction(x2_2, 2) + self.q_coef.im
        ib = -self.q_coef.re
        return rp, ip, rb, ib

    def exact_zero(self, x1_2: int, x2_2: int = 0) -> bool | None:
        """True/False when decidable exactly, None for float couplings."""
        rp, ip, rb, ib = self.parts(x1_2, x2_2)
        if self.g2 is None:
            return rp == 0 and ip == 0
        if self.a.kind == "cf":
            return rp == 0 and ip == 0 and rb == 0 and ib == 0
        if self.a.kind == "rational":
            a = self.a.rational
            return rp + a * rb == 0 and ip + a * ib == 0
        return None

    def divisor_mp(self, x1_2: int, x2_2: int = 0, bits: int | None = None):
        """High precision D with adaptive precision; returns an mpmath number."""
        bits = precision_bits() if bits is None else bits
        rp, ip, rb, ib = self.parts(x1_2, x2_2)
        scale = abs(float(rp)) + abs(float(ip)) + abs(complex(self.a)) * (abs(float(rb)) + abs(float(ib))) + 1.0
        while True:
            with mpmath.workprec(bits):
                def m(f):
                    return mpmath.mpf(f.numerator) / f.denominator
                if self.g2 is None:
                    d = mpmath.mpc(m(rp), m(ip))
                else:
                    a = self.a.mp(bits)
                    d = mpmath.mpc(m(rp), m(ip)) + a * mpmath.mpc(m(rb), m(ib))
                if d == 0 and self.exact_zero(x1_2, x2_2):
                    return d
                if abs(d) > mpmath.ldexp(scale, -(bits - 64)) or self.a.kind != "cf":
                    return +d
            if bits >= MAX_BITS:
                raise PrecisionError(f"divisor at rows ({x1_2}/2, {x2_2}/2) unresolved at {bits} bits")
            bits *= 4

    def row_divisors(self, rows1_2: np.ndarray, rows2_2: np.ndarray | None = None):
        """D over the flattened rows (m, r) -> i = d2 (m-1) + r of one block.

        Returns (D complex128, zero mask, ambiguous mask). Values with heavy
        float cancellation are recomputed at high precision. Results are
        memoised per instance and returned read-only.
        """
        r1 = np.asarray(rows1_2, dtype=np.int64)
        r2 = np.zeros(1, dtype=np.int64) if (self.g2 is None or rows2_2 is None) else np.asarray(rows2_2, dtype=np.int64)
        cache = self.__dict__.setdefault("_row_cache", {})
        ck = (r1.tobytes(), r2.tobytes())
        if ck not in cache:
            out = self._row_divisors(r1, r2)
            for arr in out:
                arr.flags.writeable = False
            cache[ck] = out
        return cache[ck]

    def _row_divisors(self, r1, r2):
        x1 = np.repeat(r1, r2.size)
        x2 = np.tile(r2, r1.size)
        n = x1.size
        D = np.empty(n, dtype=complex)
        zero = np.zeros(n, dtype=bool)
        amb = np.zeros(n, dtype=bool)
        a = complex(self.a)
        for t in range(n):
            rp, ip, rb, ib = self.parts(int(x1[t]), int(x2[t]))
            ez = self.exact_zero(int(x1[t]), int(x2[t]))
            if ez:
                zero[t] = True
                D[t] = 0.0
                continue
            if self.g2 is None:
                d = complex(float(rp), float(ip))
            elif self.a.kind == "rational":
                ar = self.a.rational
                d = complex(float(rp + ar * rb), float(ip + ar * ib))
            else:
                d = complex(float(rp), float(ip)) + a * complex(float(rb), float(ib))
            scale = abs(float(rp)) + abs(float(ip)) + abs(a) * (abs(float(rb)) + abs(float(ib))) + 1.0
            if self.a.kind == "cf" and abs(d) < CAND_REL * scale:
                d = complex(self.divisor_mp(int(x1[t]), int(x2[t])))
            elif self.a.kind == "float" and abs(d) < AMB_TOL * scale:
                amb[t] = True
            D[t] = d
        return D, zero, amb


# --------------------------------------------------------------------------
# spectrum


@dataclass(frozen=True)
class DivisorRecord:
    freq: ProductFrequency
    D: complex
    abs_D: float
    log_abs_D: float
    w: float
    exact_zero: bool = False
    ambiguous: bool = False

    def to_dict(self):
        return {
            "freq": self.freq.to_dict(),
            "D": [self.D.real, self.D.imag],
            "abs_D": self.abs_D,
            "log_abs_D": self.log_abs_D,
            "w": self.w,
            "exact_zero": self.exact_zero,
            "ambiguous": self.ambiguous,
        }


def _lcm(a: int, b: int) -> int:
    return a * b // math.gcd(a, b)


@dataclass
class ScanResult:
    edges: np.ndarray
    best: np.ndarray  # (nfit, nbins) log values, +inf when empty
    bi: np.ndarray
    bj: np.ndarray
    zeros: np.ndarray  # (nz, 2) row indices
    n_candidates: int
    n_ambiguous: int
    max_bits: int


class DivisorSpectrum:
    """Lazy divisor spectrum of a truncated product dual.

    The truncation is ``|k| <= kmax`` for a torus factor and ``l <= lmax`` for
    SU(2). Scans run over reduced SU(2) rows (one per m, at l = |m|); that is
    exact for every minimum taken here and for the zero census, which expands
    each zero row back to all classes (k, l) it stands for. ``records()``
    materialises the full (xi, eta, m, r) list for small truncations.
    """

    def __init__(self, spec: VectorFieldSpec, cut1: float, cut2: float | None = None):
        self.spec = spec
        self.cut1 = cut1
        self.cut2 = cut2
        if spec.g2 is not None and cut2 is None:
            raise ValueError("product operator needs a cutoff for both factors")
        self._c1 = self._index_cut(spec.g1, cut1)
        self._c2 = None if spec.g2 is None else self._index_cut(spec.g2, cut2)
        self._rows1 = factor_rows(spec.g1, self._c1)
        if spec.g2 is None:
            self._rows2 = {"val2": np.zeros(1, np.int64), "label": np.full(1, -1, np.int64),
                           "w": np.zeros(1), "mult": np.ones(1, np.int64)}
        else:
            self._rows2 = factor_rows(spec.g2, self._c2)
        self._check_symbol_bound()
        self._prepare()
        self._zero_cache = None

    @staticmethod
    def _index_cut(group, cut):
        if cut is None or cut < 0:
            raise ValueError("cutoffs must be >= 0")
        if group == TORUS:
            return int(cut)
        two = int(round(2 * cut))
        if abs(two - 2 * cut) > 1e-9:
            raise ValueError("lmax must be a half-integer")
        return two

    def truncation(self) -> dict:
        d = {self.spec.g1 + "_1": self.cut1}
        if self.spec.g2 is not None:
            d[self.spec.g2 + "_2"] = self.cut2
        d["w_max"] = self.w_max
        return d

    @property
    def w_min(self) -> float:
        return float(self._rows1["w"][0] + self._rows2["w"][0])

    @property
    def w_max(self) -> float:
        return float(self._rows1["w"][-1] + self._rows2["w"][-1])

    @property
    def n_pairs(self) -> int:
        return self._rows1["w"].size * self._rows2["w"].size

    def _check_symbol_bound(self):
        n1, n2 = self.spec.norms
        lam = np.abs(float(self.spec.c1) * self._rows1["val2"] / 2.0)
        assert np.all(lam <= n1 * self._rows1["w"] + 1e-12), "symbol bound violated on factor 1"
        if self.spec.g2 is not None:
            mu = np.abs(float(self.spec.c2) * self._rows2["val2"] / 2.0)
            assert np.all(mu <= n2 * self._rows2["w"] + 1e-12), "symbol bound violated on factor 2"

    def _prepare(self):
        s = self.spec
        v1 = self._rows1["val2"]
        v2 = self._rows2["val2"]
        rp = [s.c1 * Fraction(1, 2), s.q_const.im]
        ip = -s.q_const.re
        rb = [s.c2 * Fraction(1, 2), s.q_coef.im]
        ib = -s.q_coef.re
        self.pr = float(rp[0]) * v1 + float(rp[1])
        self.pim = float(ip)
        if s.g2 is None:
            self.br = np.zeros(1)
            self.bim = 0.0
        else:
            self.br = float(rb[0]) * v2 + float(rb[1])
            self.bim = float(ib)
        self.sp = np.abs(self.pr) + abs(self.pim)
        self.sb = np.abs(self.br) + abs(self.bim)
        a = complex(s.a) if s.g2 is not None else 0j
        self.a_re, self.a_im = a.real, a.imag
        # exact integer forms
        L = 1
        for f in (*rp, ip, *rb, ib):
            L = _lcm(L, f.denominator)
        mode = _accel.MODE_FLOAT
        zp = np.zeros(v1.size, np.int64)
        zb = np.zeros(v2.size, np.int64)
        im_zero = False
        big = max(int(np.abs(v1).max()), int(np.abs(v2).max()), 1)
        ints_ok = all(abs(f * L) * big < _INT_BOUND for f in (*rp, ip, *rb, ib))
        if s.g2 is None:
            kind, u, v = "rational", 0, 1
        else:
            kind = s.a.kind
            if kind == "rational":
                u, v = s.a.rational.numerator, s.a.rational.denominator
        if ints_ok and kind == "cf":
            mode = _accel.MODE_IRRATIONAL
            zp = int(rp[0] * L) * v1 + int(rp[1] * L)
            zb = int(rb[0] * L) * v2 + int(rb[1] * L)
            im_zero = ip == 0 and ib == 0
        elif kind == "rational":
            bound = (abs(u) + abs(v)) * L * big * 4
            if ints_ok and bound < _INT_BOUND:
                mode = _accel.MODE_RATIONAL
                zp = v * (int(rp[0] * L) * v1 + int(rp[1] * L))
                zb = u * (int(rb[0] * L) * v2 + int(rb[1] * L))
                im_zero = v * ip + u * ib == 0
            else:
                raise NotImplementedError("rational coupling too large for exact integer zero tests")
        self.mode = mode
        self.zp = np.ascontiguousarray(zp, dtype=np.int64)
        self.zb = np.ascontiguousarray(zb, dtype=np.int64)
        self.im_zero = bool(im_zero)

    # ---- helpers -------------------------------------------------------------
    def pair_frequency(self, i: int, j: int) -> ProductFrequency:
        s = self.spec
        v1, l1 = int(self._rows1["val2"][i]), int(self._rows1["label"][i])
        xi = RepIndex(s.g1, l1)
        m = 1 if s.g1 == TORUS else (l1 + v1) // 2 + 1
        if s.g2 is None:
            return ProductFrequency(xi, None, m, 1)
        v2, l2 = int(self._rows2["val2"][j]), int(self._rows2["label"][j])
        eta = RepIndex(s.g2, l2)
        r = 1 if s.g2 == TORUS else (l2 + v2) // 2 + 1
        return ProductFrequency(xi, eta, m, r)

    def pair_values(self, i: int, j: int) -> tuple[int, int]:
        return int(self._rows1["val2"][i]), int(self._rows2["val2"][j])

    def pair_weight(self, i: int, j: int) -> float:
        return float(self._rows1["w"][i] + self._rows2["w"][j])

    def pair_record(self, i: int, j: int) -> DivisorRecord:
        x1, x2 = self.pair_values(i, j)
        ez = self.spec.exact_zero(x1, x2)
        if ez:
            return DivisorRecord(self.pair_frequency(i, j), 0j, 0.0, -math.inf, self.pair_weight(i, j), True)
        d = self.spec.divisor_mp(x1, x2)
        ad = abs(d)
        return DivisorRecord(self.pair_frequency(i, j), complex(d), float(ad), float(mpmath.log(ad)),
                             self.pair_weight(i, j), False, ez is None and float(ad) < AMB_TOL)

    def edges(self, bins_per_decade: int = 32) -> np.ndarray:
        lo, hi = self.w_min, self.w_max * (1 + 1e-12)
        nb = max(1, int(math.ceil(math.log10(hi / lo) * bins_per_decade)))
        return np.geomspace(lo, hi, nb + 1)

    # ---- scanning ------------------------------------------------------------
    def scan(self, fits: Sequence[tuple[int, float]], assoc: AssociatedFunction | None = None,
             bins_per_decade: int = 32, backend: str | None = None) -> ScanResult:
        """Run the divisor scan with the given fits (kind, parameter)."""
        edges = self.edges(bins_per_decade)
        nb = edges.size - 1
        fk = np.asarray([f[0] for f in fits] or [_accel.FIT_POLY], dtype=np.int64)
        fp = np.asarray([f[1] for f in fits] or [0.0], dtype=np.float64)
        if assoc is not None:
            hk_i, hv, hs = assoc.hull()
            hk = hk_i.astype(np.float64)
        else:
            hk, hv, hs = np.zeros(1), np.zeros(1), np.zeros(0)
        lb = np.empty((fk.size, nb))
        for f in range(fk.size):
            if fk[f] == _accel.FIT_POLY:
                lb[f] = fp[f] * np.log(edges[:-1])
            else:
                lb[f] = _accel.assoc_from_hull(fp[f] + np.log(edges[:-1]), hk, hv, hs)
        cap_z, cap_c = 1 << 16, 1 << 16
        while True:
            best = np.full((fk.size, nb), np.inf)
            bi = np.full((fk.size, nb), -1, np.int64)
            bj = np.full((fk.size, nb), -1, np.int64)
            zi = np.empty(cap_z, np.int64)
            zj = np.empty(cap_z, np.int64)
            ci = np.empty(cap_c, np.int64)
            cj = np.empty(cap_c, np.int64)
            counts = np.zeros(3, np.int64)
            _accel.scan_divisors(self.pr, self.zp, self.sp, self._rows1["w"], self.br, self.zb, self.sb,
                                 self._rows2["w"], self.pim, self.bim, self.a_re, self.a_im, self.mode,
                                 self.im_zero, CAND_REL, AMB_TOL, edges, fk, fp, hk, hv, hs, lb,
                                 best, bi, bj, zi, zj, ci, cj, counts, backend=backend)
            nz, nc, na = (int(c) for c in counts)
            if nz <= cap_z and nc <= cap_c:
                break
            cap_z, cap_c = max(cap_z, nz), max(cap_c, nc)
        zeros = np.stack([zi[:nz], zj[:nz]], axis=1)
        self._zero_cache = zeros
        # refine candidates at high precision and fold them in
        max_bits = 0
        if nc:
            ci, cj = ci[:nc], cj[:nc]
            logd = np.empty(nc)
            for t in range(nc):
                x1, x2 = self.pair_values(int(ci[t]), int(cj[t]))
                d = self.spec.divisor_mp(x1, x2)
                max_bits = max(max_bits, d.context.prec if hasattr(d, "context") else precision_bits())
                logd[t] = float(mpmath.log(abs(d)))
            wv = self._rows1["w"][ci] + self._rows2["w"][cj]
            bins = np.clip(np.searchsorted(edges, wv, side="right") - 1, 0, nb - 1)
            for f in range(fk.size):
                if fk[f] == _accel.FIT_POLY:
                    v = logd + fp[f] * np.log(wv)
                else:
                    v = logd + _accel.assoc_from_hull(fp[f] + np.log(wv), hk, hv, hs)
                for t in range(nc):
                    b = bins[t]
                    if v[t] < best[f, b]:
                        best[f, b] = v[t]
                        bi[f, b] = ci[t]
                        bj[f, b] = cj[t]
        return ScanResult(edges, best, bi, bj, zeros, nc, na, max(max_bits, precision_bits()))

    def zero_rows(self, backend: str | None = None) -> np.ndarray:
        if self._zero_cache is None:
            self.scan([], backend=backend)
        return self._zero_cache

    def records(self, limit: int = 2_000_000) -> list[DivisorRecord]:
        """Full (xi, eta, m, r) record list; deterministic order (factor 1 rows outer)."""
        s = self.spec
        rows1 = factor_rows(s.g1, self._c1, reduced=False)
        rows2 = self._rows2 if s.g2 is None else factor_rows(s.g2, self._c2, reduced=False)
        n = rows1["w"].size * rows2["w"].size
        if n > limit:
            raise MemoryError(f"{n} records exceed the materialisation limit {limit}; use scan()")
        out = []
        a = complex(s.a)
        for i in range(rows1["w"].size):
            x1, l1 = int(rows1["val2"][i]), int(rows1["label"][i])
            xi = RepIndex(s.g1, l1)
            m = 1 if s.g1 == TORUS else (l1 + x1) // 2 + 1
            for j in range(rows2["w"].size):
                x2, l2 = int(rows2["val2"][j]), int(rows2["label"][j])
                if s.g2 is None:
                    f = ProductFrequency(xi, None, m, 1)
                else:
                    eta = RepIndex(s.g2, l2)
                    f = ProductFrequency(xi, eta, m, 1 if s.g2 == TORUS else (l2 + x2) // 2 + 1)
                w = float(rows1["w"][i] + rows2["w"][j])
                ez = s.exact_zero(x1, x2)
                if ez:
                    out.append(DivisorRecord(f, 0j, 0.0, -math.inf, w, True, False))
                    continue
                rp, ip, rb, ib = s.parts(x1, x2)
                d = complex(float(rp), float(ip)) + (a * complex(float(rb), float(ib)) if s.g2 else 0)
                scale = abs(float(rp)) + abs(float(ip)) + abs(a) * (abs(float(rb)) + abs(float(ib))) + 1
                if s.g2 is not None and s.a.kind == "cf" and abs(d) < CAND_REL * scale:
                    dm = s.divisor_mp(x1, x2)
                    out.append(DivisorRecord(f, complex(dm), float(abs(dm)), float(mpmath.log(abs(dm))), w))
                    continue
                amb = ez is None and abs(d) < AMB_TOL * scale
                out.append(DivisorRecord(f, d, abs(d), math.log(abs(d)) if d else -math.inf, w, False, amb))
        return out


def divisor_spectrum(spec: VectorFieldSpec, cut1: float, cut2: float | None = None) -> DivisorSpectrum:
    """Lazy spectrum over |k| <= cut (torus) / l <= cut (SU(2)) per factor."""
    return DivisorSpectrum(spec, cut1, cut2)


# --------------------------------------------------------------------------
# kernel census


@dataclass(frozen=True)
class KernelCensus:
    elements: tuple  # unique class pairs (label1, label2), labels k or 2l
    n_frequencies: int  # zero slots counting rows (m, r)
    still_growing: bool
    truncation: dict
    qualifier: str = "empirical, up to truncation"

    @property
    def count(self) -> int:
        return len(self.elements)

    @property
    def empty(self) -> bool:
        return not self.elements

    def to_dict(self, max_list: int = 50):
        return {
            "count": self.count,
            "n_frequencies": self.n_frequencies,
            "still_growing": self.still_growing,
            "qualifier": self.qualifier,
            "truncation": self.truncation,
            "elements_head": [list(e) for e in self.elements[:max_list]],
        }


def kernel_set(spectrum: DivisorSpectrum, backend: str | None = None) -> KernelCensus:
    """All zero divisors in the truncation, expanded to class pairs.

    ``still_growing`` is raised when some element sits in the outer 20% of the
    truncation of either factor (a heuristic for an infinite set).
    """
    zr = spectrum.zero_rows(backend=backend)
    s = spectrum.spec
    elems = set()
    nfreq = 0
    growing = False
    c1, c2 = spectrum._c1, spectrum._c2
    for i, j in zr:
        x1 = int(spectrum._rows1["val2"][i])
        lab1 = [x1 // 2] if s.g1 == TORUS else list(range(abs(x1), c1 + 1, 2))
        if s.g2 is None:
            lab2 = [None]
        else:
            x2 = int(spectrum._rows2["val2"][j])
            lab2 = [x2 // 2] if s.g2 == TORUS else list(range(abs(x2), c2 + 1, 2))
        for a in lab1:
            for b in lab2:
                elems.add((a, b) if b is not None else (a,))
                nfreq += 1
                if _outer(s.g1, a, c1) or (b is not None and _outer(s.g2, b, c2)):
                    growing = True
    ordered = tuple(sorted(elems, key=lambda e: (sum(weight(g, x) for g, x in zip(s.groups, e)), e)))
    return KernelCensus(ordered, nfreq, growing, spectrum.truncation())


def _outer(group, label, cut):
    if cut == 0:
        return False
    return abs(label) > 0.8 * cut


# --------------------------------------------------------------------------
# Diophantine fits


def _levels(w_min, w_max):
    top = w_max
    return [max(w_min, top / 100), max(w_min, top / 10 ** 1.5), max(w_min, top / 10), max(w_min, top / 10 ** 0.5), top]


def _cummin_at(edges, row, level):
    sel = edges[1:] <= level * (1 + 1e-12)
    if not np.any(sel):
        sel = np.zeros_like(sel)
        sel[0] = True
    return float(np.min(row[sel]))


@dataclass(frozen=True)
class FitRow:
    param: float
    log_C: float
    log_C_levels: tuple
    stable: bool
    witnesses: tuple

    def to_dict(self):
        return {
            "param": self.param,
            "log_C": self.log_C,
            "C": math.exp(self.log_C) if self.log_C < 700 else math.inf,
            "log_C_levels": list(self.log_C_levels),
            "stable": self.stable,
            "witnesses": [w.to_dict() for w in self.witnesses],
        }


@dataclass(frozen=True)
class DiophantineVerdict:
    mode: str
    n_grid: tuple
    rows: tuple  # FitRow per N
    levels: tuple
    truncation: dict
    condition_consistent: bool
    kernel: KernelCensus
    saturated: bool
    stability_factor: float
    precision_bits: int
    n_refined: int
    qualifier: str = "up to truncation"

    @property
    def log_C(self) -> dict:
        return {r.param: r.log_C for r in self.rows}

    @property
    def hypoelliptic_consistent(self) -> bool:
        return self.condition_consistent and not self.kernel.still_growing

    @property
    def solvable_consistent(self) -> bool:
        return self.condition_consistent

    def witnesses(self) -> list:
        """Violation witnesses of the most violated grid value (largest drop)."""
        bad = [r for r in self.rows if not r.stable]
        if not bad:
            return []
        worst = min(bad, key=lambda r: r.log_C_levels[-1] - r.log_C_levels[0])
        return list(worst.witnesses)

    def to_dict(self):
        return {
            "mode": self.mode,
            "n_grid": list(self.n_grid),
            "levels_w": list(self.levels),
            "truncation": self.truncation,
            "condition_consistent": self.condition_consistent,
            "hypoelliptic_consistent": self.hypoelliptic_consistent,
            "solvable_consistent": self.solvable_consistent,
            "kernel": self.kernel.to_dict(),
            "cutoff_saturated": self.saturated,
            "stability_factor": self.stability_factor,
            "precision_bits": self.precision_bits,
            "n_refined": self.n_refined,
            "qualifier": self.qualifier,
            "trend_test": "C at nested weight truncations w <= W_top/100 ... W_top; stable when the drop is below the stability factor",
            "rows": [r.to_dict() for r in self.rows],
        }


def _fit_rows(spectrum, res: ScanResult, params, factor):
    levels = _levels(spectrum.w_min, spectrum.w_max)
    rows = []
    lf = math.log(factor)
    for f, p in enumerate(params):
        row = res.best[f]
        lc = float(np.min(row))
        lvl = tuple(_cummin_at(res.edges, row, L) for L in levels)
        stable = math.isfinite(lc) and lvl[-1] >= lvl[0] - lf
        wit = []
        thresh = lvl[0] - lf
        for b in range(row.size):
            if res.edges[b] >= levels[0] and row[b] < thresh and res.bi[f, b] >= 0:
                rec = spectrum.pair_record(int(res.bi[f, b]), int(res.bj[f, b]))
                wit.append(rec)
        wit.sort(key=lambda r: r.w)
        rows.append(FitRow(float(p), lc, lvl, stable, tuple(wit)))
    return rows, levels


def diophantine_fit(spectrum: DivisorSpectrum, weights: AssociatedFunction, mode: str = "roumieu",
                    n_grid: Iterable[float] = DEFAULT_N_GRID, stability_factor: float = 10.0,
                    bins_per_decade: int = 32, backend: str | None = None) -> DiophantineVerdict:
    """Fit C_N = min |D| exp(M(N w)) over nonzero divisors for each N in the grid.

    Roumieu mode: consistent when every C_N is positive and its value at the
    full truncation is within ``stability_factor`` of its value at w <= W/100.
    Beurling mode: consistent when some grid N passes that test.
    """
    mode = mode.lower()
    if mode not in ("roumieu", "beurling"):
        raise ValueError("mode must be 'roumieu' or 'beurling'")
    grid = tuple(float(n) for n in n_grid)
    if not grid or min(grid) <= 0:
        raise ValueError("N grid must be positive and nonempty")
    weights.ensure(max(grid) * spectrum.w_max)
    sat = bool(weights.evaluate(max(grid) * spectrum.w_max).any_saturated)
    fits = [(_accel.FIT_ASSOC, math.log(n)) for n in grid]
    res = spectrum.scan(fits, weights, bins_per_decade=bins_per_decade, backend=backend)
    if not np.any(np.isfinite(res.best)):
        raise ValueError("no nonzero divisors in the truncation")
    kernel = kernel_set(spectrum)
    rows, levels = _fit_rows(spectrum, res, grid, stability_factor)
    ok = [r.stable for r in rows]
    consistent = all(ok) if mode == "roumieu" else any(ok)
    return DiophantineVerdict(mode, grid, tuple(rows), tuple(levels), spectrum.truncation(), consistent,
                              kernel, sat, stability_factor, res.max_bits, res.n_candidates)


@dataclass(frozen=True)
class SmoothnessVerdict:
    orders: tuple
    rows: tuple
    levels: tuple
    truncation: dict
    condition_consistent: bool
    kernel: KernelCensus
    stability_factor: float
    qualifier: str = "up to truncation"

    def row(self, order: float) -> FitRow:
        for r in self.rows:
            if r.param == float(order):
                return r
        raise KeyError(order)

    def to_dict(self):
        return {
            "orders": list(self.orders),
            "levels_w": list(self.levels),
            "truncation": self.truncation,
            "condition_consistent": self.condition_consistent,
            "kernel": self.kernel.to_dict(),
            "stability_factor": self.stability_factor,
            "qualifier": self.qualifier,
            "rows": [r.to_dict() for r in self.rows],
        }


def smoothness_fit(spectrum: DivisorSpectrum, orders: Iterable[float] = (1, 2, 5, 10),
                   stability_factor: float = 10.0, bins_per_decade: int = 32,
                   backend: str | None = None) -> SmoothnessVerdict:
    """Fit C = min |D| w^{N'} for each polynomial order N'.

    Consistent with the smooth condition when some order gives a stable C
    (existence of C, N'). Witnesses of each order are the weight bins in the
    top two decades whose minimum fell below 1/stability_factor of the initial C.
    """
    ords = tuple(float(o) for o in orders)
    res = spectrum.scan([(_accel.FIT_POLY, o) for o in ords], None, bins_per_decade=bins_per_decade,
                        backend=backend)
    if not np.any(np.isfinite(res.best)):
        raise ValueError("no nonzero divisors in the truncation")
    rows, levels = _fit_rows(spectrum, res, ords, stability_factor)
    return SmoothnessVerdict(ords, tuple(rows), tuple(levels), spectrum.truncation(),
                             any(r.stable for r in rows), kernel_set(spectrum), stability_factor)


# --------------------------------------------------------------------------
# convergent-indexed extrapolation beyond the truncation


@dataclass(frozen=True)
class ExtrapolationRow:
    n: int
    t: Fraction
    x1_2: int | None  # None once the row indices are too large to build
    x2_2: int | None
    log_w: float
    log_absD_lower: float
    log_absD_upper: float
    log_value_lower: float
    log_value_upper: float

    def to_dict(self):
        d = dict(self.__dict__)
        d["t"] = str(self.t)
        for key in ("x1_2", "x2_2"):
            d[key] = _int_repr(d[key])
        return d


def _int_repr(v):
    """Exact integers as strings; beyond 4000 digits only the size is kept."""
    if v is None or abs(v) <= 2 ** 53:
        return v
    return int_text(v)


def convergent_extrapolation(spec: VectorFieldSpec, order: float, depth: int = 10,
                             max_multiplier: int = 16) -> list[ExtrapolationRow]:
    """Rigorous log brackets of |D| w^{order} along convergent frequencies.

    For each convergent p_n/q_n of a continued fraction coupling this looks for
    a small rational multiplier t so that Re P = -t p_n and Re B = t q_n are
    attained by admissible rows. Then |D| = t |q_n a - p_n| with the classical
    bracket t/(q_n + q_{n+1}) < |D| < t/q_{n+1}, and the weight is bracketed
    from the rows. Convergents are handled in log space once they are too
    large to build, so this reaches far beyond any scan truncation; it is
    reported separately from truncated verdicts.
    """
    if spec.g2 is None or spec.a.kind != "cf":
        raise ValueError("extrapolation needs a product operator with a continued fraction coupling")
    if spec.q_const.re != 0 or spec.q_coef.re != 0:
        raise ValueError("extrapolation assumes real divisors")
    cf = spec.a.cf
    yc, ya = Fraction(spec.q_const.im), Fraction(spec.q_coef.im)
    s1, s2 = Fraction(2) / Fraction(spec.c1), Fraction(2) / Fraction(spec.c2)
    cands = list(dict.fromkeys(Fraction(num, den) for den in (1, 2) for num in range(1, max_multiplier + 1)))
    modulus = 4
    for t in cands:
        for y, sc in ((yc, s1), (ya, s2)):
            modulus = math.lcm(modulus, 2 * t.denominator * y.denominator * sc.denominator * 4)
    logs = log_convergents(cf, depth + 1, modulus)

    def x_mod(t, r, y, sc, sign):
        # x = (sign t r - y) sc; returns (integral, x mod 2) from r mod modulus
        num = (sign * t.numerator * r * y.denominator - y.numerator * t.denominator) * sc.numerator
        den = t.denominator * y.denominator * sc.denominator
        if num % den:
            return False, 0
        return True, (num // den) % 2

    out = []
    with mpmath.workprec(128):
        def lw_bounds(g, lx):
            # half of |x| is |k| on the torus and l = |m| on SU(2): w in [x/2, x/2 + 1]
            lo, hi = lx
            return lo - mpmath.log(2), hi - mpmath.log(2)

        for n in range(depth + 1):
            cn, cn1 = logs[n], logs[n + 1]
            found = None
            for t in cands:
                ok1, par1 = x_mod(t, cn.p_mod, yc, s1, -1)
                ok2, par2 = x_mod(t, cn.q_mod, ya, s2, 1)
                if not (ok1 and ok2):
                    continue
                if (spec.g1 == TORUS and par1) or (spec.g2 == TORUS and par2):
                    continue
                found = t
                break
            if found is None:
                continue
            t = found
            lt = mpmath.log(mpmath.mpf(t.numerator) / t.denominator)
            if cn.p is not None and cn.q is not None:
                x1 = int((-t * cn.p - yc) * s1)
                x2 = int((t * cn.q - ya) * s2)
            else:
                x1 = x2 = None

            tm = mpmath.mpf(t.numerator) / t.denominator

            def lx(lr, y, sc):
                # log |(t r -+ y) sc| with r bracketed; |y| is tiny next to t r here
                ls = mpmath.log(mpmath.mpf(sc.numerator) / sc.denominator)
                rel = (mpmath.mpf(abs(y.numerator)) / y.denominator) / (tm * mpmath.exp(lr[0]))
                return lt + lr[0] + ls + mpmath.log1p(-rel), lt + lr[1] + ls + mpmath.log1p(rel)

            if x1 is not None:
                w = _mp_row_weight(spec.g1, x1) + _mp_row_weight(spec.g2, x2)
                lw_lo = lw_hi = mpmath.log(w)
            else:
                a1, b1 = lw_bounds(spec.g1, lx(cn.log_p, yc, s1))
                a2, b2 = lw_bounds(spec.g2, lx(cn.log_q, ya, s2))
                lw_lo = mpmath.log(mpmath.exp(a1) + mpmath.exp(a2))
                lw_hi = mpmath.log(mpmath.exp(b1) + mpmath.exp(b2) + 2)
            if cn.q is not None and cn1.q is not None:
                lo = lt - mpmath.log(mpmath.mpf(cn.q + cn1.q))
                hi = lt - mpmath.log(mpmath.mpf(cn1.q))
            else:
                # q_n <= q_{n+1}, so q_n + q_{n+1} <= 2 q_{n+1}
                lo = lt - mpmath.log(2) - cn1.log_q[1]
                hi = lt - cn1.log_q[0]
            out.append(ExtrapolationRow(n, t, x1, x2, float((lw_lo + lw_hi) / 2), float(lo), float(hi),
                                        float(lo + order * lw_lo), float(hi + order * lw_hi)))
    return out


def _mp_row_weight(group, x2v):
    if group == TORUS:
        k = mpmath.mpf(x2v) / 2
        return mpmath.sqrt(1 + k * k)
    l = abs(mpmath.mpf(x2v)) / 2
    return mpmath.sqrt(1 + l * (l + 1))
