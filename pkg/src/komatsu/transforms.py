"""Band-limited functions on products of T^1 and SU(2) ~ S^3.

Conventions
-----------
* Torus characters e^{ikt}, t in [0, 2 pi).
* SU(2) matrix coefficients in Euler angles,

      t^l_{mn}(phi, theta, psi) = e^{i(m phi + n psi)} d^l_{mn}(theta),

  with the standard real Wigner small-d matrix; this is the complex conjugate
  of the usual Wigner D matrix, hence again a unitary representation. Ranges
  phi in [0, 2 pi), theta in [0, pi], psi in [0, 4 pi).
* Haar measure normalised to 1: dphi/2pi * dpsi/4pi * sin(theta) dtheta/2.
* Fourier coefficients F(xi) = integral of f(x) xi(x)^* and
  f = sum d_xi Tr(xi(x) F(xi)). With this choice d/dpsi multiplies the row
  index m of every coefficient by i m.

A block of a product field is indexed by flattened rows (m, r) -> d_eta (m-1) + r
and columns (n, s) likewise.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np
from scipy.special import gammaln

from .duals import SU2, TORUS, dimension, weight

__all__ = [
    "AliasingWarning",
    "CoefficientField",
    "EulerPoint",
    "Grid",
    "wigner_d",
    "wigner_d_table",
    "su2_matrix",
    "analyze",
    "synthesize",
    "synthesize_grid",
    "plancherel_norm",
    "quadrature_norm",
    "tr_function",
    "h_function",
    "tr_field",
    "h_field",
]


class AliasingWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# Wigner small d


def _explicit_d(two_j, m2, n2, theta):
    """Wigner d^j_{mn}(theta) by the explicit sum (doubled indices, vectorised in theta)."""
    j2 = two_j
    jm, jn = (j2 + m2) // 2, (j2 + n2) // 2  # j+m, j+n
    jmm, jnn = (j2 - m2) // 2, (j2 - n2) // 2  # j-m, j-n
    c = np.cos(np.asarray(theta, dtype=float) / 2)
    s = np.sin(np.asarray(theta, dtype=float) / 2)
    pref = 0.5 * (gammaln(jm + 1) + gammaln(jmm + 1) + gammaln(jn + 1) + gammaln(jnn + 1))
    mn = (m2 - n2) // 2
    out = np.zeros(np.shape(c))
    for k in range(max(0, -mn), min(jn, jmm) + 1):
        # (-1)^{m-n+k} c^{2j+n-m-2k} s^{m-n+2k} / ((j+n-k)! k! (m-n+k)! (j-m-k)!)
        lg = pref - gammaln(jn - k + 1) - gammaln(k + 1) - gammaln(mn + k + 1) - gammaln(jmm - k + 1)
        sign = -1.0 if (mn + k) % 2 else 1.0
        out = out + sign * math.exp(lg) * c ** (j2 - mn - 2 * k) * s ** (mn + 2 * k)
    return out


def wigner_d_table(two_lmax: int, theta) -> np.ndarray:
    """All d^l_{mn}(theta) for 2l <= two_lmax.

    Returns an array of shape (two_lmax+1, ntheta, 2T+1, 2T+1) (T = two_lmax)
    indexed by [2l, theta, 2m + T, 2n + T]; entries with |m| > l or the wrong
    parity are zero. Each (m, n) chain is seeded by the closed form at
    l0 = max(|m|, |n|) and l0 + 1 and continued by the three-term recursion in l.
    """
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    return _d_table_cached(int(two_lmax), th.tobytes())


@lru_cache(maxsize=64)
def _d_table_cached(T: int, theta_bytes: bytes) -> np.ndarray:
    th = np.frombuffer(theta_bytes, dtype=float)
    nq = th.size
    out = np.zeros((T + 1, nq, 2 * T + 1, 2 * T + 1))
    cb = np.cos(th)
    for m2 in range(-T, T + 1):
        for n2 in range(-T, T + 1):
            if (m2 - n2) % 2:
                continue
            l0 = max(abs(m2), abs(n2))
            if l0 > T:
                continue
            out[l0, :, m2 + T, n2 + T] = _explicit_d(l0, m2, n2, th)
            if l0 + 2 <= T:
                out[l0 + 2, :, m2 + T, n2 + T] = _explicit_d(l0 + 2, m2, n2, th)
            m, n = m2 / 2, n2 / 2
            for j2 in range(l0 + 4, T + 1, 2):
                j = j2 / 2
                a = (j - 1) * math.sqrt((j * j - m * m) * (j * j - n * n))
                b = (2 * j - 1) * (j * (j - 1) * cb - m * n)
                c = j * math.sqrt(((j - 1) ** 2 - m * m) * ((j - 1) ** 2 - n * n))
                out[j2, :, m2 + T, n2 + T] = (b * out[j2 - 2, :, m2 + T, n2 + T]
                                              - c * out[j2 - 4, :, m2 + T, n2 + T]) / a
    out.flags.writeable = False
    return out


def wigner_d(two_l: int, theta) -> np.ndarray:
    """d^l(theta) as a (..., 2l+1, 2l+1) array, rows and columns m = -l..l."""
    th = np.asarray(theta, dtype=float)
    flat = th.reshape(-1)
    tab = wigner_d_table(two_l, flat)[two_l]
    T = two_l
    idx = np.arange(-two_l, two_l + 1, 2) + T
    blk = tab[:, idx][:, :, idx]
    return blk.reshape(th.shape + (two_l + 1, two_l + 1))


def su2_matrix(two_l: int, phi, theta, psi) -> np.ndarray:
    """t^l(phi, theta, psi) for arrays of Euler angles, shape (..., d, d)."""
    ms = np.arange(-two_l, two_l + 1, 2) / 2.0
    phi = np.asarray(phi, dtype=float)[..., None, None]
    psi = np.asarray(psi, dtype=float)[..., None, None]
    d = wigner_d(two_l, theta)
    return np.exp(1j * (ms[:, None] * phi + ms[None, :] * psi)) * d


# --------------------------------------------------------------------------
# closed forms from the example on S^3


def tr_function(phi, theta, psi):
    return 2 * np.cos(np.asarray(theta) / 2) * np.cos((np.asarray(phi) + np.asarray(psi)) / 2)


def h_function(phi, theta, psi):
    return -np.cos(np.asarray(theta) / 2) * np.sin((np.asarray(phi) + np.asarray(psi)) / 2)


# --------------------------------------------------------------------------
# coefficient fields


def _index_cut(group, cut):
    if group == TORUS:
        if cut != int(cut) or cut < 0:
            raise ValueError("torus band limit must be a nonnegative integer")
        return int(cut)
    two = int(round(2 * float(cut)))
    if abs(two - 2 * float(cut)) > 1e-12 or two < 0:
        raise ValueError("SU(2) band limit must be a nonnegative half-integer")
    return two


def _labels(group, icut):
    return range(-icut, icut + 1) if group == TORUS else range(0, icut + 1)


def _label_name(group, label):
    return str(label) if group == TORUS else str(Fraction(label, 2))


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Sparse list of Fourier blocks of a band-limited field.

    ``groups`` is a tuple of one or two group tags; ``blocks`` maps label
    tuples (k for the torus, 2l for SU(2)) to square complex matrices of side
    d_xi d_eta; ``cuts`` are the band limits (kmax, or 2 lmax) per factor.
    Absent blocks are zero. Instances are treated as immutable.
    """

    groups: tuple
    blocks: Mapping = field(default_factory=dict)
    cuts: tuple = ()

    def __post_init__(self):
        groups = tuple(self.groups)
        object.__setattr__(self, "groups", groups)
        if not 1 <= len(groups) <= 2:
            raise ValueError("one or two factors supported")
        blocks = {}
        cuts = list(self.cuts) if self.cuts else [0] * len(groups)
        for key, blk in self.blocks.items():
            key = tuple(int(x) for x in key)
            if len(key) != len(groups):
                raise ValueError(f"block key {key} does not match groups {groups}")
            d = self.block_dim(key)
            arr = np.asarray(blk, dtype=complex)
            if arr.shape != (d, d):
                raise ValueError(f"block {key} has shape {arr.shape}, expected {(d, d)}")
            for f, (g, lab) in enumerate(zip(groups, key)):
                if g == SU2 and lab < 0:
                    raise ValueError("negative SU(2) label")
                cuts[f] = max(cuts[f], abs(lab))
            blocks[key] = arr
        object.__setattr__(self, "blocks", blocks)
        object.__setattr__(self, "cuts", tuple(int(c) for c in cuts))

    # ---- construction ----------------------------------------------------------
    @classmethod
    def zeros(cls, groups, cuts=None) -> "CoefficientField":
        g = tuple(groups)
        return cls(g, {}, tuple(cuts) if cuts else (0,) * len(g))

    @classmethod
    def from_limits(cls, groups, limits, blocks=None) -> "CoefficientField":
        """Band limits given as kmax / lmax (half-integers allowed for SU(2))."""
        g = tuple(groups)
        cuts = tuple(_index_cut(gr, c) for gr, c in zip(g, limits))
        return cls(g, blocks or {}, cuts)

    @classmethod
    def single(cls, groups, key, i=1, j=1, value=1.0) -> "CoefficientField":
        c = cls(tuple(groups), {})
        d = c.block_dim(key)
        blk = np.zeros((d, d), complex)
        blk[i - 1, j - 1] = value
        return cls(tuple(groups), {tuple(key): blk})

    # ---- shape helpers -----------------------------------------------------------
    def factor_dims(self, key) -> tuple:
        return tuple(dimension(g, lab) for g, lab in zip(self.groups, key))

    def block_dim(self, key) -> int:
        return int(np.prod(self.factor_dims(key)))

    def weight(self, key) -> float:
        return sum(weight(g, lab) for g, lab in zip(self.groups, key))

    def keys(self) -> list:
        return sorted(self.blocks, key=lambda k: (self.weight(k), k))

    def block(self, key) -> np.ndarray:
        key = tuple(key)
        if key in self.blocks:
            return self.blocks[key]
        d = self.block_dim(key)
        return np.zeros((d, d), complex)

    def __len__(self):
        return len(self.blocks)

    @property
    def limits(self) -> tuple:
        return tuple(c if g == TORUS else c / 2 for g, c in zip(self.groups, self.cuts))

    def _check_same(self, other):
        if self.groups != other.groups:
            raise ValueError(f"group mismatch {self.groups} vs {other.groups}")

    # ---- algebra --------------------------------------------------------------------
    def __add__(self, other):
        self._check_same(other)
        out = dict(self.blocks)
        for k, b in other.blocks.items():
            out[k] = out[k] + b if k in out else b.copy()
        return CoefficientField(self.groups, out, tuple(max(a, b) for a, b in zip(self.cuts, other.cuts)))

    def __neg__(self):
        return self.scaled(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scaled(self, c: complex):
        return CoefficientField(self.groups, {k: c * b for k, b in self.blocks.items()}, self.cuts)

    def __mul__(self, c):
        return self.scaled(c)

    __rmul__ = __mul__

    def map_blocks(self, fn: Callable) -> "CoefficientField":
        return CoefficientField(self.groups, {k: fn(k, b) for k, b in self.blocks.items()}, self.cuts)

    def restricted(self, limits=None, cuts=None) -> "CoefficientField":
        if cuts is None:
            cuts = tuple(_index_cut(g, c) for g, c in zip(self.groups, limits))
        keep = {k: b for k, b in self.blocks.items() if all(abs(x) <= c for x, c in zip(k, cuts))}
        return CoefficientField(self.groups, keep, tuple(cuts))

    def pruned(self, tol: float = 0.0) -> "CoefficientField":
        keep = {k: b for k, b in self.blocks.items() if b.size and np.max(np.abs(b)) > tol}
        return CoefficientField(self.groups, keep, self.cuts)

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(b))) for b in self.blocks.values() if b.size), default=0.0)

    def max_abs_diff(self, other) -> float:
        self._check_same(other)
        keys = set(self.blocks) | set(other.blocks)
        return max((float(np.max(np.abs(self.block(k) - other.block(k)))) for k in keys), default=0.0)

    def entries(self):
        """Yield (key, i, j, value) over stored entries (1-based flat indices)."""
        for k in self.keys():
            b = self.blocks[k]
            for i in range(b.shape[0]):
                for j in range(b.shape[1]):
                    yield k, i + 1, j + 1, b[i, j]

    def n_nonzero(self, tol: float = 0.0) -> int:
        return sum(int(np.count_nonzero(np.abs(b) > tol)) for b in self.blocks.values())

    # ---- dense layout (per factor: torus axis k; SU(2) axes 2l, row, col in doubled m) ----
    def to_dense(self, cuts=None) -> np.ndarray:
        cuts = tuple(cuts) if cuts is not None else self.cuts
        shape = []
        for g, c in zip(self.groups, cuts):
            shape += [2 * c + 1] if g == TORUS else [c + 1, 2 * c + 1, 2 * c + 1]
        dense = np.zeros(shape, complex)
        for key, blk in self.blocks.items():
            if any(abs(x) > c for x, c in zip(key, cuts)):
                if np.any(blk):
                    raise ValueError("field exceeds the requested dense band")
                continue
            dense[self._dense_index(key, cuts)] = self._block_to_factors(key, blk)
        return dense

    def _dense_index(self, key, cuts):
        idx = []
        for g, lab, c in zip(self.groups, key, cuts):
            if g == TORUS:
                idx.append(lab + c)
            else:
                rows = np.arange(-lab, lab + 1, 2) + c
                idx += [lab, rows, rows]
        # advanced indexing: put the row/col grids in outer-product form
        out = []
        grids = [i for i in idx if isinstance(i, np.ndarray)]
        ng = len(grids)
        p = 0
        for i in idx:
            if isinstance(i, np.ndarray):
                shp = [1] * ng
                shp[p] = i.size
                out.append(i.reshape(shp))
                p += 1
            else:
                out.append(i)
        return tuple(out)

    def _block_to_factors(self, key, blk):
        """(d1 d2, d1 d2) block -> factor layout (row1, col1, row2, col2) squeezed to SU(2) axes."""
        dims = self.factor_dims(key)
        if len(dims) == 1:
            return blk if self.groups[0] == SU2 else blk[0, 0]
        d1, d2 = dims
        t = blk.reshape(d1, d2, d1, d2).transpose(0, 2, 1, 3)  # (m, n, r, s)
        g1, g2 = self.groups
        if g1 == TORUS and g2 == TORUS:
            return t[0, 0, 0, 0]
        if g1 == TORUS:
            return t[0, 0]
        if g2 == TORUS:
            return t[:, :, 0, 0]
        return t

    @classmethod
    def from_dense(cls, groups, dense, cuts, tol: float = 0.0) -> "CoefficientField":
        groups = tuple(groups)
        proto = cls(groups, {}, tuple(cuts))
        blocks = {}
        label_sets = [list(_labels(g, c)) for g, c in zip(groups, cuts)]
        for key in _product(label_sets):
            sub = dense[proto._dense_index(key, cuts)]
            blk = proto._factors_to_block(key, sub)
            if tol is None or np.max(np.abs(blk)) > tol:
                blocks[key] = blk
        return cls(groups, blocks, tuple(cuts))

    def _factors_to_block(self, key, sub):
        dims = self.factor_dims(key)
        if len(dims) == 1:
            return np.asarray(sub, complex).reshape(dims[0], dims[0])
        d1, d2 = dims
        g1, g2 = self.groups
        if g1 == TORUS and g2 == TORUS:
            t = np.asarray(sub).reshape(1, 1, 1, 1)
        elif g1 == TORUS:
            t = np.asarray(sub)[None, None]
        elif g2 == TORUS:
            t = np.asarray(sub)[:, :, None, None]
        else:
            t = np.asarray(sub)
        return t.transpose(0, 2, 1, 3).reshape(d1 * d2, d1 * d2)

    # ---- norms -----------------------------------------------------------------------
    def plancherel_norm(self) -> float:
        s = 0.0
        for k, b in self.blocks.items():
            s += self.block_dim(k) * float(np.sum(np.abs(b) ** 2))
        return math.sqrt(s)

    # ---- io -----------------------------------------------------------------------------
    def _header(self):
        names = []
        for f, g in enumerate(self.groups):
            base = "k" if g == TORUS else "l"
            names.append(base if self.groups.count(g) == 1 else f"{base}{f + 1}")
        return names

    def to_csv(self, path) -> None:
        """Columns: labels (k / l), m, n[, r, s], re, im; indices 1-based."""
        names = self._header()
        two = len(self.groups) == 2
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names + (["m", "n", "r", "s"] if two else ["m", "n"]) + ["re", "im"])
            for key in self.keys():
                blk = self.blocks[key]
                dims = self.factor_dims(key)
                d2 = dims[1] if two else 1
                for i in range(blk.shape[0]):
                    for j in range(blk.shape[1]):
                        v = blk[i, j]
                        if v == 0:
                            continue
                        m, r = divmod(i, d2)
                        n, s = divmod(j, d2)
                        labs = [_label_name(g, x) for g, x in zip(self.groups, key)]
                        idx = [m + 1, n + 1, r + 1, s + 1] if two else [m + 1, n + 1]
                        w.writerow(labs + idx + [repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path) -> "CoefficientField":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError("empty coefficient file")
        head = [h.strip() for h in rows[0]]
        groups = []
        for h in head:
            if h.rstrip("0123456789") == "k":
                groups.append(TORUS)
            elif h.rstrip("0123456789") in ("l", "ell"):
                groups.append(SU2)
            else:
                break
        if not 1 <= len(groups) <= 2:
            raise ValueError(f"cannot infer groups from header {head}")
        two = len(groups) == 2
        proto = cls(tuple(groups), {})
        blocks: dict = {}
        ng = len(groups)
        for row in rows[1:]:
            if not row or row[0].startswith("#"):
                continue
            key = tuple(int(x) if g == TORUS else int(Fraction(x) * 2) for g, x in zip(groups, row[:ng]))
            idx = [int(x) for x in row[ng:ng + (4 if two else 2)]]
            re, im = float(row[-2]), float(row[-1])
            dims = proto.factor_dims(key)
            d2 = dims[1] if two else 1
            if two:
                m, n, r, s = idx
                i, j = d2 * (m - 1) + r - 1, d2 * (n - 1) + s - 1
            else:
                i, j = idx[0] - 1, idx[1] - 1
            if key not in blocks:
                blocks[key] = np.zeros((proto.block_dim(key),) * 2, complex)
            blocks[key][i, j] = complex(re, im)
        return cls(tuple(groups), blocks)

    def manifest(self) -> dict:
        return {
            "groups": list(self.groups),
            "band_limits": [c if g == TORUS else str(Fraction(c, 2)) for g, c in zip(self.groups, self.cuts)],
            "n_blocks": len(self.blocks),
            "conventions": CONVENTIONS,
        }


CONVENTIONS = {
    "torus": "characters e^{ikt}, t in [0, 2pi)",
    "su2": "t^l_{mn} = e^{i(m phi + n psi)} d^l_{mn}(theta); phi in [0,2pi), theta in [0,pi], psi in [0,4pi)",
    "haar": "normalised to 1",
    "coefficient": "F(xi) = int f xi^*, f = sum d_xi Tr(xi F(xi))",
    "flattening": "row (m, r) -> d_eta (m-1) + r, 1-based",
}


def _product(sets):
    if len(sets) == 1:
        return [(x,) for x in sets[0]]
    return [(a, b) for a in sets[0] for b in sets[1]]


# --------------------------------------------------------------------------
# points and grids


@dataclass(frozen=True)
class EulerPoint:
    """One point of the product: a torus angle t and/or Euler angles (phi, theta, psi)."""

    coords: tuple

    def __post_init__(self):
        for c in self.coords:
            if isinstance(c, tuple):
                phi, theta, psi = c
                if not (0 <= phi < 2 * math.pi + 1e-12 and 0 <= theta <= math.pi + 1e-12 and 0 <= psi < 4 * math.pi + 1e-12):
                    raise ValueError("Euler angles out of range")
            elif not 0 <= c < 2 * math.pi + 1e-12:
                raise ValueError("torus angle out of range")

    @classmethod
    def random(cls, groups, rng, n: int) -> list:
        out = []
        for _ in range(n):
            cs = []
            for g in groups:
                if g == TORUS:
                    cs.append(float(rng.uniform(0, 2 * math.pi)))
                else:
                    cs.append((float(rng.uniform(0, 2 * math.pi)), float(np.arccos(rng.uniform(-1, 1))),
                               float(rng.uniform(0, 4 * math.pi))))
            out.append(cls(tuple(cs)))
        return out


@dataclass(frozen=True)
class Grid:
    """Tensor product quadrature grid; per factor torus nodes t or (phi, theta, psi, theta weights)."""

    groups: tuple
    nodes: tuple

    @classmethod
    def for_band(cls, groups, cuts, oversample: int = 0) -> "Grid":
        """Smallest exact grid for products of fields with the given index cuts (kmax or 2 lmax)."""
        nodes = []
        for g, c in zip(groups, cuts):
            if g == TORUS:
                n = 2 * c + 1 + oversample
                nodes.append((2 * math.pi * np.arange(n) / n,))
            else:
                L = c / 2
                nphi = c + 1 + oversample  # 2L+1: integer phi differences up to 2L
                npsi = 2 * c + 1 + oversample  # 4L+1: half-integer psi differences up to 2L
                nth = int(math.ceil(L)) + 1 + oversample
                x, wq = np.polynomial.legendre.leggauss(nth)
                nodes.append((2 * math.pi * np.arange(nphi) / nphi, np.arccos(x), 4 * math.pi * np.arange(npsi) / npsi,
                              wq / 2.0))
        return cls(tuple(groups), tuple(nodes))

    def nyquist_ok(self, cuts) -> bool:
        for g, c, nd in zip(self.groups, cuts, self.nodes):
            if g == TORUS:
                if nd[0].size < 2 * c + 1:
                    return False
            else:
                # phi: integer frequency differences up to 2L = c; psi: doubled differences up to 2c
                if nd[0].size < c + 1 or nd[2].size < 2 * c + 1 or nd[1].size < math.ceil(c / 2) + 1:
                    return False
        return True

    def axes(self):
        """Broadcastable coordinate arrays in factor order (t | phi, theta, psi)."""
        flat = []
        for g, nd in zip(self.groups, self.nodes):
            flat += [nd[0]] if g == TORUS else [nd[0], nd[1], nd[2]]
        n = len(flat)
        out = []
        for a, arr in enumerate(flat):
            shp = [1] * n
            shp[a] = arr.size
            out.append(arr.reshape(shp))
        return out

    @property
    def shape(self):
        s = []
        for g, nd in zip(self.groups, self.nodes):
            s += [nd[0].size] if g == TORUS else [nd[0].size, nd[1].size, nd[2].size]
        return tuple(s)

    def sample(self, func: Callable) -> np.ndarray:
        return np.broadcast_to(np.asarray(func(*self.axes()), dtype=complex), self.shape).copy()

    def mean(self, values: np.ndarray) -> complex:
        """Integral against normalised Haar measure of sampled values."""
        v = values
        ax = 0
        for g, nd in zip(self.groups, self.nodes):
            if g == TORUS:
                v = v.mean(axis=ax)
            else:
                v = v.mean(axis=ax)  # phi
                v = np.tensordot(nd[3], v, axes=([0], [ax]))  # theta
                v = v.mean(axis=ax)  # psi
        return complex(v)


# --------------------------------------------------------------------------
# analysis / synthesis


def _sum_l(W, C):
    """H[..., q, n, m] = sum_l W[l, q, m, n] C[..., l, n, m] as a batched matmul over (n, m)."""
    L, Q, M, _ = W.shape
    batch = C.shape[:-3]
    Wb = W.transpose(3, 2, 0, 1).reshape(M * M, L, Q)  # (n m, l, q)
    Cb = np.moveaxis(C.reshape(-1, L, M * M), 2, 0)  # (n m, batch, l)
    H = np.matmul(Cb, Wb)  # (n m, batch, q)
    return np.moveaxis(H, 0, 2).reshape(batch + (Q, M, M))


def _sum_theta(Wt, G):
    """C[..., l, a, b] = sum_q Wt[l, q, b, a] G[..., q, b, a]."""
    L, Q, M, _ = Wt.shape
    batch = G.shape[:-3]
    Wb = Wt.transpose(2, 3, 1, 0).reshape(M * M, Q, L)  # (b a, q, l)
    Gb = np.moveaxis(G.reshape(-1, Q, M * M), 2, 0)  # (b a, batch, q)
    C = np.matmul(Gb, Wb)  # (b a, batch, l)
    C = np.moveaxis(C, 0, 2).reshape(batch + (L, M, M))  # (..., l, b, a)
    return np.swapaxes(C, -1, -2)


def _su2_synth_axes(c, theta):
    """Tables for SU(2) synthesis: weighted d table (2l, theta, m, n) times d_l."""
    tab = wigner_d_table(c, theta)
    dl = (np.arange(c + 1) + 1.0)[:, None, None, None]
    return tab * dl


def synthesize_grid(field: CoefficientField, grid: Grid) -> np.ndarray:
    """Values of the field on a tensor grid (exact, separable contraction)."""
    if tuple(grid.groups) != field.groups:
        raise ValueError("grid and field groups differ")
    cuts = field.cuts
    v = field.to_dense(cuts)
    # process factors from last to first so axis positions of earlier factors stay fixed
    pos = []
    p = 0
    for g in field.groups:
        pos.append(p)
        p += 1 if g == TORUS else 3
    for f in reversed(range(len(field.groups))):
        g, c, nd, a = field.groups[f], cuts[f], grid.nodes[f], pos[f]
        if g == TORUS:
            ks = np.arange(-c, c + 1)
            E = np.exp(1j * np.outer(nd[0], ks))  # (nt, k)
            v = np.moveaxis(np.tensordot(E, v, axes=([1], [a])), 0, a)
        else:
            ms = np.arange(-c, c + 1) / 2.0
            W = _su2_synth_axes(c, nd[1])  # (l, q, m, n)
            # H[q, n, m] = sum_l W[l, q, m, n] C[l, n, m]
            C = np.moveaxis(v, (a, a + 1, a + 2), (-3, -2, -1))  # (..., l, row n, col m)
            H = _sum_l(W, C)
            Ephi = np.exp(1j * np.outer(nd[0], ms))  # (p, m)
            Epsi = np.exp(1j * np.outer(nd[2], ms))  # (s, n)
            out = np.einsum("pm,sn,...qnm->...pqs", Ephi, Epsi, H, optimize=True)
            v = np.moveaxis(out, (-3, -2, -1), (a, a + 1, a + 2))
    return v


def analyze(func_or_samples, groups, limits=None, cuts=None, grid: Grid | None = None,
            tol: float | None = None) -> CoefficientField:
    """Fourier coefficients up to the band limits by exact quadrature.

    ``func_or_samples`` is a callable on broadcast coordinate arrays (factor
    order: t, phi, theta, psi) or an array sampled on ``grid``. Limits are kmax
    and lmax per factor (or ``cuts`` in index form). Exactness needs the input
    to be band-limited inside the limits of the grid; a grid below the
    Nyquist bound triggers an AliasingWarning. ``tol`` drops blocks whose
    entries are all at most tol in size.
    """
    groups = tuple(groups)
    if cuts is None:
        cuts = tuple(_index_cut(g, c) for g, c in zip(groups, limits))
    cuts = tuple(int(c) for c in cuts)
    if grid is None:
        grid = Grid.for_band(groups, cuts)
    elif not grid.nyquist_ok(cuts):
        warnings.warn("quadrature grid below the Nyquist bound; coefficients may alias", AliasingWarning)
    v = grid.sample(func_or_samples) if callable(func_or_samples) else np.asarray(func_or_samples, dtype=complex)
    if v.shape != grid.shape:
        raise ValueError(f"samples have shape {v.shape}, grid is {grid.shape}")
    pos = []
    p = 0
    for g in groups:
        pos.append(p)
        p += 1 if g == TORUS else 3
    for f in reversed(range(len(groups))):
        g, c, nd, a = groups[f], cuts[f], grid.nodes[f], pos[f]
        if g == TORUS:
            ks = np.arange(-c, c + 1)
            E = np.exp(-1j * np.outer(ks, nd[0])) / nd[0].size  # (k, nt)
            v = np.moveaxis(np.tensordot(E, v, axes=([1], [a])), 0, a)
        else:
            ms = np.arange(-c, c + 1) / 2.0
            Ephi = np.exp(-1j * np.outer(nd[0], ms)) / nd[0].size  # (p, b)
            Epsi = np.exp(-1j * np.outer(nd[2], ms)) / nd[2].size  # (s, a)
            V = np.moveaxis(v, (a, a + 1, a + 2), (-3, -2, -1))  # (..., p, q, s)
            G = np.einsum("...pqs,pb,sa->...qba", V, Ephi, Epsi, optimize=True)
            tab = wigner_d_table(c, nd[1])  # (l, q, b, a) = d_{ba}
            C = _sum_theta(tab * nd[3][None, :, None, None], G)
            v = np.moveaxis(C, (-3, -2, -1), (a, a + 1, a + 2))
    return CoefficientField.from_dense(groups, v, cuts, tol=tol)


def _point_factor(group, c, coord):
    """Per point factor tensor: torus e^{ikt} (P, k); SU(2) d_l t^l_{mn} in dense layout (P, l, m, n)."""
    if group == TORUS:
        t = np.asarray(coord, dtype=float)
        return np.exp(1j * np.outer(t, np.arange(-c, c + 1)))
    phi, theta, psi = (np.asarray(x, dtype=float) for x in coord)
    ms = np.arange(-c, c + 1) / 2.0
    tab = wigner_d_table(c, theta) * (np.arange(c + 1) + 1.0)[:, None, None, None]  # (l, P, m, n)
    ph = np.exp(1j * (phi[:, None, None] * ms[None, :, None] + psi[:, None, None] * ms[None, None, :]))
    return np.transpose(tab, (1, 0, 2, 3)) * ph[:, None]


def synthesize(field: CoefficientField, points) -> np.ndarray | complex:
    """Evaluate sum d Tr((xi x eta)(x) F) at EulerPoint(s)."""
    single = isinstance(points, EulerPoint)
    pts = [points] if single else list(points)
    if not pts:
        return np.zeros(0, complex)
    C = field.to_dense()
    facs = []
    for f, (g, c) in enumerate(zip(field.groups, field.cuts)):
        coord = [p.coords[f] for p in pts]
        if g == SU2:
            coord = tuple(zip(*coord))
        facs.append(_point_factor(g, c, coord))
    letters = iter("abcdefgh")
    sub_c, sub_f = [], []
    for g, F in zip(field.groups, facs):
        if g == TORUS:
            k = next(letters)
            sub_c.append(k)
            sub_f.append("P" + k)
        else:
            l, m, n = next(letters), next(letters), next(letters)
            sub_c.append(l + n + m)  # C[l, row n, col m]
            sub_f.append("P" + l + m + n)
    expr = "".join(sub_c) + "," + ",".join(sub_f) + "->P"
    out = np.einsum(expr, C, *facs, optimize=True)
    return complex(out[0]) if single else out


def plancherel_norm(field: CoefficientField) -> float:
    return field.plancherel_norm()


def quadrature_norm(field: CoefficientField) -> float:
    """L^2 norm of the synthesised field computed on a grid exact for |f|^2."""
    grid = Grid.for_band(field.groups, tuple(2 * c for c in field.cuts))
    v = synthesize_grid(field, grid)
    return math.sqrt(max(grid.mean(np.abs(v) ** 2).real, 0.0))


def tr_field() -> CoefficientField:
    """tr on SU(2): the l = 1/2 block I/2, so that 2 Tr(t(x) I/2) = tr(x)."""
    return CoefficientField((SU2,), {(1,): np.eye(2, dtype=complex) / 2})


def h_field() -> CoefficientField:
    """h = d/dpsi tr: rows multiplied by i m."""
    return CoefficientField((SU2,), {(1,): np.diag([-0.5j, 0.5j]) / 2})
