"""Unitary duals of the circle and of SU(2), weights, dimensions and index flattening.

Conventions
-----------
* Torus(1): classes are k in Z, d = 1, Laplace eigenvalue nu = k^2.
* SU(2): classes are l in (1/2)N_0, d = 2l + 1, nu = l(l + 1), the Casimir
  eigenvalue. Other normalisations rescale <xi> by a bounded factor.
  Half-integers are stored doubled (``two_l``, ``two_m``) so that all index
  arithmetic stays in the integers.
* Weight <xi> = sqrt(1 + nu).
* SU(2) row index m runs over -l, -l+1, ..., l and maps to 1..2l+1 by
  ``m_index = l + m + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TORUS",
    "SU2",
    "RepIndex",
    "ProductFrequency",
    "FlatIndex",
    "enumerate_dual",
    "dimension_bound_check",
    "flatten",
    "unflatten",
    "m_to_index",
    "index_to_m",
    "weight",
    "dimension",
    "group_dim",
]

TORUS = "torus"
SU2 = "su2"
_GROUPS = (TORUS, SU2)


def _check_group(group: str) -> None:
    if group not in _GROUPS:
        raise ValueError(f"unknown group tag {group!r}; expected one of {_GROUPS}")


def group_dim(group: str) -> int:
    _check_group(group)
    return 1 if group == TORUS else 3


def laplace_eigenvalue(group: str, label: int) -> int | float:
    """nu for a class label (k for the torus, 2l for SU(2))."""
    if group == TORUS:
        return label * label
    # l(l+1) with l = label/2  ->  label(label+2)/4
    return label * (label + 2) / 4


def weight(group: str, label: int) -> float:
    return math.sqrt(1.0 + laplace_eigenvalue(group, label))


def dimension(group: str, label: int) -> int:
    return 1 if group == TORUS else label + 1


@dataclass(frozen=True, order=True)
class RepIndex:
    """One class of the unitary dual. ``label`` is k (torus) or 2l (SU(2))."""

    group: str
    label: int

    def __post_init__(self):
        _check_group(self.group)
        if self.group == SU2 and self.label < 0:
            raise ValueError("SU(2) label 2l must be >= 0")

    @property
    def dim(self) -> int:
        return dimension(self.group, self.label)

    @property
    def nu(self) -> float:
        return laplace_eigenvalue(self.group, self.label)

    @property
    def weight(self) -> float:
        return weight(self.group, self.label)

    @property
    def ell(self) -> float:
        if self.group != SU2:
            raise AttributeError("torus classes have no spin")
        return self.label / 2

    def rows(self) -> list:
        """Row labels: [k] for the torus, [2m for m = -l..l] for SU(2)."""
        if self.group == TORUS:
            return [self.label]
        return list(range(-self.label, self.label + 1, 2))


@dataclass(frozen=True)
class ProductFrequency:
    """A slot (xi, eta, m, r) of the product dual; m, r are 1-based row indices."""

    xi: RepIndex
    eta: RepIndex | None
    m: int
    r: int = 1

    def __post_init__(self):
        if not 1 <= self.m <= self.xi.dim:
            raise ValueError("row index m out of range")
        d2 = 1 if self.eta is None else self.eta.dim
        if not 1 <= self.r <= d2:
            raise ValueError("row index r out of range")

    @property
    def weight(self) -> float:
        return self.xi.weight + (0.0 if self.eta is None else self.eta.weight)

    def to_dict(self) -> dict:
        d = {"xi": [self.xi.group, self.xi.label], "m": self.m}
        if self.eta is not None:
            d.update({"eta": [self.eta.group, self.eta.label], "r": self.r})
        return d


@dataclass(frozen=True)
class FlatIndex:
    i: int
    j: int


def m_to_index(two_l: int, two_m: int) -> int:
    """1-based row index for weight m (both doubled)."""
    if abs(two_m) > two_l or (two_l - two_m) % 2:
        raise ValueError(f"invalid m={two_m}/2 for l={two_l}/2")
    return (two_l + two_m) // 2 + 1


def index_to_m(two_l: int, idx: int) -> int:
    if not 1 <= idx <= two_l + 1:
        raise ValueError("index out of range")
    return 2 * (idx - 1) - two_l


def flatten(m: int, n: int, r: int, s: int, d_eta: int, d_xi: int | None = None) -> FlatIndex:
    """i = d_eta (m-1) + r and j = d_eta (n-1) + s (all 1-based)."""
    if d_eta < 1 or min(m, n, r, s) < 1 or r > d_eta or s > d_eta:
        raise ValueError("index out of range")
    if d_xi is not None and (m > d_xi or n > d_xi):
        raise ValueError("index out of range")
    return FlatIndex(d_eta * (m - 1) + r, d_eta * (n - 1) + s)


def unflatten(idx: FlatIndex, d_eta: int) -> tuple[int, int, int, int]:
    if idx.i < 1 or idx.j < 1:
        raise ValueError("index out of range")
    m, r = divmod(idx.i - 1, d_eta)
    n, s = divmod(idx.j - 1, d_eta)
    return m + 1, n + 1, r + 1, s + 1


def enumerate_dual(group: str, W: float) -> list[RepIndex]:
    """All classes with <xi> <= W, sorted by weight (ties: k ascending)."""
    _check_group(group)
    if W < 1:
        raise ValueError("weight cutoff must be >= 1")
    W2 = W * W
    out: list[RepIndex] = []
    if group == TORUS:
        kmax = int(math.isqrt(int(math.floor(W2 - 1)))) if W2 >= 1 else 0
        while 1 + (kmax + 1) ** 2 <= W2:
            kmax += 1
        for k in range(-kmax, kmax + 1):
            if 1 + k * k <= W2:
                out.append(RepIndex(TORUS, k))
        out.sort(key=lambda x: (x.nu, x.label))
    else:
        two_l = 0
        # 1 + l(l+1) <= W^2  <=>  4 + two_l(two_l+2) <= 4 W^2
        while 4 + two_l * (two_l + 2) <= 4 * W2 + 1e-9:
            out.append(RepIndex(SU2, two_l))
            two_l += 1
    return out


def dimension_bound_check(reps: list[RepIndex], dim_g: int | None = None) -> float:
    """Smallest C with d <= C <xi>^{dim G / 2} over the list."""
    if not reps:
        raise ValueError("empty list")
    dg = group_dim(reps[0].group) if dim_g is None else dim_g
    return max(r.dim / r.weight ** (dg / 2) for r in reps)


# --------------------------------------------------------------------------
# array helpers used by the scan engine


def factor_rows(group: str, cutoff: int, reduced: bool = True):
    """Row table of one factor for the divisor scan.

    ``cutoff`` is kmax (|k| <= kmax) for the torus and 2*lmax for SU(2).
    Returns dict of arrays sorted by weight: ``val2`` (2 x eigenvalue index,
    i.e. 2k or 2m), ``label`` (k or 2l), ``w`` and ``mult`` (number of classes
    sharing the row when ``reduced``).

    Reduced SU(2) rows keep one row per m with the smallest admissible
    l = |m|; the divisor does not depend on l and the weight grows with l, so
    every minimum over l is attained there.
    """
    _check_group(group)
    if group == TORUS:
        k = np.arange(-cutoff, cutoff + 1, dtype=np.int64)
        w = np.sqrt(1.0 + k.astype(float) ** 2)
        val2, label, mult = 2 * k, k, np.ones_like(k)
    elif reduced:
        two_m = np.arange(-cutoff, cutoff + 1, dtype=np.int64)
        two_l = np.abs(two_m)
        w = np.sqrt(1.0 + two_l * (two_l + 2) / 4.0)
        val2, label = two_m, two_l
        mult = (cutoff - two_l) // 2 + 1
    else:
        ls, ms = [], []
        for tl in range(cutoff + 1):
            for tm in range(-tl, tl + 1, 2):
                ls.append(tl)
                ms.append(tm)
        label = np.asarray(ls, dtype=np.int64)
        val2 = np.asarray(ms, dtype=np.int64)
        w = np.sqrt(1.0 + label * (label + 2) / 4.0)
        mult = np.ones_like(label)
    order = np.lexsort((val2, w))
    return {"val2": val2[order], "label": label[order], "w": w[order], "mult": mult[order]}
