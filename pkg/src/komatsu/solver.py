"""Solving L u = f in coefficient space, admissibility, decay classes and adversarial fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .duals import TORUS, RepIndex
from .operator import DiophantineVerdict, DivisorRecord, VectorFieldSpec
from .transforms import CoefficientField
from .weights import AssociatedFunction

__all__ = [
    "InadmissibleError",
    "InsufficientSpanError",
    "AdmissibilityReport",
    "DecayVerdict",
    "check_admissible",
    "solve",
    "apply",
    "kernel_component",
    "classify_decay",
    "adversarial_field",
    "LABELS",
]

ZERO_TOL = 1e-13

# strongest first; each label implies every later one
LABELS = (
    "Beurling-function",
    "Roumieu-function",
    "smooth",
    "distribution-finite-order",
    "Roumieu-ultradistribution",
    "Beurling-ultradistribution",
)


class InadmissibleError(ValueError):
    pass


class InsufficientSpanError(ValueError):
    pass


def _check_groups(f: CoefficientField, spec: VectorFieldSpec):
    if tuple(f.groups) != spec.groups:
        raise ValueError(f"field groups {f.groups} do not match operator groups {spec.groups}")


def _rows2(group, label):
    """Doubled eigenvalue index per row: 2k on the torus, 2m on SU(2)."""
    rows = RepIndex(group, label).rows()
    return [2 * r for r in rows] if group == TORUS else rows


def _rows(spec, key):
    r1 = _rows2(spec.g1, key[0])
    r2 = _rows2(spec.g2, key[1]) if spec.g2 is not None else None
    return r1, r2


def block_divisors(spec: VectorFieldSpec, key) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(D, zero mask, ambiguous mask) on the flattened rows of one block."""
    r1, r2 = _rows(spec, key)
    return spec.row_divisors(np.asarray(r1), None if r2 is None else np.asarray(r2))


@dataclass(frozen=True)
class AdmissibilityReport:
    offending: tuple  # (key, row, col, |value|)
    max_offending: float
    tolerance: float
    n_ambiguous: int = 0

    @property
    def admissible(self) -> bool:
        return not self.offending

    @property
    def verdict(self) -> str:
        return "admissible" if self.admissible else "inadmissible"

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "max_offending": self.max_offending,
            "tolerance": self.tolerance,
            "n_ambiguous": self.n_ambiguous,
            "offending": [{"key": list(k), "row": i, "col": j, "abs": a} for k, i, j, a in self.offending[:100]],
        }


def check_admissible(f: CoefficientField, spec: VectorFieldSpec, rel_tol: float = ZERO_TOL) -> AdmissibilityReport:
    """f must vanish (to rel_tol * ||f||) on every row whose divisor is exactly zero."""
    _check_groups(f, spec)
    tol = rel_tol * f.plancherel_norm()
    bad = []
    worst = 0.0
    namb = 0
    for key in f.keys():
        blk = f.blocks[key]
        _, zero, amb = block_divisors(spec, key)
        namb += int(amb.sum())
        for i in np.nonzero(zero)[0]:
            for j in range(blk.shape[1]):
                a = abs(blk[i, j])
                if a > tol:
                    bad.append((key, int(i) + 1, j + 1, float(a)))
                    worst = max(worst, float(a))
    return AdmissibilityReport(tuple(bad), worst, tol, namb)


def solve(f: CoefficientField, spec: VectorFieldSpec, check: bool = True) -> CoefficientField:
    """Canonical solution: u = f / (i D) off the kernel rows, 0 on them."""
    _check_groups(f, spec)
    if check:
        rep = check_admissible(f, spec)
        if not rep.admissible:
            k, i, j, _ = rep.offending[0]
            raise InadmissibleError(f"f is nonzero on kernel frequency {k} row {i} col {j}")
    out = {}
    for key, blk in f.blocks.items():
        D, zero, _ = block_divisors(spec, key)
        if np.any((D == 0) & ~zero):
            raise OverflowError(f"divisor underflows float64 in block {key}")
        mult = np.where(zero, 0.0, 1.0 / np.where(zero, 1.0, 1j * D))
        out[key] = blk * mult[:, None]
    return CoefficientField(f.groups, out, f.cuts)


def apply(spec: VectorFieldSpec, u: CoefficientField) -> CoefficientField:
    """Multiply every row by i D."""
    _check_groups(u, spec)
    out = {}
    for key, blk in u.blocks.items():
        D, _, _ = block_divisors(spec, key)
        out[key] = blk * (1j * D)[:, None]
    return CoefficientField(u.groups, out, u.cuts)


def kernel_component(f: CoefficientField, spec: VectorFieldSpec) -> CoefficientField:
    """The part of f on kernel rows (free additive part of any solution)."""
    out = {}
    for key, blk in f.blocks.items():
        _, zero, _ = block_divisors(spec, key)
        if zero.any():
            out[key] = blk * zero[:, None]
    return CoefficientField(f.groups, out, f.cuts)


# --------------------------------------------------------------------------
# decay classification


@dataclass(frozen=True)
class SideFit:
    param: float
    log_C: float
    log_C_initial: float
    stable: bool
    curve: tuple  # values per sample, aligned with DecayVerdict.w

    def to_dict(self, with_curve=True):
        d = {"param": self.param, "log_C": self.log_C, "log_C_initial": self.log_C_initial, "stable": self.stable}
        if with_curve:
            d["curve"] = list(self.curve)
        return d


@dataclass(frozen=True)
class DecayVerdict:
    label: str
    labels: tuple
    w: tuple
    log_abs: tuple
    function_side: tuple
    distribution_side: tuple
    poly_function: tuple
    poly_distribution: tuple
    fitted_N: float | None
    fitted_order: float | None
    stability_factor: float
    qualifier: str = "fit on finite data, not a proof"

    def has(self, label: str) -> bool:
        return label in self.labels

    def to_dict(self, with_curves=True):
        return {
            "label": self.label,
            "labels": list(self.labels),
            "fitted_N": self.fitted_N,
            "fitted_order": self.fitted_order,
            "stability_factor": self.stability_factor,
            "qualifier": self.qualifier,
            "w": list(self.w) if with_curves else None,
            "log_abs": list(self.log_abs) if with_curves else None,
            "function_side": [s.to_dict(with_curves) for s in self.function_side],
            "distribution_side": [s.to_dict(with_curves) for s in self.distribution_side],
            "poly_function": [s.to_dict(False) for s in self.poly_function],
            "poly_distribution": [s.to_dict(False) for s in self.poly_distribution],
        }


def _samples(c: CoefficientField):
    w, la = [], []
    for key in c.keys():
        m = float(np.max(np.abs(c.blocks[key]))) if c.blocks[key].size else 0.0
        if m > 0:
            w.append(c.weight(key))
            la.append(math.log(m))
    return np.asarray(w), np.asarray(la)


def _side(values, w, split, factor, param):
    init = values[w <= split]
    lc0 = float(np.max(init)) if init.size else float(values[0])
    lc = float(np.max(values))
    return SideFit(float(param), lc, lc0, lc - lc0 < math.log(factor), tuple(float(v) for v in values))


def classify_decay(c: CoefficientField, weights: AssociatedFunction,
                   n_grid=tuple(2.0 ** j for j in range(-4, 5)),
                   orders=(1.0, 2.0, 4.0, 8.0), stability_factor: float = 10.0,
                   min_count: int = 30, min_ratio: float = 10.0) -> DecayVerdict:
    """Label the decay of per-block maxima |c| against exp(+-M(N w)) and w^{+-p}.

    A characterization holds when its fitted constant, the max of the
    residual curve, grows by less than ``stability_factor`` between the
    subsample w <= W/10 and the full data. Roumieu function: some N holds on
    the function side; Beurling function: every grid N; ultradistributions
    the dual quantifiers on the distribution side. The reported label is the
    strongest in the inclusion chain; all weaker ones are implied.
    """
    w, la = _samples(c)
    if w.size < min_count:
        raise InsufficientSpanError(f"{w.size} nonzero blocks, need {min_count}")
    if w.max() / w.min() < min_ratio:
        raise InsufficientSpanError(f"weight ratio {w.max() / w.min():.3g} below {min_ratio}")
    order = np.argsort(w, kind="stable")
    w, la = w[order], la[order]
    split = w.max() / 10.0
    grid = tuple(float(n) for n in n_grid)
    weights.ensure(max(grid) * w.max())

    def M(n):
        return weights(n * w)

    fn = tuple(_side(la + M(n), w, split, stability_factor, n) for n in grid)
    ds = tuple(_side(la - M(n), w, split, stability_factor, n) for n in grid)
    pf = tuple(_side(la + p * np.log(w), w, split, stability_factor, p) for p in orders)
    pd = tuple(_side(la - p * np.log(w), w, split, stability_factor, p) for p in (0.0,) + tuple(orders))

    holds = {
        "Beurling-function": all(s.stable for s in fn),
        "Roumieu-function": any(s.stable for s in fn),
        "smooth": all(s.stable for s in pf),
        "distribution-finite-order": any(s.stable for s in pd),
        "Roumieu-ultradistribution": all(s.stable for s in ds),
        "Beurling-ultradistribution": any(s.stable for s in ds),
    }
    label = next((lab for lab in LABELS if holds[lab]), "inconclusive")
    labels = LABELS[LABELS.index(label):] if label != "inconclusive" else ()

    fitted_N = None
    if holds["Roumieu-function"]:
        good = [s.param for s in fn if s.stable]
        lo = max(good)
        bigger = [n for n in grid if n > lo]
        if bigger:
            hi = min(bigger)
            weights.ensure(hi * w.max())
            for _ in range(40):
                mid = math.sqrt(lo * hi)
                if _side(la + M(mid), w, split, stability_factor, mid).stable:
                    lo = mid
                else:
                    hi = mid
        fitted_N = lo
    fitted_order = None
    good = [s.param for s in pd if s.stable]
    if good and not holds["smooth"]:
        fitted_order = min(good)
    return DecayVerdict(label, labels, tuple(float(x) for x in w), tuple(float(x) for x in la),
                        fn, ds, pf, pd, fitted_N, fitted_order, stability_factor)


# --------------------------------------------------------------------------
# adversarial fields from violation witnesses

_MODES = ("hypo-roumieu", "solv-roumieu", "hypo-beurling", "solv-beurling")


def adversarial_field(spec: VectorFieldSpec, witnesses, mode: str) -> CoefficientField:
    """Fields of the necessity arguments, supported on witness frequencies.

    ``witnesses`` is a list of DivisorRecord or a DiophantineVerdict (its
    violation witnesses are used). At each witness (row (m, r), column 1):

    * hypo-roumieu: f = D w, so the canonical u has |u| = w,
    * solv-roumieu / solv-beurling: f = 1,
    * hypo-beurling: f = i D, so u = 1.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}")
    if isinstance(witnesses, DiophantineVerdict):
        witnesses = witnesses.witnesses()
    recs = [r for r in witnesses if isinstance(r, DivisorRecord) and not r.exact_zero]
    if not recs:
        raise ValueError("no violation witnesses: nothing to build")
    blocks: dict = {}
    for rec in recs:
        fq = rec.freq
        key = (fq.xi.label,) if fq.eta is None else (fq.xi.label, fq.eta.label)
        d2 = 1 if fq.eta is None else fq.eta.dim
        d = fq.xi.dim * d2
        i = d2 * (fq.m - 1) + fq.r - 1
        if mode == "hypo-roumieu":
            v = rec.D * rec.w
        elif mode == "hypo-beurling":
            v = 1j * rec.D
        else:
            v = 1.0
        blk = blocks.setdefault(key, np.zeros((d, d), complex))
        blk[i, 0] = v
    return CoefficientField(spec.groups, blocks)
