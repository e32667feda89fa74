"""Weight sequences M_k, their structural conditions and the associated function.

Everything is stored in log space: a sequence is the array log M_0..log M_Kmax.
Closed form families (Gevrey) also carry a vectorised ``log M_k`` rule so the
table can be extended on demand when an evaluation needs maximisers beyond the
current cutoff.

The associated function M(r) = sup_k (k log r - log M_k) is the Legendre
transform of k -> log M_k, so it only depends on the lower convex hull of the
points (k, log M_k). We build that hull once and evaluate by a binary search on
the hull slopes, which is exact (no r-grid) and vectorised.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln

__all__ = [
    "InvalidSequenceError",
    "WeightSequence",
    "ConditionReport",
    "AssociatedFunction",
    "Evaluation",
    "check_conditions",
    "associated_value",
    "neg_exp_associated",
    "polynomial_domination_constant",
    "halving_inequality_check",
    "log_r_grid",
    "shipped_sequences",
    "sequence_from_json",
]

MIN_KMAX = 64


class InvalidSequenceError(ValueError):
    pass


def _gevrey_rule(s: float) -> Callable[[np.ndarray], np.ndarray]:
    def rule(k):
        return s * gammaln(np.asarray(k, dtype=float) + 1.0)

    return rule


@dataclass(frozen=True, eq=False)
class WeightSequence:
    """A tabulated weight sequence in log space.

    ``A`` and ``H`` are the declared stability constants used by the halving
    inequality. Gevrey sequences carry the analytic pair A = 1, H = 2^s, which
    satisfies both (M.1) and (M.2) for every k. Table sequences get the fitted
    (M.2) pair from :func:`check_conditions`.
    """

    kind: str
    log_m: np.ndarray
    A: float = 1.0
    H: float = 2.0
    params: dict = field(default_factory=dict)
    rule: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        lm = np.asarray(self.log_m, dtype=float)
        if lm.ndim != 1 or lm.size < 8:
            raise InvalidSequenceError("need at least 8 tabulated values")
        if not np.all(np.isfinite(lm)):
            raise InvalidSequenceError("non-positive or non-finite M_k (log M_k must be finite)")
        lm.setflags(write=False)
        object.__setattr__(self, "log_m", lm)

    @property
    def kmax(self) -> int:
        return self.log_m.size - 1

    @property
    def extendable(self) -> bool:
        return self.rule is not None

    @classmethod
    def gevrey(cls, s: float, kmax: int = 1024, extendable: bool = True) -> "WeightSequence":
        if s < 1:
            raise InvalidSequenceError("Gevrey index must satisfy s >= 1")
        if kmax < MIN_KMAX:
            raise InvalidSequenceError(f"Kmax must be >= {MIN_KMAX}")
        rule = _gevrey_rule(float(s))
        lm = rule(np.arange(kmax + 1))
        return cls("gevrey", lm, A=1.0, H=2.0 ** s, params={"s": float(s)}, rule=rule if extendable else None)

    @classmethod
    def factorial_power_table(cls, s: float, kmax: int) -> "WeightSequence":
        """(k!)^s stored as a plain table, without the extension rule."""
        seq = cls.gevrey(s, kmax, extendable=False)
        return cls("factorial-power", seq.log_m, A=1.0, H=2.0 ** s, params={"s": float(s)})

    @classmethod
    def from_table(cls, values=None, log_values=None, A: float | None = None, H: float | None = None) -> "WeightSequence":
        if (values is None) == (log_values is None):
            raise InvalidSequenceError("give exactly one of values / log_values")
        if values is not None:
            v = np.asarray(values, dtype=float)
            if np.any(~np.isfinite(v)) or np.any(v <= 0):
                bad = int(np.flatnonzero(~(v > 0))[0]) if np.any(~(v > 0)) else -1
                raise InvalidSequenceError(f"non-positive M_k at k={bad}")
            lm = np.log(v)
        else:
            lm = np.asarray(log_values, dtype=float)
        seq = cls("table", lm)
        if A is None or H is None:
            fa, fh = _fit_stability(seq.log_m, which="M.2")
            A = fa if A is None else A
            H = fh if H is None else H
        return cls("table", seq.log_m, A=float(A), H=float(H))

    def extended(self, kmax: int) -> "WeightSequence":
        """Copy with the table extended to ``kmax`` (closed form families only)."""
        if kmax <= self.kmax:
            return self
        if self.rule is None:
            raise InvalidSequenceError("table sequence cannot be extended")
        lm = self.rule(np.arange(kmax + 1))
        return WeightSequence(self.kind, lm, self.A, self.H, dict(self.params), self.rule)

    def describe(self) -> dict:
        d = {"kind": self.kind, "kmax": self.kmax, "A": self.A, "H": self.H}
        d.update(self.params)
        return d


def sequence_from_json(obj: dict | str, kmax: int = 128) -> WeightSequence:
    """Parse the sequence file format: {"kind":"gevrey","s":2} or {"kind":"table","logM":[...]}."""
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("kind")
    if kind == "gevrey":
        return WeightSequence.gevrey(float(obj["s"]), kmax=max(int(obj.get("kmax", kmax)), MIN_KMAX))
    if kind == "table":
        if "logM" in obj:
            return WeightSequence.from_table(log_values=obj["logM"], A=obj.get("A"), H=obj.get("H"))
        if "M" in obj:
            return WeightSequence.from_table(values=obj["M"], A=obj.get("A"), H=obj.get("H"))
        raise InvalidSequenceError("table sequence needs 'logM' or 'M'")
    raise InvalidSequenceError(f"unknown sequence kind {kind!r}")


def shipped_sequences() -> dict[str, WeightSequence]:
    """The sequences the inequality suite is run on."""
    return {
        "gevrey-1": WeightSequence.gevrey(1.0),
        "gevrey-1.5": WeightSequence.gevrey(1.5),
        "gevrey-2": WeightSequence.gevrey(2.0),
        "gevrey-3": WeightSequence.gevrey(3.0),
        "factorial-power-2-table": WeightSequence.factorial_power_table(2.0, 1 << 16),
        "factorial-power-3-table": WeightSequence.factorial_power_table(3.0, 1 << 12),
    }


# --------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class ConditionReport:
    condition: str
    holds: bool
    truncated_at: int
    witness_k: int | None = None
    violation: float = 0.0
    constants: dict = field(default_factory=dict)
    note: str = ""

    def __post_init__(self):
        if not self.holds and self.witness_k is None:
            raise ValueError("a failing condition must carry a witness index")

    @property
    def verdict(self) -> str:
        return "holds-up-to-cutoff" if self.holds else f"fails at k={self.witness_k}"

    def to_dict(self) -> dict:
        return {
            "condition": self.condition,
            "verdict": self.verdict,
            "holds": self.holds,
            "truncated_at": self.truncated_at,
            "witness_k": self.witness_k,
            "violation": self.violation,
            "constants": self.constants,
            "note": self.note,
        }


def _rtol(x):
    return 1e-12 * np.maximum(1.0, np.abs(x))


def _stability_terms(lm: np.ndarray, which: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (k, base, slope) with the condition reading base_k - slope_k*log H <= log A."""
    K = lm.size - 1
    if which == "M.1":
        k = np.arange(K)
        return k, lm[1:] - lm[:-1], k.astype(float)
    k = np.arange(K // 2 + 1)
    return k, lm[2 * k] - 2 * lm[k], 2.0 * k


def _fit_stability(lm: np.ndarray, which: str, hmax: float = 1e6):
    """Minimal H (then A) making the stability bound settle inside the table.

    For a finite table any H is feasible with a large enough A, so feasibility
    is read as "the maximiser of base_k - slope_k log H lies in the first three
    quarters of the range", i.e. the bound is not still growing at the cutoff.
    Returns (A, H) or raises with the witness index.
    """
    k, base, slope = _stability_terms(lm, which)
    limit = 0.75 * k[-1]

    def argmax_at(logh):
        g = base - slope * logh
        j = int(np.argmax(g))
        return j, g[j]

    def feasible(logh):
        j, _ = argmax_at(logh)
        return k[j] <= limit

    grid = np.linspace(0.0, math.log(hmax), 241)
    ok = [feasible(x) for x in grid]
    if not any(ok):
        j, _ = argmax_at(grid[-1])
        raise _StabilityFailure(int(k[j]))
    first = ok.index(True)
    if first == 0:
        logh = 0.0
    else:
        lo, hi = grid[first - 1], grid[first]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if feasible(mid):
                hi = mid
            else:
                lo = mid
        logh = hi
    _, gmax = argmax_at(logh)
    return max(1.0, math.exp(gmax)), math.exp(logh)


class _StabilityFailure(Exception):
    def __init__(self, k):
        self.k = k


def _declared_feasible(lm, which, A, H):
    k, base, slope = _stability_terms(lm, which)
    viol = base - slope * math.log(H) - math.log(A)
    j = int(np.argmax(viol))
    return viol[j] <= _rtol(math.log(A) + slope[j] * math.log(H)), int(k[j]), float(viol[j])


def _growth_slope(d: np.ndarray) -> float:
    """Least squares slope of d_k against log k over the upper half of the table."""
    K = d.size
    k = np.arange(K // 2, K) + 1
    y = d[K // 2:]
    x = np.log(k)
    x = x - x.mean()
    return float(np.dot(x, y - y.mean()) / np.dot(x, x))


def check_conditions(seq: WeightSequence, ell_grid: Sequence[float] = (0.01, 0.1, 1.0, 10.0)) -> list[ConditionReport]:
    """Check (M.0)-(M.4), (LC) and (M.3') on the table, one report each.

    All verdicts are "up to cutoff". (M.1)/(M.2) return the minimal fitted
    (A, H) plus feasibility of the declared pair; (M.3)/(M.3') use the growth of
    d_k = log k - log(M_k/M_{k-1}) over the upper half of the table.
    """
    lm = seq.log_m
    K = seq.kmax
    if K + 1 < 8:
        raise InvalidSequenceError("need at least 8 tabulated values")
    out: list[ConditionReport] = []

    out.append(ConditionReport("(M.0)", abs(lm[0]) <= 1e-15, K, None if abs(lm[0]) <= 1e-15 else 0,
                               float(abs(lm[0])), {"M_0": float(math.exp(lm[0]))}))

    for which in ("M.1", "M.2"):
        name = f"({which})"
        try:
            A, H = _fit_stability(lm, which)
            ok, kw, v = _declared_feasible(lm, which, seq.A, seq.H)
            if which == "M.2":
                # also the min-form: M_k <= A H^k min_q M_q M_{k-q}
                mf_ok, mf_k, mf_v = _m2_min_form(lm, seq.A, seq.H)
            consts = {"A": A, "H": H, "declared_A": seq.A, "declared_H": seq.H, "declared_feasible": bool(ok)}
            note = ""
            if which == "M.2":
                consts["min_form_declared_feasible"] = bool(mf_ok)
                note = "min-form checked independently"
            out.append(ConditionReport(name, True, K, None, 0.0 if ok else v, consts, note))
        except _StabilityFailure as e:
            out.append(ConditionReport(name, False, K, e.k, float("inf"), {}, "bound still growing at cutoff for every H"))

    # (LC): 2 log M_k <= log M_{k-1} + log M_{k+1}
    lc = 2 * lm[1:-1] - lm[:-2] - lm[2:]
    bad = np.flatnonzero(lc > _rtol(lm[1:-1]))
    out.append(ConditionReport("(LC)", bad.size == 0, K, None if bad.size == 0 else int(bad[0] + 1),
                               float(max(lc.max(), 0.0))))
    mono = np.diff(lm)
    badm = np.flatnonzero(mono < -_rtol(lm[1:]))
    out.append(ConditionReport("(monotone)", badm.size == 0, K, None if badm.size == 0 else int(badm[0] + 1),
                               float(max(-mono.min(), 0.0))))

    # (M.3)/(M.3'): d_k = log k - (log M_k - log M_{k-1}), k >= 1
    kk = np.arange(1, K + 1)
    d = np.log(kk) - np.diff(lm)
    slope = _growth_slope(d)
    log_excess = gammaln(np.arange(K + 1) + 1.0) - lm  # log(k!/M_k)
    # fitted ell: smallest ell with log(k!/(ell^k M_k)) maximised inside the table
    ell = math.exp(float(np.max(d[K // 2:])))
    logC = float(np.max(log_excess - np.arange(K + 1) * math.log(ell)))
    wk = int(np.argmax(d[K // 2:]) + K // 2 + 1)
    m3 = slope <= 0.1
    out.append(ConditionReport("(M.3)", m3, K, None if m3 else wk, 0.0 if m3 else slope,
                               {"ell": ell, "C": math.exp(min(logC, 700.0)), "growth_slope": slope}))
    per_ell = {}
    for e in ell_grid:
        per_ell[str(e)] = float(np.max(log_excess - np.arange(K + 1) * math.log(e)))
    m3p = slope <= -0.1
    out.append(ConditionReport("(M.3')", m3p, K, None if m3p else wk, 0.0 if m3p else slope,
                               {"log_C_ell": per_ell, "growth_slope": slope}))

    # (M.4): log(M_r/r!) + log(M_s/s!) <= log(M_{r+s}/(r+s)!) for r+s <= K
    from . import _accel

    nlog = lm - gammaln(np.arange(K + 1) + 1.0)
    worst, wr, ws = _accel.superadditivity_violation(nlog)
    m4 = worst <= 1e-12 * max(1.0, float(np.abs(nlog).max()))
    out.append(ConditionReport("(M.4)", m4, K, None if m4 else wr + ws, max(worst, 0.0),
                               {"witness_r": wr, "witness_s": ws}))
    return out


def _m2_min_form(lm, A, H):
    K = lm.size - 1
    worst, wk = -math.inf, 0
    logA, logH = math.log(A), math.log(H)
    for k in range(K + 1):
        q = np.arange(k + 1)
        v = lm[k] - logA - k * logH - np.min(lm[q] + lm[k - q])
        if v > worst:
            worst, wk = v, k
    return worst <= _rtol(lm[wk]), wk, float(worst)


# --------------------------------------------------------------------------
# associated function


def _lower_hull(lm: np.ndarray) -> np.ndarray:
    """Indices of the lower convex hull of (k, lm[k]) (monotone chain)."""
    hull: list[int] = []
    for k in range(lm.size):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # remove j if it lies on or above segment i-k
            if (lm[j] - lm[i]) * (k - i) >= (lm[k] - lm[i]) * (j - i):
                hull.pop()
            else:
                break
        hull.append(k)
    return np.asarray(hull, dtype=np.int64)


@dataclass(frozen=True)
class Evaluation:
    values: np.ndarray
    kstar: np.ndarray
    saturated: np.ndarray

    @property
    def any_saturated(self) -> bool:
        return bool(np.any(self.saturated))


class AssociatedFunction:
    """M(r) = sup_k log(r^k / M_k), M(0) = 0.

    Immutable. Extension of a closed form table happens on a private copy
    under a lock, so concurrent readers see either the old or the new hull.
    """

    def __init__(self, seq: WeightSequence):
        self.seq = seq
        self._lock = threading.Lock()
        self._set_table(seq)

    def _set_table(self, seq):
        idx = _lower_hull(seq.log_m)
        ks = idx.astype(float)
        vals = seq.log_m[idx]
        slopes = np.diff(vals) / np.diff(ks)
        self._state = (seq, idx, vals, slopes)

    @property
    def kmax(self) -> int:
        return self._state[0].kmax

    def hull(self):
        """(k indices, log M at those k, slopes between consecutive vertices)."""
        _, idx, vals, slopes = self._state
        return idx, vals, slopes

    def ensure(self, r_max: float) -> None:
        """Extend a closed form table so that M(r) is not cutoff-saturated for r <= r_max."""
        seq = self._state[0]
        if not seq.extendable or r_max <= 0:
            return
        t = math.log(r_max)
        while True:
            _, idx, vals, slopes = self._state
            if slopes.size and slopes[-1] > t:
                return
            with self._lock:
                cur = self._state[0]
                if cur.kmax >= 1 << 22:
                    return
                self._set_table(cur.extended(2 * cur.kmax))

    def evaluate(self, r) -> Evaluation:
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("r must be nonnegative")
        pos = r > 0
        t = np.log(np.where(pos, r, 1.0))
        seq, idx, vals, slopes = self._state
        j = np.searchsorted(slopes, t, side="right")
        k = idx[j].astype(np.int64)
        v = k * t - vals[j]
        sat = (k == seq.kmax) & pos
        if seq.extendable and np.any(sat):
            # maximiser beyond the table: bisection on the closed form slopes
            kk, vv = self._beyond_table(t[sat], seq)
            k = k.copy()
            k[sat] = kk
            v = v.copy()
            v[sat] = vv
            sat = np.zeros_like(sat)
        v = np.where(pos, np.maximum(v, 0.0), 0.0)
        return Evaluation(v, k, sat)

    @staticmethod
    def _beyond_table(t: np.ndarray, seq: WeightSequence):
        rule = seq.rule
        lo = np.full(t.shape, seq.kmax, dtype=np.int64)  # slope(lo) <= t holds
        hi = lo.copy()
        for _ in range(62):
            s_hi = rule(hi + 1) - rule(hi)
            grow = s_hi <= t
            if not np.any(grow):
                break
            hi = np.where(grow, hi * 2, hi)
        # invariant: slope(lo+1) <= t (or lo at table end), slope(hi+1) > t
        for _ in range(64):
            if np.all(hi - lo <= 0):
                break
            mid = (lo + hi + 1) // 2
            ok = (rule(mid) - rule(mid - 1)) <= t
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid - 1)
        k = lo
        return k, k * t - rule(k)

    def __call__(self, r):
        return self.evaluate(r).values


def associated_value(af: AssociatedFunction, r):
    """M(r); exactly 0 at r = 0. Scalars in, float out; arrays in, arrays out."""
    v = af.evaluate(r).values
    return float(v) if np.ndim(v) == 0 else v


def neg_exp_associated(af: AssociatedFunction, r):
    """exp(-M(r)) = inf_k M_k / r^k, evaluated in log space."""
    v = np.exp(-af.evaluate(r).values)
    return float(v) if np.ndim(v) == 0 else v


def log_r_grid(lo: float = 1.0, hi: float = 1e8, n: int = 400) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass(frozen=True)
class DominationResult:
    C: float
    r_at_sup: float
    grid: dict


def polynomial_domination_constant(af: AssociatedFunction, p: float, q: float, delta: float,
                                   grid: np.ndarray | None = None) -> DominationResult:
    """sup over a log r-grid of r^p exp(-delta M(q r))."""
    if p < 0 or q <= 0 or delta <= 0:
        raise ValueError("need p >= 0, q > 0, delta > 0")
    g = log_r_grid() if grid is None else np.asarray(grid, dtype=float)
    logs = p * np.log(g) - delta * af(q * g)
    j = int(np.argmax(logs))
    return DominationResult(float(np.exp(logs[j])), float(g[j]),
                            {"lo": float(g[0]), "hi": float(g[-1]), "points": int(g.size), "spacing": "geometric"})


@dataclass(frozen=True)
class HalvingReport:
    q: float
    A: float
    H: float
    max_violation: float
    max_log_violation: float
    worst_r: float
    holds: bool
    grid: dict

    def to_dict(self):
        return dict(self.__dict__)


def halving_inequality_check(af: AssociatedFunction, q: float, grid: np.ndarray | None = None,
                             A: float | None = None, H: float | None = None, tol: float = 1e-10) -> HalvingReport:
    """Check exp(-M(qr)/2) <= sqrt(A) exp(-M(qr/H)) on the grid (r = 0 included)."""
    seq = af.seq
    A = seq.A if A is None else A
    H = seq.H if H is None else H
    g = np.concatenate([[0.0], log_r_grid() if grid is None else np.asarray(grid, dtype=float)])
    lhs = -0.5 * af(q * g)
    rhs = 0.5 * math.log(A) - af(q * g / H)
    diff = np.exp(lhs) - np.exp(rhs)
    ldiff = lhs - rhs
    j = int(np.argmax(diff))
    return HalvingReport(q, A, H, float(diff[j]), float(ldiff.max()), float(g[j]), bool(diff[j] <= tol),
                         {"lo": float(g[1]), "hi": float(g[-1]), "points": int(g.size), "includes_zero": True})
