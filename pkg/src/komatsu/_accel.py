"""Hot loops with a numba backend and a pure numpy fallback.

Set ``KOMATSU_DISABLE_NUMBA=1`` to force the numpy path (it is also used when
numba cannot be imported). Both paths implement the same contracts and are
cross-checked in the test suite; ``benchmarks/bench_scan.py`` times them.
"""

from __future__ import annotations

import math
import os

import numpy as np

_WANT_NUMBA = os.environ.get("KOMATSU_DISABLE_NUMBA", "").strip().lower() not in ("1", "true", "yes", "on")

try:  # pragma: no cover - exercised implicitly
    if not _WANT_NUMBA:
        raise ImportError
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"

# exact-zero modes of the divisor scan
MODE_FLOAT = 0  # coupling known only as a float: no exact zeros, tiny values flagged ambiguous
MODE_IRRATIONAL = 1  # irrational real coupling: zero iff both rational parts vanish
MODE_RATIONAL = 2  # rational coupling: zero iff the scaled integer combination vanishes

FIT_ASSOC = 0  # value log|D| + M(N w), parameter log N
FIT_POLY = 1  # value log|D| + p log w, parameter p


# --------------------------------------------------------------------------
# (M.4) superadditivity


def _superadd_numpy(nlog):
    K = nlog.size - 1
    worst, wr, ws = -math.inf, 0, 0
    for r in range(K + 1):
        s = np.arange(r, K - r + 1)
        if s.size == 0:
            break
        v = nlog[r] + nlog[s] - nlog[r + s]
        j = int(np.argmax(v))
        if v[j] > worst:
            worst, wr, ws = float(v[j]), r, int(s[j])
    return worst, wr, ws


if HAVE_NUMBA:

    @njit(cache=True)
    def _superadd_numba(nlog):
        K = nlog.size - 1
        worst = -np.inf
        wr = 0
        ws = 0
        for r in range(K + 1):
            for s in range(r, K - r + 1):
                v = nlog[r] + nlog[s] - nlog[r + s]
                if v > worst:
                    worst = v
                    wr = r
                    ws = s
        return worst, wr, ws


def superadditivity_violation(nlog: np.ndarray) -> tuple[float, int, int]:
    """max over r <= s, r+s <= K of nlog[r] + nlog[s] - nlog[r+s], with its witness."""
    nlog = np.ascontiguousarray(nlog, dtype=np.float64)
    if HAVE_NUMBA:
        w, r, s = _superadd_numba(nlog)
        return float(w), int(r), int(s)
    return _superadd_numpy(nlog)


# --------------------------------------------------------------------------
# divisor scan with per weight-bin minimum reduction


def assoc_from_hull(t, hk, hv, hs):
    """M at log-argument t from hull arrays (numpy, vectorised)."""
    j = np.searchsorted(hs, t, side="right")
    return np.maximum(hk[j] * t - hv[j], 0.0)


if HAVE_NUMBA:

    @njit(cache=True)
    def _fitval(kind, param, w, hk, hv, hs):
        lw = math.log(w)
        if kind == 1:
            return param * lw
        t = param + lw
        lo = 0
        hi = hs.size
        while lo < hi:
            mid = (lo + hi) // 2
            if hs[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        v = hk[lo] * t - hv[lo]
        return v if v > 0.0 else 0.0

    @njit(cache=True)
    def _scan_numba(pr, zp, sp, w1, br, zb, sb, w2, pim, bim, a_re, a_im, mode, im_zero,
                    cand_rel, amb_tol, edges, fkind, fparam, hk, hv, hs, lb,
                    best, bi, bj, zi, zj, ci, cj, counts):
        n1 = pr.size
        n2 = br.size
        nb = edges.size - 1
        nf = fkind.size
        aabs = math.hypot(a_re, a_im)
        thr = np.empty((nf, nb))
        for f in range(nf):
            for b in range(nb):
                thr[f, b] = math.exp(best[f, b] - lb[f, b]) if best[f, b] < np.inf else np.inf
        nz = counts[0]
        nc = counts[1]
        na = counts[2]
        for i in range(n1):
            b = 0
            for j in range(n2):
                w = w1[i] + w2[j]
                while b < nb - 1 and w >= edges[b + 1]:
                    b += 1
                dre = pr[i] + a_re * br[j] - a_im * bim
                dim = pim + a_re * bim + a_im * br[j]
                ad = math.hypot(dre, dim)
                if mode == 1:
                    if im_zero and zp[i] == 0 and zb[j] == 0:
                        if nz < zi.size:
                            zi[nz] = i
                            zj[nz] = j
                        nz += 1
                        continue
                    if ad < cand_rel * (sp[i] + aabs * sb[j] + 1.0):
                        if nc < ci.size:
                            ci[nc] = i
                            cj[nc] = j
                        nc += 1
                        continue
                elif mode == 2:
                    if im_zero and zp[i] + zb[j] == 0:
                        if nz < zi.size:
                            zi[nz] = i
                            zj[nz] = j
                        nz += 1
                        continue
                else:
                    if ad < amb_tol * (sp[i] + aabs * sb[j] + 1.0):
                        na += 1
                        if ad == 0.0:
                            continue
                for f in range(nf):
                    if ad < thr[f, b]:
                        v = math.log(ad) + _fitval(fkind[f], fparam[f], w, hk, hv, hs)
                        if v < best[f, b]:
                            best[f, b] = v
                            bi[f, b] = i
                            bj[f, b] = j
                            thr[f, b] = math.exp(v - lb[f, b])
        counts[0] = nz
        counts[1] = nc
        counts[2] = na


def _fitval_numpy(kind, param, w, hk, hv, hs):
    lw = np.log(w)
    if kind == FIT_POLY:
        return param * lw
    return assoc_from_hull(param + lw, hk, hv, hs)


def _scan_numpy(pr, zp, sp, w1, br, zb, sb, w2, pim, bim, a_re, a_im, mode, im_zero,
                cand_rel, amb_tol, edges, fkind, fparam, hk, hv, hs, lb,
                best, bi, bj, zi, zj, ci, cj, counts, chunk_elems=1 << 20):
    n2 = br.size
    nb = edges.size - 1
    aabs = math.hypot(a_re, a_im)
    rows = max(1, chunk_elems // max(n2, 1))
    for i0 in range(0, pr.size, rows):
        sl = slice(i0, min(i0 + rows, pr.size))
        W = w1[sl, None] + w2[None, :]
        dre = pr[sl, None] + a_re * br[None, :] - a_im * bim
        dim = pim + a_re * bim + a_im * br[None, :]
        ad = np.hypot(dre, dim)
        keep = np.ones(ad.shape, dtype=bool)
        scale = sp[sl, None] + aabs * sb[None, :] + 1.0
        if mode == MODE_IRRATIONAL:
            z = (zp[sl, None] == 0) & (zb[None, :] == 0) if im_zero else np.zeros_like(keep)
            c = (ad < cand_rel * scale) & ~z
            keep &= ~(z | c)
            _append(z, i0, zi, zj, counts, 0)
            _append(c, i0, ci, cj, counts, 1)
        elif mode == MODE_RATIONAL:
            z = (zp[sl, None] + zb[None, :] == 0) if im_zero else np.zeros_like(keep)
            keep &= ~z
            _append(z, i0, zi, zj, counts, 0)
        else:
            amb = ad < amb_tol * scale
            counts[2] += int(amb.sum())
            keep &= ad > 0
        ii, jj = np.nonzero(keep)
        if ii.size == 0:
            continue
        wv = W[ii, jj]
        la = np.log(ad[ii, jj])
        bins = np.clip(np.searchsorted(edges, wv, side="right") - 1, 0, nb - 1)
        for f in range(fkind.size):
            v = la + _fitval_numpy(fkind[f], fparam[f], wv, hk, hv, hs)
            order = np.lexsort((v, bins))
            bs = bins[order]
            first = np.ones(bs.size, dtype=bool)
            first[1:] = bs[1:] != bs[:-1]
            sel = order[first]
            for k in range(sel.size):
                e = sel[k]
                b = bins[e]
                if v[e] < best[f, b]:
                    best[f, b] = v[e]
                    bi[f, b] = ii[e] + i0
                    bj[f, b] = jj[e]


def _append(mask, i0, bufi, bufj, counts, slot):
    ii, jj = np.nonzero(mask)
    n = counts[slot]
    room = max(0, bufi.size - n)
    take = min(room, ii.size)
    bufi[n:n + take] = ii[:take] + i0
    bufj[n:n + take] = jj[:take]
    counts[slot] = n + ii.size


def scan_divisors(pr, zp, sp, w1, br, zb, sb, w2, pim, bim, a_re, a_im, mode, im_zero,
                  cand_rel, amb_tol, edges, fkind, fparam, hk, hv, hs, lb,
                  best, bi, bj, zi, zj, ci, cj, counts, backend: str | None = None):
    """Scan all pairs (row1 i, row2 j), updating per (fit, bin) minima in place.

    D = (pr_i + i*pim) + a * (br_j + i*bim). Exact zeros and refinement
    candidates are written to their buffers (counts may exceed capacity, in
    which case the caller must rerun with larger buffers) and skipped by the
    reduction. Rows must be sorted by weight for the numba bin pointer.
    """
    use = backend or BACKEND
    args = (pr, zp, sp, w1, br, zb, sb, w2, float(pim), float(bim), float(a_re), float(a_im), int(mode),
            bool(im_zero), float(cand_rel), float(amb_tol), edges, fkind, fparam, hk, hv, hs, lb,
            best, bi, bj, zi, zj, ci, cj, counts)
    if use == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba backend requested but unavailable")
        _scan_numba(*args)
    else:
        _scan_numpy(*args)
