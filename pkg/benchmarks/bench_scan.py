"""Time the divisor scan with the numba kernels and with the numpy fallback.

    python3 benchmarks/bench_scan.py [--cut 2000] [--repeat 3]

Both backends must produce identical bin minima; the script checks that
before reporting timings.
"""

import argparse
import math
import time

import numpy as np

from komatsu import _accel
from komatsu.operator import VectorFieldSpec, divisor_spectrum
from komatsu.weights import AssociatedFunction, WeightSequence

CASES = {
    "T2 golden": lambda: VectorFieldSpec("torus", "torus", {"pattern": "golden"}),
    "T1xS3 example": lambda: VectorFieldSpec("torus", "su2", {"pattern": "factorial-pow10"}, q_const=(0, "1/2")),
}


def _time(sp, fits, af, backend, repeat):
    best = np.inf
    res = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = sp.scan(fits, af, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, res


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cut", type=float, default=2000.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    af = AssociatedFunction(WeightSequence.gevrey(2.0))
    fits = [(_accel.FIT_ASSOC, math.log(n)) for n in (0.25, 0.5, 1.0, 2.0)]
    backends = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])
    print(f"{'case':<16} {'backend':<8} {'seconds':>10}")
    for name, make in CASES.items():
        sp = divisor_spectrum(make(), args.cut, args.cut if name.startswith("T2") else 60)
        if "numba" in backends:
            sp.scan(fits, af, backend="numba")  # compile outside the timing
        out = {}
        for b in backends:
            t, res = _time(sp, fits, af, b, args.repeat)
            out[b] = res
            print(f"{name:<16} {b:<8} {t:10.3f}")
        if len(out) == 2:
            assert np.array_equal(out["numpy"].best, out["numba"].best), "backends disagree"


if __name__ == "__main__":
    main()
