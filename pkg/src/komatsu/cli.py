"""Command line front end: ``komatsu <command> ...``.

Exit codes: 0 success, 1 invalid input, 2 a condition violation was detected.
Every report embeds a run manifest; without ``--timing`` reports are
byte-identical across reruns.
"""

from __future__ import annotations

import json
import math
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, _accel
from .diophantine import ContinuedFraction, approximation_profile, named_pattern
from .duals import SU2, TORUS
from .operator import (
    DEFAULT_N_GRID,
    VectorFieldSpec,
    convergent_extrapolation,
    diophantine_fit,
    divisor_spectrum,
    kernel_set,
    precision_bits,
    smoothness_fit,
)
from .perturbation import conjugation_residual, reduce
from .report import RunManifest, digest_bytes, digest_file, dumps, write_report
from .solver import InadmissibleError, InsufficientSpanError, check_admissible, classify_decay, solve
from .transforms import CoefficientField, analyze, h_function, tr_function
from .weights import AssociatedFunction, InvalidSequenceError, WeightSequence, check_conditions, sequence_from_json

EXIT_OK, EXIT_INVALID, EXIT_VIOLATION = 0, 1, 2


class _Invalid(Exception):
    pass


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise _Invalid(f"cannot read {path}: {exc}") from exc


def _manifest(command, inputs=None, truncation=None, t0=None, timing=False):
    return RunManifest(
        command=command,
        inputs=inputs or {},
        truncation=truncation or {},
        precision_bits=precision_bits(),
        tool_version=__version__,
        wall_time=(time.perf_counter() - t0) if (timing and t0 is not None) else None,
        backend=_accel.BACKEND,
    )


def _emit(path, manifest, body):
    text = write_report(path, manifest, body)
    if path is None or path == "-":
        click.echo(text, nl=False)


def _n_grid(text):
    if not text:
        return DEFAULT_N_GRID
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError as exc:
        raise _Invalid(f"bad N grid {text!r}") from exc
    if not vals or min(vals) <= 0:
        raise _Invalid("N grid values must be positive")
    return vals


def _run(fn):
    """Map exceptions to exit codes."""
    try:
        code = fn()
    except (_Invalid, InvalidSequenceError, ValueError, KeyError, TypeError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INVALID)
    sys.exit(code or EXIT_OK)


@click.group()
@click.version_option(__version__)
def main():
    """Komatsu-class hypoellipticity and solvability toolkit."""


# --------------------------------------------------------------------------
# weights


@main.group()
def weights():
    """Weight sequences and their conditions."""


@weights.command("check")
@click.option("--seq", "seq_path", required=True, type=click.Path(), help="sequence JSON file")
@click.option("--kmax", type=int, default=128, show_default=True, help="table cutoff for rule-based sequences")
@click.option("--report", "report", default=None, help="output report (default stdout)")
@click.option("--timing", is_flag=True, help="record wall time in the manifest")
def weights_check(seq_path, kmax, report, timing):
    """Check (M.0)...(M.4) and related conditions; exit 1 when a required one fails."""
    t0 = time.perf_counter()

    def go():
        obj = _load_json(seq_path)
        seq = sequence_from_json(obj, kmax=kmax)
        reps = check_conditions(seq)
        body = {"sequence": seq.describe(), "conditions": [r.to_dict() for r in reps]}
        _emit(report, _manifest("weights check", {"seq": digest_file(seq_path)}, {"kmax": seq.kmax}, t0=t0, timing=timing), body)
        required = {"(M.0)", "(M.1)", "(M.2)", "(LC)"}
        bad = [r.condition for r in reps if not r.holds and r.condition in required]
        if bad:
            click.echo(f"violated: {', '.join(bad)}", err=True)
            return EXIT_INVALID
        return EXIT_OK

    _run(go)


# --------------------------------------------------------------------------
# analyze


def _verdict_body(spec, sp, verdict):
    return {"operator": spec.describe(), "truncation": sp.truncation(), "verdict": verdict.to_dict()}


@main.command("analyze")
@click.option("--op", "op_path", required=True, type=click.Path())
@click.option("--seq", "seq_path", required=True, type=click.Path())
@click.option("--kmax", type=float, default=100, show_default=True, help="torus cutoff (|k| <= kmax)")
@click.option("--lmax", type=float, default=20, show_default=True, help="SU(2) cutoff (l <= lmax)")
@click.option("--mode", type=click.Choice(["roumieu", "beurling"]), default="roumieu", show_default=True)
@click.option("--n-grid", default=None, help="comma separated N values (default 2^-4..2^4)")
@click.option("--smooth-orders", default=None, help="also fit |D| w^N' for these orders")
@click.option("--report", default=None)
@click.option("--timing", is_flag=True)
def analyze_cmd(op_path, seq_path, kmax, lmax, mode, n_grid, smooth_orders, report, timing):
    """Kernel census and Diophantine fit of an operator; exit 2 on violation."""
    t0 = time.perf_counter()

    def go():
        spec = VectorFieldSpec.from_json(_load_json(op_path))
        seq = sequence_from_json(_load_json(seq_path))
        cuts = [kmax if g == TORUS else lmax for g in spec.groups]
        sp = divisor_spectrum(spec, *cuts)
        v = diophantine_fit(sp, AssociatedFunction(seq), mode, _n_grid(n_grid))
        body = _verdict_body(spec, sp, v)
        if smooth_orders:
            body["smooth"] = smoothness_fit(sp, _n_grid(smooth_orders)).to_dict()
        man = _manifest("analyze", {"op": digest_file(op_path), "seq": digest_file(seq_path)},
                        sp.truncation(), t0, timing)
        _emit(report, man, body)
        return EXIT_OK if v.hypoelliptic_consistent else EXIT_VIOLATION

    _run(go)


# --------------------------------------------------------------------------
# continued fractions


@main.group()
def cf():
    """Continued fractions."""


@cf.command("profile")
@click.option("--pattern", default=None, help="named pattern (factorial-pow10, golden, sqrt2, liouville-demo)")
@click.option("--quotients", default=None, help="comma separated partial quotients")
@click.option("--depth", "depth", type=int, default=6, show_default=True)
@click.option("--s", "s", type=float, default=1.0, show_default=True)
@click.option("--bits", type=int, default=512, show_default=True)
@click.option("--report", default=None)
def cf_profile(pattern, quotients, depth, s, bits, report):
    """Convergents, gaps and the Liouville / exponential-Liouville profile."""

    def go():
        if (pattern is None) == (quotients is None):
            raise _Invalid("give exactly one of --pattern or --quotients")
        if pattern is not None:
            c = named_pattern(pattern)
            src = {"pattern": pattern}
        else:
            try:
                qs = [int(x) for x in quotients.split(",")]
            except ValueError as exc:
                raise _Invalid("quotients must be integers") from exc
            c = ContinuedFraction(quotients=qs)
            src = {"quotients": digest_bytes(quotients.encode())}
        prof = approximation_profile(c, depth, s=s, bits=bits)
        _emit(report, _manifest("cf profile", src, {"depth": depth}), prof.to_dict())
        return EXIT_OK

    _run(go)


# --------------------------------------------------------------------------
# solve / classify


@main.command("solve")
@click.option("--op", "op_path", required=True, type=click.Path())
@click.option("--f", "f_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--report", default=None)
def solve_cmd(op_path, f_path, out_path, report):
    """Canonical solution of L u = f; exit 2 when f is not admissible."""

    def go():
        spec = VectorFieldSpec.from_json(_load_json(op_path))
        f = CoefficientField.from_csv(f_path)
        adm = check_admissible(f, spec)
        body = {"admissibility": adm.to_dict()}
        man = _manifest("solve", {"op": digest_file(op_path), "f": digest_file(f_path)})
        if not adm.admissible:
            _emit(report, man, body)
            return EXIT_VIOLATION
        u = solve(f, spec, check=False)
        u.to_csv(out_path)
        body["solution"] = u.manifest()
        _emit(report, man, body)
        return EXIT_OK

    _run(go)


@main.command("classify")
@click.option("--f", "f_path", required=True, type=click.Path())
@click.option("--seq", "seq_path", required=True, type=click.Path())
@click.option("--n-grid", default=None)
@click.option("--report", default=None)
def classify_cmd(f_path, seq_path, n_grid, report):
    """Decay class of a coefficient field."""

    def go():
        f = CoefficientField.from_csv(f_path)
        seq = sequence_from_json(_load_json(seq_path))
        try:
            v = classify_decay(f, AssociatedFunction(seq), _n_grid(n_grid))
        except InsufficientSpanError as exc:
            raise _Invalid(str(exc)) from exc
        _emit(report, _manifest("classify", {"f": digest_file(f_path), "seq": digest_file(seq_path)}), v.to_dict())
        return EXIT_OK

    _run(go)


# --------------------------------------------------------------------------
# perturbations


def _random_field(groups, cuts, rng):
    blocks = {}
    ranges = [range(-c, c + 1) if g == TORUS else range(0, c + 1) for g, c in zip(groups, cuts)]
    keys = [(a,) for a in ranges[0]] if len(groups) == 1 else [(a, b) for a in ranges[0] for b in ranges[1]]
    proto = CoefficientField(tuple(groups), {})
    for k in keys:
        d = proto.block_dim(k)
        blocks[k] = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return CoefficientField(tuple(groups), blocks, tuple(cuts))


@main.command("perturb")
@click.option("--op", "op_path", required=True, type=click.Path(), help="unshifted field X")
@click.option("--q", "q_path", required=True, type=click.Path(), help="potential q as coefficient CSV")
@click.option("--check-conjugation", is_flag=True)
@click.option("--vband", type=int, default=4, show_default=True, help="test band: |k| <= vband, 2l <= vband")
@click.option("--n-fields", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", default=None)
def perturb_cmd(op_path, q_path, check_conjugation, vband, n_fields, seed, report):
    """Reduce X + q to X + q0 and optionally check the conjugation identity."""

    def go():
        X = VectorFieldSpec.from_json(_load_json(op_path))
        q = CoefficientField.from_csv(q_path)
        try:
            prob = reduce(q, X)
        except InadmissibleError as exc:
            raise _Invalid(str(exc)) from exc
        body = {"problem": prob.to_dict()}
        code = EXIT_OK
        if check_conjugation:
            rng = np.random.default_rng(seed)
            res = [conjugation_residual(prob, _random_field(q.groups, (vband,) * len(q.groups), rng))
                   for _ in range(n_fields)]
            body["conjugation"] = {"residuals": res, "max": max(res), "threshold": 1e-8}
            if max(res) > 1e-8:
                code = EXIT_VIOLATION
        _emit(report, _manifest("perturb", {"op": digest_file(op_path), "q": digest_file(q_path)},
                                {"vband": vband}), body)
        return code

    _run(go)


# --------------------------------------------------------------------------
# the T^1 x S^3 example


def _example_q():
    """q = cos t + h + i/2 sampled and analysed on the band (1, 1/2)."""
    c = 0.5j

    def q(t, phi, theta, psi):
        return np.cos(t) + h_function(phi, theta, psi) + c + 0 * t

    return analyze(q, (TORUS, SU2), (1, 0.5), tol=1e-14)


def s3_example(s: float = 2.0, lmax: float = 100, kmax: int = 20000, variants=("q0", "q1"),
               smooth_order: float = 10.0, n_grid=(0.25, 0.5, 1.0, 2.0), extrapolation_depth: int = 12) -> dict:
    """Full pipeline for d/dt + alpha d/dpsi + q on T^1 x S^3."""
    X = VectorFieldSpec(TORUS, SU2, {"pattern": "factorial-pow10"})
    alpha = complex(X.a).real
    q = _example_q()
    prob = reduce(q, X)
    Qref = analyze(lambda t, p, th, ps: np.sin(t) + tr_function(p, th, ps) / alpha + 0 * t, (TORUS, SU2), (1, 0.5),
                   tol=1e-14)
    out = {
        "alpha": {"pattern": "factorial-pow10", "approx": alpha},
        "primitive": {"max_error_vs_sin_t_plus_tr_over_alpha": prob.Q.max_abs_diff(Qref),
                      "primitive_residual": prob.primitive_residual, "q0": [prob.q0.real, prob.q0.imag]},
        "gevrey_s": s,
        "truncation": {"kmax": kmax, "lmax": lmax},
        "variants": {},
    }
    af = AssociatedFunction(WeightSequence.gevrey(s))
    for var in variants:
        if var == "q0":
            spec = prob.shifted
        elif var == "q1":
            spec = X.with_shift(q_coef=(0, 1))  # q0 = alpha i
        else:
            raise _Invalid(f"unknown variant {var!r}")
        sp = divisor_spectrum(spec, kmax, lmax)
        ker = kernel_set(sp)
        dv = diophantine_fit(sp, af, "roumieu", n_grid)
        sm = smoothness_fit(sp, (smooth_order,))
        row = sm.rows[0]
        entry = {
            "operator": spec.describe(),
            "kernel": ker.to_dict(),
            "gevrey": dv.to_dict(),
            "smooth": sm.to_dict(),
            "gh_gevrey_consistent": dv.hypoelliptic_consistent,
            "solvable_gevrey_consistent": dv.solvable_consistent,
            "smooth_witnesses_in_truncation": len(row.witnesses),
            "smooth_consistent_in_truncation": sm.condition_consistent,
        }
        if var == "q0":
            ext = convergent_extrapolation(spec, smooth_order, extrapolation_depth)
            thresh = row.log_C_levels[0] - math.log(1e3)
            collapse = [e.n for e in ext if e.log_value_upper < thresh]
            entry["beyond_truncation"] = {
                "label": "convergent-indexed extrapolation (rigorous log brackets, outside the scanned truncation)",
                "order": smooth_order,
                "log_initial_C": row.log_C_levels[0],
                "rows": [e.to_dict() for e in ext],
                "collapse_indices": collapse,
            }
        out["variants"][var] = entry
    return out


def _table(res) -> str:
    lines = ["variant | N count | growing | gevrey GH | gevrey solvable | smooth witnesses (trunc) | "
             "smooth collapse beyond trunc"]
    for var, e in res["variants"].items():
        bt = e.get("beyond_truncation")
        col = ",".join(str(n) for n in bt["collapse_indices"]) if bt else "-"
        lines.append(f"{var} | {e['kernel']['count']} | {e['kernel']['still_growing']} | "
                     f"{e['gh_gevrey_consistent']} | {e['solvable_gevrey_consistent']} | "
                     f"{e['smooth_witnesses_in_truncation']} | n={col or 'none'}")
    return "\n".join(lines)


@main.command("reproduce-s3-example")
@click.option("--s", "s", type=float, default=2.0, show_default=True)
@click.option("--lmax", type=float, default=100, show_default=True)
@click.option("--kmax", type=int, default=20000, show_default=True)
@click.option("--variant", type=click.Choice(["q0", "q1", "both"]), default="both", show_default=True)
@click.option("--report", default=None, help="write the JSON report here")
@click.option("--timing", is_flag=True)
def reproduce_cmd(s, lmax, kmax, variant, report, timing):
    """Run the T^1 x S^3 example and print the verdict table."""
    t0 = time.perf_counter()

    def go():
        variants = ("q0", "q1") if variant == "both" else (variant,)
        res = s3_example(s, lmax, kmax, variants)
        man = _manifest("reproduce-s3-example", {"variant": variant}, {"kmax": kmax, "lmax": lmax, "s": s},
                        t0, timing)
        if report:
            write_report(report, man, res)
        click.echo(_table(res))
        return EXIT_OK

    _run(go)


if __name__ == "__main__":  # pragma: no cover
    main()
