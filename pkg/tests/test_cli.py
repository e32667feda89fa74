import json

import numpy as np
import pytest
from click.testing import CliRunner

from komatsu.cli import main
from komatsu.report import dumps
from komatsu.transforms import analyze, h_function


@pytest.fixture
def files(tmp_path):
    (tmp_path / "g.json").write_text('{"kind": "gevrey", "s": 2}')
    (tmp_path / "bad.json").write_text('{"kind": "table", "M": [2, 1, 2, 6, 24, 120, 720, 5040, 40320]}')
    (tmp_path / "op.json").write_text(json.dumps({"groups": ["torus", "su2"], "a": {"pattern": "factorial-pow10"},
                                                  "q": {"const": [0, "1/2"]}}))
    (tmp_path / "x.json").write_text(json.dumps({"groups": ["torus", "su2"], "a": {"pattern": "factorial-pow10"}}))
    (tmp_path / "rat.json").write_text(json.dumps({"groups": ["torus", "torus"], "a": "2"}))
    q = analyze(lambda t, p, th, ps: np.cos(t) + h_function(p, th, ps) + 0.5j + 0 * t, ("torus", "su2"), (1, 0.5),
                tol=1e-14)
    q.to_csv(tmp_path / "q.csv")
    return tmp_path


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args], catch_exceptions=False)


def test_weights_check_exit_codes(files):
    ok = run("weights", "check", "--seq", files / "g.json")
    assert ok.exit_code == 0
    body = json.loads(ok.output)
    assert body["manifest"]["command"] == "weights check"
    bad = run("weights", "check", "--seq", files / "bad.json")
    assert bad.exit_code == 1
    assert "(M.0)" in bad.output
    assert run("weights", "check", "--seq", files / "missing.json").exit_code == 1


def test_analyze_exit_codes(files):
    r = run("analyze", "--op", files / "op.json", "--seq", files / "g.json", "--kmax", 500, "--lmax", 20)
    assert r.exit_code == 0
    v = json.loads(r.output)["report"]["verdict"]
    assert v["hypoelliptic_consistent"] and v["kernel"]["count"] == 0
    r2 = run("analyze", "--op", files / "rat.json", "--seq", files / "g.json", "--kmax", 20, "--lmax", 20)
    assert r2.exit_code == 2


def test_cf_profile(files):
    r = run("cf", "profile", "--pattern", "factorial-pow10", "--depth", 4)
    assert r.exit_code == 0
    rep = json.loads(r.output)["report"]
    assert rep["records"][2]["q"] == "100000001"
    assert run("cf", "profile").exit_code == 1


def test_cf_profile_huge_convergents():
    r = run("cf", "profile", "--pattern", "factorial-pow10", "--depth", 6)
    assert r.exit_code == 0, r.output
    recs = json.loads(r.output)["report"]["records"]
    assert recs[-1]["q"].startswith("<integer with about")


def test_solve_and_classify(files, tmp_path):
    from komatsu.transforms import CoefficientField

    blocks = {(k,): np.array([[np.exp(-abs(k) ** 0.5)]]) for k in range(-400, 401)}
    one = {"groups": ["torus"]}
    (tmp_path / "t1.json").write_text(json.dumps(one))
    f = CoefficientField(("torus",), {k: v for k, v in blocks.items() if k != (0,)})
    f.to_csv(tmp_path / "f.csv")
    r = run("solve", "--op", tmp_path / "t1.json", "--f", tmp_path / "f.csv", "--out", tmp_path / "u.csv",
            "--report", tmp_path / "s.json")
    assert r.exit_code == 0
    assert json.loads((tmp_path / "s.json").read_text())["report"]["admissibility"]["verdict"] == "admissible"
    c = run("classify", "--f", tmp_path / "u.csv", "--seq", files / "g.json")
    assert c.exit_code == 0
    assert json.loads(c.output)["report"]["label"] == "Roumieu-function"
    # the constant mode is a kernel frequency of d/dt
    CoefficientField(("torus",), blocks).to_csv(tmp_path / "f0.csv")
    bad = run("solve", "--op", tmp_path / "t1.json", "--f", tmp_path / "f0.csv", "--out", tmp_path / "u0.csv")
    assert bad.exit_code == 2


def test_perturb(files):
    r = run("perturb", "--op", files / "x.json", "--q", files / "q.csv", "--check-conjugation", "--vband", 4,
            "--n-fields", 2)
    assert r.exit_code == 0
    rep = json.loads(r.output)["report"]
    assert rep["conjugation"]["max"] < 1e-8
    assert rep["problem"]["q0"][1] == 0.5


def test_reproduce_small_and_deterministic(files, tmp_path):
    a = run("reproduce-s3-example", "--lmax", 20, "--kmax", 2000, "--report", tmp_path / "a.json")
    b = run("reproduce-s3-example", "--lmax", 20, "--kmax", 2000, "--report", tmp_path / "b.json")
    assert a.exit_code == 0 and b.exit_code == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    lines = a.output.strip().splitlines()
    assert lines[1].startswith("q0 | 0 | False | True")
    assert lines[2].startswith("q1 | 20 | True | False | True")
    rep = json.loads((tmp_path / "a.json").read_text())
    assert rep["manifest"]["wall_time"] is None
    assert rep["report"]["variants"]["q0"]["beyond_truncation"]["collapse_indices"] == [9, 11]


def test_report_encoding():
    s = dumps({"b": 1.0, "a": [float("inf"), 2 ** 60, 0.1], "c": None})
    assert s.index('"a"') < s.index('"b"')
    obj = json.loads(s)
    assert obj["a"] == ["inf", str(2 ** 60), 0.1]
    assert "integer with about" in dumps(10 ** 5000)
