import io
import json
import shutil
import subprocess
import sys

import pytest

from probanon.cli import (EXIT_GUARD, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_OK, EXIT_VIOLATION,
                          parse_prior, run, InputError)
from probanon.dsl import load_model, shipped_model
from probanon.models import dc_bundle


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("models")
    m = d / "m.pam"
    m.write_text(shipped_model("hidden_branch.pam"))
    code, _, _ = call("gen", "dc", "--n", "3", "-o", str(d / "dc3.pam"))
    assert code == EXIT_OK
    code, _, _ = call("gen", "dc", "--prior", "uniform", "-o", str(d / "dcp.pam"))
    assert code == EXIT_OK
    bad = d / "bad.pam"
    bad.write_text("format 1\nautomaton A { init s; s -a-> { t: 1/2, u: 1/3 }; }\n")
    return {"m": str(m), "dc": str(d / "dc3.pam"), "dcp": str(d / "dcp.pam"), "bad": str(bad),
            "dir": d}


def test_gen_matches_generator(files):
    assert load_model(files["dc"]) == dc_bundle(3)


def test_gen_bad_n():
    code, _, err = call("gen", "dc", "--n", "2")
    assert code == EXIT_INPUT and "at least 3" in err


def test_validate(files):
    code, out, _ = call("validate", files["m"])
    assert code == EXIT_OK and out.strip().endswith("valid")
    code, _, err = call("validate", files["bad"])
    assert code == EXIT_INPUT and "2:30" in err
    code, _, _ = call("validate", str(files["dir"] / "missing.pam"))
    assert code == EXIT_INPUT


def test_validate_dc(files):
    code, out, _ = call("validate", files["dc"])
    assert code == EXIT_OK
    assert "1538 states, 3573 transitions" in out


def test_compose(files):
    code, out, _ = call("compose", files["m"], "--emit", "dot")
    assert code == EXIT_OK and out.startswith('digraph "M" {')
    code, out, _ = call("compose", files["m"])
    assert code == EXIT_OK and out.startswith("format 1")


def test_bisim(files):
    code, out, _ = call("bisim", files["m"])
    assert code == EXIT_OK and out.startswith("5 classes")
    code, out, _ = call("bisim", files["m"], "--obs-mode", "collapse")
    assert code == EXIT_OK and out.startswith("4 classes")


def test_measure_leak(files):
    code, out, _ = call("measure", files["m"], "--scheduler", "leak")
    assert code == EXIT_OK
    assert "P[o = x1 | user 1] = 1" in out
    assert "P[o = x1 | user 2] = 0" in out


def test_measure_dc_prior(files):
    code, out, _ = call("measure", files["dc"], "--scheduler", "order123",
                        "--master-prior", "uniform")
    assert code == EXIT_OK
    for u in (1, 2, 3):
        assert f"P[user {u}] = 1/4" in out


def test_bad_prior():
    with pytest.raises(InputError):
        parse_prior("1/2,1/2", 3)
    with pytest.raises(InputError):
        parse_prior("1/2,1/2,x,0", 3)
    assert parse_prior("uniform", 3) == [parse_prior("1/4,1/4,1/4,1/4", 3)[0]] * 4


def test_check_exit_codes(files):
    assert call("check", files["m"])[0] == EXIT_OK
    code, out, _ = call("check", files["m"], "--obs-mode", "strict")
    assert code == EXIT_VIOLATION and "witness: user" in out
    assert call("check", files["m"], "--strategy", "automorphism")[0] == EXIT_OK
    assert call("check", files["m"], "--strategy", "sample", "--samples", "3")[0] \
        == EXIT_INCONCLUSIVE


def test_check_dc_automorphism_is_inconclusive(files):
    code, out, _ = call("check", files["dc"], "--strategy", "automorphism")
    assert code == EXIT_INCONCLUSIVE
    assert "not an automorphism" in out


def test_guard(files):
    code, _, err = call("check", files["dc"], "--max-schedulers", "50")
    assert code == EXIT_GUARD and "resource guard" in err


def test_counterexample(files):
    code, out, _ = call("counterexample", files["m"])
    assert code == EXIT_VIOLATION and "witness" in out
    code, out, _ = call("counterexample", files["dcp"])
    assert code == EXIT_VIOLATION
    code, out, _ = call("counterexample", files["dc"], "--order", "random")
    assert code == EXIT_VIOLATION and "after 6 schedulers" in out


def test_usage_errors():
    assert call()[0] == EXIT_INPUT
    assert call("check")[0] == EXIT_INPUT
    assert call("frobnicate")[0] == EXIT_INPUT


def test_json_deterministic(files):
    outs = []
    for _ in range(2):
        code, out, _ = call("check", files["m"], "--obs-mode", "strict", "--json")
        d = json.loads(out)
        assert d["exit_code"] == code == EXIT_VIOLATION
        assert d["report_version"] == 1 and d["command"] == "check"
        d.pop("timing")
        outs.append(json.dumps(d, sort_keys=True))
    assert outs[0] == outs[1]
    d = json.loads(outs[0])
    assert d["results"]["status"] == "VIOLATION"
    assert d["results"]["witness"]["lhs"] != d["results"]["witness"]["rhs"]


@pytest.mark.skipif(shutil.which("probanon") is None, reason="console script not installed")
def test_console_script(files):
    p = subprocess.run(["probanon", "validate", files["m"]], capture_output=True, text=True)
    assert p.returncode == 0
    p = subprocess.run([sys.executable, "-m", "probanon", "--version"], capture_output=True,
                       text=True)
    assert p.returncode == 0 and p.stdout.startswith("probanon ")
