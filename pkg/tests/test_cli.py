import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sasakilab import cli
from sasakilab.errors import ConfigError
from sasakilab.manifest import load_manifest_data, parse_manifest
from sasakilab.report import FAIL, PASS, SKIPPED, Record, Report, make_record, merge
from sasakilab.runner import run_ambient, run_verification

DATA = Path(__file__).parent / "data"


def run_cli(*args):
    proc = subprocess.run([sys.executable, "-m", "sasakilab.cli", *args], capture_output=True, text=True)
    return proc.returncode, proc.stdout, proc.stderr


def strip_timestamp(text: str) -> str:
    data = json.loads(text)
    data.pop("timestamp")
    return json.dumps(data, sort_keys=True)


# -- golden trio --------------------------------------------------------------

@pytest.mark.parametrize("name,code", [("pass", 0), ("fail", 1), ("invalid", 2)])
def test_golden_exit_codes(name, code):
    rc, out, err = run_cli("verify", "--manifest", str(DATA / f"{name}.json"), "--format", "text")
    assert rc == code, err
    if code == 0:
        assert out.rstrip().endswith("41 pass / 0 fail / 0 skipped")
    if code == 2:
        assert "embedding" in err and out == ""


def test_fail_manifest_records_eta_xi():
    rep = run_verification(parse_manifest(DATA / "fail.json"))
    rec = next(r for r in rep.records if r.identity == "eta_xi")
    assert rec.status == FAIL
    assert rec.max_residual == pytest.approx(1.0, abs=1e-12)
    assert rep.config["test_hooks"] == {"xi_scale": 2.0}


def test_missing_and_malformed_manifest(tmp_path):
    assert cli.main(["verify", "--manifest", str(tmp_path / "nope.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert cli.main(["verify", "--manifest", str(bad)]) == 2


def test_unwritable_report(tmp_path, capsys):
    target = tmp_path / "missing-dir" / "r.json"
    assert cli.main(["verify", "--manifest", str(DATA / "pass.json"), "--report", str(target)]) == 2
    assert "cannot write report" in capsys.readouterr().err


@pytest.mark.parametrize("flag", [["--tol", "bogus=1"], ["--tol", "structure=-1"], ["--tol", "structure"],
                                  ["--seed", "-3"], ["--suite", "nope"]])
def test_bad_flags_exit_2(flag):
    with pytest.raises(SystemExit) as info:
        cli.main(["verify", "--manifest", str(DATA / "pass.json"), *flag])
    assert info.value.code == 2


# -- determinism and serialization --------------------------------------------

def test_byte_identical_reports(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert cli.main(["verify", "--manifest", str(DATA / "plane_all.json"), "--report", str(p),
                         "--seed", "99"]) == 1
    a, b = (p.read_text() for p in paths)
    assert strip_timestamp(a) == strip_timestamp(b)
    # outside the timestamp line the files are byte-identical
    drop = lambda t: [ln for ln in t.splitlines() if '"timestamp"' not in ln]  # noqa: E731
    assert drop(a) == drop(b)


def test_seed_changes_random_points():
    m = parse_manifest(DATA / "pass.json")
    a, b = m.sample_points(), m.with_overrides(seed=8).sample_points()
    np.testing.assert_array_equal(a[:25], b[:25])
    assert not np.array_equal(a[25:], b[25:])


def test_json_round_trip():
    rep = run_verification(parse_manifest(DATA / "plane_all.json"), timestamp="t0")
    again = Report.from_json(rep.to_json())
    assert again == rep
    assert again.to_json() == rep.to_json()
    data = json.loads(rep.to_json())
    for r in data["records"]:
        assert set(r) >= {"suite", "identity", "max_residual", "worst_point", "tolerance", "status", "reason"}
    s = data["summary"]
    assert s["pass"] + s["fail"] + s["skipped"] == len(data["records"])


def test_text_report_layout():
    rep = run_verification(parse_manifest(DATA / "pass.json"), timestamp="t0")
    text = rep.to_text()
    lines = text.rstrip().splitlines()
    assert lines[0].split()[:3] == ["suite", "identity", "status"]
    assert set(lines[1]) == {"-"}
    assert lines[-1] == rep.summary()["line"]
    assert rep.summary()["line"].endswith("0 fail / 0 skipped")


# -- verify semantics ---------------------------------------------------------

def test_plane_all_suites_statuses():
    rep = run_verification(parse_manifest(DATA / "plane_all.json"))
    status = {(r.suite, r.identity): r.status for r in rep.records}
    for key in [("theorem31", "w_of_U"), ("theorem31", "w_of_V"), ("theorem32", "w_of_V_log_lambda")]:
        assert status[key] == SKIPPED
    assert status[("derivative", "HU_vanishes")] == FAIL
    assert status[("theorem31", "q_of_V")] == FAIL
    for suite in ("ambient", "structure"):
        assert all(s == PASS for (su, _), s in status.items() if su == suite)
    assert all(status[("derivative", k)] == PASS for k in
               ("cov_phi", "cov_u", "cov_v", "cov_U", "cov_V", "h_V", "h_U", "gauss", "weingarten"))
    assert rep.info["invariance"] == "noninvariant"
    assert rep.info["classification"] == {"QuasiUmbilical": 353}
    assert [d.identity for d in rep.diagnostics] == ["w_plus_dlog_lambda"]


def test_suite_and_tolerance_overrides(tmp_path):
    out = tmp_path / "r.json"
    rc = cli.main(["verify", "--manifest", str(DATA / "plane_all.json"), "--report", str(out),
                   "--suite", "derivative", "--tol", "derivative=3"])
    assert rc == 0
    data = json.loads(out.read_text())
    assert {r["suite"] for r in data["records"]} == {"derivative"}
    assert data["config"]["tolerances"]["derivative"] == 3.0


def test_trig_embedding_structure_and_derivative():
    m = load_manifest_data({"model": "sasakian_r3", "embedding": ["s1", "0.2*sin(s1+s2)", "s2"],
                            "suites": ["structure", "derivative"]})
    rep = run_verification(m)
    failing = {r.identity for r in rep.records if r.status == FAIL}
    # only the vanishing of h(., U) and HU fails
    assert failing == {"hU_vanishes", "HU_vanishes"}


def test_point_errors_are_recorded_not_fatal():
    m = load_manifest_data({"model": "sasakian_r3", "embedding": ["s1", "log(s1 + 0.5)", "s2"],
                            "suites": ["structure"], "samples": {"grid": {"counts": 5}, "random": None}})
    rep = run_verification(m)
    ev = next(r for r in rep.records if r.identity == "evaluation")
    assert ev.status == FAIL and "DomainError" in ev.reason
    assert ev.n_skipped == 10
    others = [r for r in rep.records if r.identity != "evaluation"]
    assert others and all(r.n_evaluated == 15 and r.n_skipped == 10 for r in others)


def test_nonpositive_sigma_is_config_error():
    m = load_manifest_data({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"],
                            "normal_policy": {"scaled": "s1"}, "suites": ["structure"]})
    with pytest.raises(ConfigError):
        run_verification(m)


def test_degenerate_points_skipped():
    m = load_manifest_data({"model": "sasakian_r3", "embedding": ["s1^2", "0", "s2"],
                            "suites": ["structure"], "samples": {"grid": {"counts": 3}, "random": None}})
    rep = run_verification(m)
    rec = next(r for r in rep.records if r.identity == "phi_squared")
    assert rec.n_skipped == 3 and "degenerate" in rec.reason


# -- other subcommands --------------------------------------------------------

def test_ambient_command(capsys):
    assert cli.main(["ambient", "--model", "sasakian_r5", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["summary"]["fail"] == 0
    assert all(r["max_residual"] <= 1e-8 for r in data["records"])


def test_ambient_fault_report():
    rep = run_ambient("sasakian_r3", 1, 20, 1e-8, xi_scale=2.0)
    assert rep.exit_code == 1
    assert next(r for r in rep.records if r.identity == "eta_xi").max_residual == pytest.approx(1.0)


def test_classify_command(capsys):
    assert cli.main(["classify", "--manifest", str(DATA / "pass.json"), "--format", "json"]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 33
    assert {"point", "classification", "alpha", "beta", "q", "fit_residual", "lambda"} <= set(rows[0])
    assert cli.main(["classify", "--manifest", str(DATA / "pass.json")]) == 0
    assert "QuasiUmbilical" in capsys.readouterr().out


def test_explain_catalog(capsys):
    assert cli.main(["explain", "--suite", "theorem32"]) == 0
    out = capsys.readouterr().out
    assert "w_of_V_log_lambda" in out
    cat = cli.load_catalog()
    assert all(set(e) == {"suite", "identity", "reference", "statement"} for e in cat)


def test_catalog_covers_report_identities():
    names = {(e["suite"], e["identity"]) for e in cli.load_catalog()}
    rep = run_verification(parse_manifest(DATA / "plane_all.json"))
    for r in rep.records + rep.diagnostics:
        if r.identity != "evaluation":
            assert (r.suite, r.identity) in names, r.identity


# -- manifest -----------------------------------------------------------------

def test_minimal_manifest_defaults():
    m = load_manifest_data({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"]})
    assert m.normal_policy == "unit" and m.seed == 42
    assert m.sample_points().shape == (17 * 17 + 64, 2)
    assert m.tolerance("structure") == 1e-7 and m.tolerance("oracle") == 1e-4
    pts = m.sample_points()
    assert pts.min() >= -1 and pts.max() <= 1


@pytest.mark.parametrize("data,needle", [
    ({"model": "sasakian_r3", "embedding": ["s1", "s2"]}, "embedding"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s9"]}, "embedding[2]"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2 +"]}, "embedding[2]"),
    ({"model": "sasakian_r4", "embedding": ["s1", "0", "s2"]}, "model"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"], "suites": ["x"]}, "suites"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"], "colour": 1}, "colour"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"], "tolerances": {"structure": 0}}, "tolerances"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"], "samples": {"random": {"count": 3}}},
     "samples.random.seed"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"],
      "samples": {"grid": {"ranges": [1, 0]}}}, "samples.grid.ranges"),
    ({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"], "normal_policy": {"scaled": "q"}},
     "normal_policy.scaled"),
])
def test_manifest_errors_name_the_field(data, needle):
    with pytest.raises(ConfigError) as info:
        load_manifest_data(data)
    assert needle in str(info.value)


def test_scaled_policy_accepted():
    m = load_manifest_data({"model": "sasakian_r3", "embedding": ["s1", "0", "s2"],
                            "normal_policy": {"scaled": "exp(0.1*s1)"}})
    assert m.normal_policy_json() == {"scaled": "exp(0.1*s1)"}


# -- report aggregation -------------------------------------------------------

def test_make_record_status():
    pts = np.array([[0.1234567891, 2.0], [1.0, 1.0]])
    rec = make_record("s", "x", [1e-9, 3e-7], pts, 1e-7)
    assert rec.status == FAIL and rec.worst_point == [1.0, 1.0]
    rec = make_record("s", "x", [5e-8, 1e-9], pts, 1e-7)
    assert rec.status == PASS and rec.worst_point == [0.123457, 2.0]
    rec = make_record("s", "x", [1.0, 1.0], pts, 1e-7, evaluated=[False, False], skip_reason="skipped: why")
    assert rec.status == SKIPPED and rec.reason == "skipped: why"
    rec = make_record("s", "x", [np.nan, 0.0], pts, 1e-7)
    assert rec.status == FAIL and rec.reason == "non-finite residual"


@st.composite
def partial_records(draw):
    vals = draw(st.lists(st.floats(0, 1e-5), min_size=1, max_size=6))
    evaluated = draw(st.lists(st.booleans(), min_size=len(vals), max_size=len(vals)))
    pts = np.arange(len(vals), dtype=float)[:, None]
    return make_record("s", "x", vals, pts, 1e-6, evaluated, "skipped: test")


@given(st.lists(partial_records(), min_size=2, max_size=5), st.randoms())
@settings(max_examples=100, deadline=None)
def test_merge_is_order_independent(parts, rnd):
    def fold(rs):
        acc = rs[0]
        for r in rs[1:]:
            acc = merge(acc, r)
        return acc

    a = fold(parts)
    shuffled = parts[:]
    rnd.shuffle(shuffled)
    b = fold(shuffled)
    assert (a.max_residual, a.status, a.n_evaluated, a.n_skipped) == \
           (b.max_residual, b.status, b.n_evaluated, b.n_skipped)


def test_merge_rejects_different_checks():
    a = Record("s", "x", 0.0, [0.0], 1.0, PASS)
    with pytest.raises(ValueError):
        merge(a, Record("s", "y", 0.0, [0.0], 1.0, PASS))
