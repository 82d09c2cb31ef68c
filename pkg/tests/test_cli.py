from __future__ import annotations

import csv
import io
import json
import subprocess
import sys

import pytest

from amw.cli import build_parser, config_from_args, main
from amw.errors import ERROR_CODES

from conftest import make_linear_data

FAST = ["--boot", "20", "--cv-boot", "20", "--splits", "3"]


@pytest.fixture(scope="module")
def data_csv(tmp_path_factory):
    d, _ = make_linear_data(n=200, seed=0)
    path = tmp_path_factory.mktemp("cli") / "data.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y", "a", *d.column_names])
        for i in range(d.n):
            w.writerow([repr(float(d.y[i])), int(d.a[i]), *(repr(float(v)) for v in d.x[i])])
    return str(path)


def _data(path):
    return ["--input", path, "--y", "y", "--a", "a", "--x", "x0,x1,x2"]


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_estimate_json(data_csv, capsys):
    code, out, _ = _run(["estimate", *_data(data_csv), *FAST, "--seed", "3"], capsys)
    assert code == 0
    res = json.loads(out)
    assert res["point"]["estimator"] == "amw" and res["k_used"] >= 1
    assert res["ci_lower"] <= res["value"] <= res["ci_upper"] and res["se"] > 0
    assert res["bootstrap"]["b_requested"] == 20 and "b_failed" in res["bootstrap"]
    assert [c["k"] for c in res["k_candidates"]][0] == 1
    assert res["config"]["k"] == "auto" and res["config"]["seed"] == 3
    assert "threads" not in res["config"]


def test_amwf_equals_amw_k1(data_csv, capsys):
    _, out_f, _ = _run(["estimate", *_data(data_csv), "--estimator", "amwf", "--k", "1", *FAST], capsys)
    _, out_a, _ = _run(["estimate", *_data(data_csv), "--estimator", "amw", "--k", "1", *FAST], capsys)
    f, a = json.loads(out_f), json.loads(out_a)
    assert f["point"].pop("estimator") == "amwf" and a["point"].pop("estimator") == "amw"
    assert f["config"].pop("estimator") == "amwf" and a["config"].pop("estimator") == "amw"
    assert f == a


def test_estimate_csv_and_output_file(data_csv, tmp_path, capsys):
    out_path = tmp_path / "res.csv"
    code, out, _ = _run(["estimate", *_data(data_csv), "--estimator", "aipw", "--estimand", "att",
                         "--format", "csv", "--output", str(out_path), *FAST], capsys)
    assert code == 0 and out == ""
    rows = list(csv.DictReader(out_path.open()))
    assert rows[0]["estimator"] == "aipw" and rows[0]["k_used"] == "" and rows[0]["b_requested"] == "20"


def test_usage_error_exit_2(data_csv, tmp_path, capsys):
    out_path = tmp_path / "never.json"
    code, _, err = _run(["estimate", "--input", data_csv, "--y", "y", "--output", str(out_path)], capsys)
    assert code == 2 and not out_path.exists()
    assert _run(["estimate", *_data(data_csv), "--k", "zero"], capsys)[0] == 2
    assert _run(["simulate", "--scenario", "22"], capsys)[0] == 2


def test_domain_error_exit_1(data_csv, capsys):
    code, out, err = _run(["estimate", "--input", data_csv, "--y", "y", "--a", "a", "--x", "x0,nope"], capsys)
    assert code == 1 and out == ""
    payload = json.loads(err)
    assert payload["error"] == "MissingColumn" and payload["column"] == "nope"
    assert payload["error"] in ERROR_CODES
    code, _, err = _run(["balance", *_data(data_csv), "--k", "500"], capsys)
    assert code == 1 and json.loads(err)["error"] == "KTooLarge"
    code, _, err = _run(["estimate", "--input", "/nonexistent.csv", "--y", "y", "--a", "a", "--x", "x"], capsys)
    assert code == 1 and json.loads(err)["error"] == "InputError"


def test_simulate_deterministic_across_threads(capsys, tmp_path):
    base = ["simulate", "--reps", "2", "--n", "200", *FAST, "--seed", "4"]
    outs = []
    for threads in ("1", "2", "1"):
        code, out, _ = _run([*base, "--threads", threads], capsys)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1] == outs[2]
    rows = list(csv.DictReader(io.StringIO(outs[0])))
    assert [r["estimator"] for r in rows] == ["AMW", "AMWF", "AIPW", "IPW", "PSM"]
    assert all(r["n_reps"] == "2" for r in rows)
    rep_path = tmp_path / "reps.csv"
    code, out, _ = _run([*base, "--format", "json", "--replicates-out", str(rep_path)], capsys)
    assert code == 0 and json.loads(out)["summaries"][0]["n_reps"] == 2
    assert len(rep_path.read_text().splitlines()) == 1 + 2 * 5


def test_select_k_and_kprofile(data_csv, capsys):
    code, out, _ = _run(["select-k", *_data(data_csv), "--candidates", "2,4", "--cv-boot", "10",
                         "--splits", "2"], capsys)
    res = json.loads(out)
    assert code == 0 and [c["k"] for c in res["k_candidates"]] == [1, 2, 4] and res["k_star"] in (1, 2, 4)
    code, out, _ = _run(["kprofile", "--reps", "5", "--n", "200", "--grid", "1,2", "--format", "csv"], capsys)
    assert code == 0 and out.splitlines()[0] == "k,var_b,bias_proxy,mean_b"


def test_balance_csv(data_csv, capsys):
    code, out, _ = _run(["balance", *_data(data_csv), "--k", "2"], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["covariate", "before", "after"] and [r[0] for r in rows[1:]] == ["x0", "x1", "x2"]
    code, out2, _ = _run(["balance", *_data(data_csv), "--k", "2", "--denominator", "arm_average"], capsys)
    assert out2 != out


def test_config_round_trip(data_csv):
    parser = build_parser()
    argvs = [
        ["estimate", *_data(data_csv), "--estimand", "att", "--k", "3", "--alpha", "0.1", "--seed", "5"],
        ["estimate", *_data(data_csv), "--estimator", "ipw"],
        ["select-k", *_data(data_csv), "--candidates", "1,4", "--ps-x", "x0"],
        ["simulate", "--scenario", "10", "--setting", "extreme", "--estimators", "amw,ipw", "--k", "4"],
        ["kprofile", "--grid", "1,8"],
        ["balance", *_data(data_csv), "--outcome-x", "x1,x2", "--denominator", "arm_average"],
    ]
    for argv in argvs:
        cfg = config_from_args(parser.parse_args(argv))
        again = config_from_args(parser.parse_args(cfg.to_argv()))
        assert again == cfg
        assert again.echo() == cfg.echo()


def test_seed_env_fallback(data_csv, capsys, monkeypatch):
    argv = ["estimate", *_data(data_csv), *FAST]
    _, with_flag, _ = _run([*argv, "--seed", "8"], capsys)
    monkeypatch.setenv("AMW_SEED", "8")
    _, with_env, _ = _run(argv, capsys)
    assert with_flag == with_env
    monkeypatch.setenv("AMW_SEED", "x")
    code, _, err = _run(argv, capsys)
    assert code == 1 and json.loads(err)["error"] == "InvalidArgument"


def test_console_script_subprocess(data_csv):
    proc = subprocess.run([sys.executable, "-m", "amw.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "amw" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "amw.cli", "estimate", "--input", data_csv],
                          capture_output=True, text=True)
    assert proc.returncode == 2


def test_error_codes_closed_set():
    assert {"MissingColumn", "NonFiniteValue", "Separation", "KTooLarge", "SplitTooSmall",
            "TooManyFailures", "ZeroDenominator", "InputError"} <= ERROR_CODES
    assert all(isinstance(c, str) for c in ERROR_CODES)
