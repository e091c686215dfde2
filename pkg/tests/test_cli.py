import json
import subprocess
import sys

import pytest

from discwedge import cli
from discwedge.cli import EXIT_CERTIFICATE, EXIT_OK, EXIT_USAGE, UsageError, main, read_csv, validate_config


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_selftest_exits_zero(tmp_path):
    out = tmp_path / "self"
    assert main(["selftest", "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "selftest.csv")
    assert [r["check"] for r in rows] == ["hilbert", "poisson", "hilbert_squared"]
    assert all(r["passed"] == "1" and float(r["error"]) <= 1e-10 for r in rows)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "ok" and "numpy" in manifest["versions"] and manifest["wall_time"] > 0


def test_malformed_json_leaves_no_artifacts(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    out = tmp_path / "out"
    assert main(["run", str(bad), "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()


@pytest.mark.parametrize("data", [
    {"kind": "kobayashi", "params": {}},
    {"kind": "kobayashi", "seed": 1, "colour": "red"},
    {"kind": "kobayashi", "seed": 1, "params": {"radius": 2}},
    {"kind": "weather", "seed": 1},
    {"kind": "discs", "seed": 1, "params": {"edge": "sphere"}},
    {"kind": "regularity", "seed": 1, "params": {"thetas": [0.3]}},
    {"kind": "kobayashi", "seed": -1},
    {"kind": "kobayashi", "seed": 1, "params": {"domain": {"kind": "torus"}}},
])
def test_schema_violations(tmp_path, data):
    out = tmp_path / "out"
    assert main(["run", write_config(tmp_path, data), "--out", str(out)]) == EXIT_USAGE
    assert not out.exists()


def test_seed_override_and_defaults():
    cfg = validate_config({"kind": "kobayashi"}, seed_override=7)
    assert cfg["seed"] == 7 and cfg["params"]["samples"] == 200
    with pytest.raises(UsageError):
        validate_config([1, 2])


def test_missing_config_and_bad_flags(tmp_path):
    assert main(["run", str(tmp_path / "nope.json")]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    cfg = write_config(tmp_path, {"kind": "selftest"})
    assert main(["run", cfg, "--jobs", "0", "--out", str(tmp_path / "o")]) == EXIT_USAGE


def test_kobayashi_run_and_report(tmp_path, capsys):
    cfg = write_config(tmp_path, {"kind": "kobayashi", "seed": 3,
                                  "params": {"samples": 40, "search_samples": 2, "degree": 2}})
    out = tmp_path / "kob"
    assert main(["run", cfg, "--out", str(out), "--jobs", "1"]) == EXIT_OK
    rows = read_csv(out / "kobayashi.csv")
    assert len(rows) == 40 and rows[0]["disc_search_upper"] and not rows[-1]["disc_search_upper"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["sandwich_violations"] == 0
    assert summary["fitted_constant"] == pytest.approx(float(rows[0]["fitted_constant"]))
    capsys.readouterr()
    assert main(["report", str(out)]) == EXIT_OK
    assert "sandwich violations 0" in capsys.readouterr().out


def test_regularity_report_table(tmp_path, capsys):
    cfg = write_config(tmp_path, {"kind": "regularity", "seed": 0, "params": {"rays": 4, "thetas": [0.75]}})
    out = tmp_path / "reg"
    assert main(["run", cfg, "--out", str(out)]) == EXIT_OK
    row = read_csv(out / "bootstrap.csv")[0]
    assert row["alpha"] == "2/3" and abs(float(row["fitted_alpha"]) - 2 / 3) < 0.03
    capsys.readouterr()
    assert main(["report", str(out / "manifest.json")]) == EXIT_OK
    assert "0.666667" in capsys.readouterr().out


def test_report_errors(tmp_path):
    assert main(["report", str(tmp_path)]) == EXIT_USAGE
    out = tmp_path / "self"
    main(["selftest", "--out", str(out)])
    (out / "selftest.csv").unlink()
    assert main(["report", str(out)]) == EXIT_USAGE


def test_certificate_failure_exit_code(tmp_path):
    # |z|^2 - 3 x_1^2 + 4 x_1^4 - 1: bounded, Levi form -1/2 on H_p near x_1 = 0, z_1 direction
    dom = {"kind": "polynomial", "n": 2, "terms": [[1.0, [2, 0, 0, 0]], [1.0, [0, 0, 2, 0]], [1.0, [0, 2, 0, 0]],
                                                   [1.0, [0, 0, 0, 2]], [-3.0, [2, 0, 0, 0]], [4.0, [4, 0, 0, 0]],
                                                   [-1.0, [0, 0, 0, 0]]]}
    cfg = write_config(tmp_path, {"kind": "domains-audit", "seed": 0, "params": {"domain": dom, "samples": 16}})
    out = tmp_path / "audit"
    code = main(["run", cfg, "--out", str(out)])
    assert code == EXIT_CERTIFICATE
    assert json.loads((out / "summary.json").read_text())["status"] == "certificate-failure"
    assert (out / "witnesses.json").is_file()


def test_strict_turns_warnings_into_failures(tmp_path, monkeypatch):
    def warning_runner(p, seed, out, jobs):
        return {"checks": 0}, [], ["synthetic warning"]

    monkeypatch.setitem(cli.RUNNERS, "selftest", warning_runner)
    assert main(["selftest", "--out", str(tmp_path / "lax")]) == EXIT_OK
    assert main(["selftest", "--out", str(tmp_path / "strict"), "--strict"]) == EXIT_CERTIFICATE
    summary = json.loads((tmp_path / "strict" / "summary.json").read_text())
    assert summary["status"] == "certificate-failure" and summary["warnings"] == ["synthetic warning"]


def test_discs_run_is_deterministic(tmp_path):
    params = {"points": 7, "fill_samples": 20, "foliation_samples": 20}
    cfg = write_config(tmp_path, {"kind": "discs", "seed": 5, "params": params})
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", cfg, "--out", str(a)]) == EXIT_OK
    assert main(["run", cfg, "--out", str(b)]) == EXIT_OK
    for name in ("discs.csv", "fill.csv", "foliation.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    header = (a / "discs.csv").read_text().splitlines()[0]
    assert header.startswith("c_1,c_2,t_1,t_2,iterations")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "discwedge", "selftest", "--out", str(tmp_path / "s")],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "ok" in proc.stdout
