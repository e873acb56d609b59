import csv
import io
import json
import os
import subprocess
import sys

import pytest

from rieszgas.cli import ExperimentConfig, UsageError, main, run_sweep


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sweep(tmp_path, *extra):
    return main(["sweep", "--workers", "1", "--out", str(tmp_path), *extra])


def test_p_table_first_entry_box_half(tmp_path):
    assert sweep(tmp_path, "--case", "box", "--a", "0.5", "--nexp", "2:6") == 0
    rows = read_csv(tmp_path / "p_box_0.5.csv")
    assert [int(r["n"]) for r in rows] == [4, 8, 16, 32]
    assert round(float(rows[0]["p"]), 2) == 1.24
    en = read_csv(tmp_path / "en_box_0.5.csv")
    assert list(en[0]) == ["n", "e_n", "E_n", "E_phi", "E_rho", "all_in_support", "converged"]
    assert all(r["all_in_support"] == "true" for r in en)
    diag = read_csv(tmp_path / "diagnostics.csv")
    assert list(diag[0]) == ["case", "a", "n", "e_n", "p", "lower_gap", "residual"]
    assert all(float(r["lower_gap"]) >= -1e-10 for r in diag)
    summary = json.loads((tmp_path / "summary.json").read_text())
    res = summary["results"][0]
    assert res["failed_n"] == []
    ps = [float(r["p"]) for r in rows]
    assert res["p_last_four_average"] == pytest.approx(sum(ps) / 4)


def test_p_table_quadratic_log(tmp_path):
    assert sweep(tmp_path, "--case", "quadratic", "--a", "0", "--nexp", "2:3", "--format", "csv,json") == 0
    rows = read_csv(tmp_path / "p_quadratic_0.csv")
    assert round(float(rows[0]["p"]), 2) == 1.40
    recs = json.loads((tmp_path / "records.json").read_text())
    assert [r["n"] for r in recs] == [4, 8]


def test_csv_is_rfc4180_with_full_precision(tmp_path):
    sweep(tmp_path, "--case", "box", "--a", "0.25", "--nexp", "2:3")
    raw = (tmp_path / "en_box_0.25.csv").read_bytes()
    assert raw.count(b"\r\n") == 3
    e = raw.split(b"\r\n")[1].split(b",")[1].decode()
    assert float(e) == float(format(float(e), ".17g"))


def test_determinism(tmp_path):
    args = ("--case", "box", "--case", "quadratic", "--a", "0,0.5", "--nexp", "2:5")
    assert sweep(tmp_path / "one", *args) == 0
    assert main(["sweep", "--workers", "2", "--out", str(tmp_path / "two"), *args]) == 0
    names = sorted(p.name for p in (tmp_path / "one").glob("*.csv"))
    assert len(names) == 9
    for name in names:
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_resumability(tmp_path):
    args = ("--case", "box", "--a", "0.5", "--nexp", "2:3")
    assert sweep(tmp_path, *args) == 0
    cache = tmp_path / "cache" / "box_0.5_4.json"
    data = json.loads(cache.read_text())
    data["iterations"] = 12345  # marker only a cache reuse would keep
    cache.write_text(json.dumps(data))
    assert sweep(tmp_path, *args) == 0
    assert json.loads(cache.read_text())["iterations"] == 12345
    assert sweep(tmp_path, *args, "--force") == 0
    assert json.loads(cache.read_text())["iterations"] != 12345


def test_changed_options_invalidate_cache(tmp_path):
    sweep(tmp_path, "--case", "box", "--a", "0.5", "--nexp", "2:2")
    cache = tmp_path / "cache" / "box_0.5_4.json"
    data = json.loads(cache.read_text())
    data["iterations"] = 12345
    cache.write_text(json.dumps(data))
    sweep(tmp_path, "--case", "box", "--a", "0.5", "--nexp", "2:2", "--init", "equispaced")
    assert json.loads(cache.read_text())["iterations"] != 12345


def test_solver_failure_exit_code(tmp_path):
    code = sweep(tmp_path, "--case", "quadratic", "--a", "0.5", "--nexp", "4:5",
                 "--max-iter", "1", "--init", "equispaced")
    assert code == 2
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["results"][0]["failed_n"] == [16, 32]
    assert read_csv(tmp_path / "en_quadratic_0.5.csv")[0]["converged"] == "false"


@pytest.mark.parametrize(
    "args",
    [
        ["sweep", "--a", ""],
        ["sweep", "--a", "1.0"],
        ["sweep", "--nexp", "5:3"],
        ["sweep", "--nexp", "bogus"],
        ["sweep", "--format", "xml"],
        ["single", "--a", "1", "--n", "4"],
        ["single", "--n", "4", "--case", "triangle"],
        [],
    ],
)
def test_usage_errors(args, tmp_path, capsys):
    if args and args[0] == "sweep":
        args = args + ["--out", str(tmp_path)]
    assert main(args) == 1
    assert "usage:" in capsys.readouterr().err


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert sweep(blocker / "sub", "--a", "0.5", "--nexp", "2:2") == 1


def test_config_file(tmp_path):
    cfg = {"cases": ["box"], "a_values": [0.75], "nexp": "2:3", "options": {"gradient_tolerance": 1e-10}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    assert sweep(tmp_path / "out", "--config", str(path)) == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["config"]["options"]["gradient_tolerance"] == 1e-10
    with pytest.raises(UsageError):
        ExperimentConfig.from_dict({"colour": "red"})
    with pytest.raises(UsageError):
        run_sweep(ExperimentConfig(a_values=[], output=str(tmp_path / "x")))


def _single(capsys, *args):
    code = main(["single", *args])
    return code, json.loads(capsys.readouterr().out)


def test_single_examples(capsys):
    code, out = _single(capsys, "--case", "box", "--a", "0", "--n", "2")
    assert code == 0
    assert out["report"]["minimizer"] == pytest.approx([0, 0.5, 1], abs=1e-9)
    code, out = _single(capsys, "--case", "quadratic", "--a", "0", "--n", "1")
    assert out["report"]["minimizer"] == pytest.approx([0.25, 0.75], abs=1e-9)
    assert out["record"]["e_n"] > 0


def test_single_custom_potential(capsys):
    spec = {"a": 0.0, "reg": "plasticity", "U": {"coeffs": [0.0], "domain": [0, 1]}}
    code, out = _single(capsys, "--n", "4", "--potential", json.dumps(spec))
    assert code == 0
    assert out["report"]["minimizer"][0] == 0.0 and out["report"]["minimizer"][-1] == 1.0
    assert "record" not in out


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run(
        [sys.executable, "-m", "rieszgas", "single", "--case", "box", "--a", "0.5", "--n", "2"],
        capture_output=True, text=True, env=env, check=False,
    )
    assert proc.returncode == 0
    assert json.load(io.StringIO(proc.stdout))["report"]["converged"] is True
