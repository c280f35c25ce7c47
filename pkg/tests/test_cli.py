import json

import pytest

from curvewave import cli

FAST = ["fundamental-integrals", "spectral-check", "jacobi-run", "kato-norm", "parametrix",
        "born-series", "schrodinger-decay", "decay-scan"]


def run(argv, tmp_path, capsys):
    code = cli.main(argv + ["--output-dir", str(tmp_path)])
    return code, capsys.readouterr()


def test_fundamental_integrals_example(tmp_path, capsys):
    code, out = run(["fundamental-integrals", "--space", "h3", "--r", "1"], tmp_path, capsys)
    assert code == cli.EXIT_OK
    row = out.out.splitlines()[1].split(",")
    assert row[0] == "1.000000"
    # 1/(4 pi sinh 1) = 0.0677139...
    assert float(row[1]) == pytest.approx(0.067718, abs=1e-5)
    assert float(row[2]) == pytest.approx(0.0677139131378957, abs=1e-6)
    data = json.loads((tmp_path / "fundamental-integrals.json").read_text())
    assert data["checks"][0]["passed"]
    csv_lines = (tmp_path / "fundamental-integrals-integrals.csv").read_text().splitlines()
    assert csv_lines[0].startswith("#") and f"config_sha256={data['config_hash']}" in csv_lines[0]
    assert csv_lines[1].startswith("r [length]")


@pytest.mark.parametrize("command", FAST)
def test_subcommands_succeed(command, tmp_path, capsys):
    code, out = run([command], tmp_path, capsys)
    assert code == cli.EXIT_OK, out.err
    assert (tmp_path / f"{command}.json").exists()
    assert "[FAIL]" not in out.out


def test_failed_check_exit_code(tmp_path, capsys):
    code, out = run(["spectral-check", "--tol", "1e-17"], tmp_path, capsys)
    assert code == cli.EXIT_CHECK
    assert "[FAIL]" in out.out


@pytest.mark.parametrize("argv,key", [
    (["kato-norm", "--set", "delta=5"], "config.delta"),
    (["kato-norm", "--set", "colour=red"], "config.colour"),
    (["born-series", "--dt", "abc"], "config.dt"),
    (["jacobi-run", "--profile", "square"], "config.profile"),
])
def test_config_errors(argv, key, tmp_path, capsys):
    code, out = run(argv, tmp_path, capsys)
    assert code == cli.EXIT_CONFIG
    assert key in out.err


def test_numerical_failure_exit_code(tmp_path, capsys):
    code, out = run(["born-series", "--set", "amplitude=500", "--dt", "0.1", "--T", "4"], tmp_path, capsys)
    assert code == cli.EXIT_NUMERIC
    assert "DivergenceError" in out.err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# radii\nspace = h3\nr = 0.5, 2.0\ntol = 1e-6\n")
    code, out = run(["fundamental-integrals", "--config", str(cfg)], tmp_path, capsys)
    assert code == 0
    rows = out.out.splitlines()[1:3]
    assert [r.split(",")[0] for r in rows] == ["0.500000", "2.000000"]
    code, out = run(["fundamental-integrals", "--config", str(cfg), "--set", "r=3"], tmp_path, capsys)
    assert out.out.splitlines()[1].startswith("3.000000")
    code, out = run(["fundamental-integrals", "--config", str(tmp_path / "missing.cfg")], tmp_path, capsys)
    assert code == cli.EXIT_CONFIG


def test_json_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    cli.main(["kato-norm", "--output-dir", str(a)])
    cli.main(["kato-norm", "--output-dir", str(b), "--workers", "1"])
    capsys.readouterr()
    ja = json.loads((a / "kato-norm.json").read_text())
    jb = json.loads((b / "kato-norm.json").read_text())
    ja.pop("wall_time_s", None)
    jb.pop("wall_time_s", None)
    assert ja == jb


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUTPUT, str(tmp_path / "env"))
    assert cli.main(["fundamental-integrals"]) == 0
    capsys.readouterr()
    assert (tmp_path / "env" / "fundamental-integrals.json").exists()


def test_config_hash_ignores_output_settings():
    base = cli.resolve_config({})
    other = cli.resolve_config({"output_dir": "elsewhere", "workers": "3"})
    assert cli.config_hash(base) == cli.config_hash(other)
    assert cli.config_hash(base) != cli.config_hash(cli.resolve_config({"seed": "2"}))
