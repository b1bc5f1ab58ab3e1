import os

import pytest
from click.testing import CliRunner

from main import cli
from services.file_service import file_service

ZERO_RUN = "N = 4\nM = 16\nboundary = zero\n"
COUETTE_RUN = "N = 6\nM = 16\nnu = 0.1\nboundary = couette\nmode = artificial_compressibility\nepsilon = 1e-4\n"


@pytest.fixture
def runner():
    return CliRunner()


def _config(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_solve_writes_fields_and_report(runner, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["solve", "--config", _config(tmp_path, ZERO_RUN), "--out", str(out)])
    assert result.exit_code == 0, result.output
    for n in range(5):
        for name in ("u", "v", "P"):
            assert (out / f"{name}_{n}.csv").exists()
    report = file_service.read_report(str(out / "report.txt"))
    assert report["solve.converged"] == "true"
    assert report["solve.sweeps"] == "1"
    assert not (out / ".gmol.lock").exists()


def test_reruns_are_byte_identical(runner, tmp_path):
    cfg = _config(tmp_path, COUETTE_RUN)
    first, second = tmp_path / "first", tmp_path / "second"
    assert runner.invoke(cli, ["solve", "--config", cfg, "--out", str(first)]).exit_code == 0
    assert runner.invoke(cli, ["solve", "--config", cfg, "--out", str(second)]).exit_code == 0
    assert float(file_service.read_report(str(first / "report.txt"))["residual.J"]) > 0.0
    for name in sorted(os.listdir(first)):
        assert (first / name).read_bytes() == (second / name).read_bytes(), name


def test_report_re_evaluates_J(runner, tmp_path):
    cfg = _config(tmp_path, COUETTE_RUN)
    out = tmp_path / "out"
    assert runner.invoke(cli, ["solve", "--config", cfg, "--out", str(out)]).exit_code == 0
    result = runner.invoke(cli, ["report", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    solved = float(file_service.read_report(str(out / "report.txt"))["residual.J"])
    reread = float(file_service.read_report(str(out / "j_report.txt"))["residual.J"])
    assert solved > 0.0
    assert reread == pytest.approx(solved, rel=1e-12)


def test_report_on_zero_fields(runner, tmp_path):
    cfg = _config(tmp_path, ZERO_RUN)
    out = tmp_path / "out"
    assert runner.invoke(cli, ["solve", "--config", cfg, "--out", str(out)]).exit_code == 0
    assert runner.invoke(cli, ["report", "--config", cfg, "--out", str(out)]).exit_code == 0
    assert float(file_service.read_report(str(out / "j_report.txt"))["residual.J"]) == 0.0


def test_report_on_mismatched_grid(runner, tmp_path):
    out = tmp_path / "out"
    assert runner.invoke(cli, ["solve", "--config", _config(tmp_path, ZERO_RUN), "--out", str(out)]).exit_code == 0
    other = _config(tmp_path, "N = 4\nM = 32\nboundary = zero\n", "other.cfg")
    result = runner.invoke(cli, ["report", "--config", other, "--out", str(out)])
    assert result.exit_code == 2


def test_solve_without_pressure_rows_is_a_configuration_error(runner, tmp_path):
    cfg = _config(tmp_path, "N = 4\nM = 16\nboundary = example1\n")
    result = runner.invoke(cli, ["solve", "--config", cfg, "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "pressure" in result.output


def test_unknown_key_exits_with_2(runner, tmp_path):
    cfg = _config(tmp_path, "N = 4\nwhatever = 1\n")
    result = runner.invoke(cli, ["solve", "--config", cfg, "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "whatever" in result.output


def test_locked_output_directory(runner, tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".gmol.lock").write_text("pid 1")
    result = runner.invoke(cli, ["solve", "--config", _config(tmp_path, ZERO_RUN), "--out", str(out)])
    assert result.exit_code == 2
    assert "locked" in result.output


def test_fit_zero_data(runner, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(cli, ["fit", "--config", _config(tmp_path, ZERO_RUN), "--out", str(out)])
    assert result.exit_code == 0, result.output
    for name in ("coeff_a.csv", "coeff_b.csv", "coeff_c.csv", "P0.csv", "u_1.csv"):
        assert (out / name).exists()
    report = file_service.read_report(str(out / "report.txt"))
    assert report["figure_lines"] == "1"
    assert report["fit.target_reached"] == "true"


def test_fit_missing_target_still_writes_outputs(runner, tmp_path):
    cfg = _config(tmp_path, "N = 4\nM = 16\nboundary = example1\nfit.max_iterations = 1\nfit.seed_with_solver = false\n")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["fit", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 1
    assert (out / "coeff_a.csv").exists()
    assert file_service.read_report(str(out / "report.txt"))["fit.target_reached"] == "false"


def test_verify_theorem(runner, tmp_path):
    cfg = _config(tmp_path, "theorem.nodes = 33\n")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["verify-theorem", "--config", cfg, "--out", str(out)])
    assert result.exit_code == 0, result.output
    entries = file_service.read_report(str(out / "theorem_report.txt"))
    assert float(entries["divergence_sup"]) <= 1e-8
    assert float(entries["curl_sup"]) <= 1e-7
    assert os.listdir(out) == ["theorem_report.txt"]
