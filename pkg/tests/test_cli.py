import numpy as np
import pytest

from gbrkit import cli
from gbrkit import distributions as dist
from gbrkit.errors import InfeasibleContourError, NonConvergenceError


def run_cli(argv, tmp_path, name="out.csv"):
    path = tmp_path / name
    code = cli.main(list(argv) + ["--output", str(path)])
    return code, path


def test_br_table_shape(tmp_path):
    code, path = run_cli(["cdf", "br", "--method", "airy", "--tau", "0.5", "--grid", "-6:6:0.25"], tmp_path)
    assert code == 0
    columns, rows = cli.read_table(path)
    assert columns == ["s", "value", "error_estimate"]
    assert len(rows) == 49
    vals = np.array([r[1] for r in rows])
    assert np.all((vals >= -1e-6) & (vals <= 1 + 1e-6))
    assert np.all(np.diff(vals) >= -1e-6)
    assert rows[0][0] == -6.0 and rows[-1][0] == 6.0


def test_compare_br_prints_small_gap(capsys):
    assert cli.main(["compare", "br", "--tau", "1"]) == 0
    out = capsys.readouterr().out
    worst = float(out.strip().split("=")[-1])
    assert worst <= 1e-5


def test_csv_round_trip_is_exact(tmp_path):
    code, path = run_cli(["cdf", "gue", "--grid", "-3:1:0.5"], tmp_path)
    assert code == 0
    _, rows = cli.read_table(path)
    for s, value, _ in rows:
        assert value == dist.gue_cdf(s).value


def test_json_mirrors_csv(tmp_path):
    argv = ["cdf", "gbr", "--x", "0.5", "--y", "-0.2", "--grid", "-1:1:1"]
    _, csv_path = run_cli(argv, tmp_path)
    code, json_path = run_cli(argv + ["--format", "json"], tmp_path, "out.json")
    assert code == 0
    assert cli.read_table(csv_path) == cli.read_table(json_path)


def test_simulate_ecdf_deterministic(tmp_path):
    argv = ["simulate", "ecdf", "--N", "30", "--count", "2000", "--seed", "7"]
    _, a = run_cli(argv, tmp_path, "a.csv")
    _, b = run_cli(argv + ["--threads", "3"], tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.slow
def test_simulate_ecdf_full_size_deterministic(tmp_path):
    argv = ["simulate", "ecdf", "--N", "200", "--count", "100000", "--seed", "7"]
    _, a = run_cli(argv, tmp_path, "a.csv")
    _, b = run_cli(argv, tmp_path, "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_exit_code_for_bad_boundary(tmp_path):
    code, _ = run_cli(["cdf", "finite-n", "--m", "5", "--n", "5", "--alpha=-0.6", "--grid", "1"], tmp_path)
    assert code == 2


def test_exit_code_for_infeasible_contour(tmp_path):
    from gbrkit.contours import stationary_entry
    from gbrkit.distributions import FiniteNParams
    with pytest.raises(InfeasibleContourError):
        stationary_entry(FiniteNParams(5, 5, (0.1, 0.1), (-0.1, -0.1), "stationary"), 1, 1, 1.0, 1.0)
    code, _ = run_cli(["cdf", "finite-n", "--m", "5", "--n", "5", "--model", "stationary",
                       "--alpha", "0.1,0.1", "--beta", "-0.1,-0.1", "--grid", "3"], tmp_path)
    assert code == 2


def test_exit_code_for_tolerance_range(tmp_path):
    code, _ = run_cli(["cdf", "gue", "--tol", "1e-2", "--grid", "0"], tmp_path)
    assert code == 2


def test_exit_code_for_non_convergence(tmp_path, monkeypatch):
    def stuck(s, tol=1e-8):
        raise NonConvergenceError("refinement cap")
    monkeypatch.setattr(dist, "gue_cdf", stuck)
    code, _ = run_cli(["cdf", "gue", "--grid", "0"], tmp_path)
    assert code == 3


def test_config_file_with_flag_override(tmp_path):
    conf = tmp_path / "job.conf"
    conf.write_text("# gbr job\ntau = 0.5\ngrid = -1:1:1\nx = 0\ny = 0\n")
    out = tmp_path / "conf.csv"
    assert cli.main(["cdf", "gbr", "--config", str(conf), "--output", str(out)]) == 0
    _, rows = cli.read_table(out)
    assert [r[0] for r in rows] == [-1.0, 0.0, 1.0]
    assert rows[1][1] == pytest.approx(dist.br_cdf_airy(0.5, -0.25).value, abs=1e-6)
    out2 = tmp_path / "conf2.csv"
    assert cli.main(["cdf", "gbr", "--config", str(conf), "--grid", "0", "--output", str(out2)]) == 0
    assert len(cli.read_table(out2)[1]) == 1
    conf.write_text("bogus = 1\n")
    assert cli.main(["cdf", "gbr", "--config", str(conf)]) == 2


def test_grid_parsing():
    assert cli.parse_grid("-6:6:0.25").size == 49
    assert cli.parse_grid("2").tolist() == [2.0]
    for bad in ("1:0:1", "0:1:0", "a:b:c", "1:2"):
        with pytest.raises(Exception):
            cli.parse_grid(bad)


def test_plot_script(tmp_path):
    out = tmp_path / "g.csv"
    assert cli.main(["cdf", "gue", "--grid", "0", "--output", str(out), "--emit-plot-script"]) == 0
    script = tmp_path / "g_plot.py"
    assert script.exists()
    compile(script.read_text(), str(script), "exec")
    assert cli.main(["cdf", "gue", "--grid", "0", "--emit-plot-script"]) == 2


def test_simulate_reports(tmp_path):
    code, path = run_cli(["simulate", "boundary", "--N", "500", "--count", "400"], tmp_path)
    assert code == 0
    cols, rows = cli.read_table(path)
    keys = [r[0] for r in rows]
    assert cols == ["key", "value"] and "ks_pvalue" in keys and "variance" in keys
    code, path = run_cli(["simulate", "stationarity", "--N", "20", "--count", "500",
                          "--alpha", "0.1", "--beta=-0.1"], tmp_path, "st.csv")
    assert code == 0
    assert "p_value" in [r[0] for r in cli.read_table(path)[1]]
    code, path = run_cli(["simulate", "exit-tail", "--N", "30", "--count", "500", "--u-grid", "0:2:0.5"],
                         tmp_path, "ex.csv")
    assert code == 0
    _, rows = cli.read_table(path)
    assert len(rows) == 5 and rows[0][1] == 1.0


def test_compare_finite_vs_mc(tmp_path, capsys):
    code, path = run_cli(["compare", "finite-vs-mc", "--m", "4", "--n", "4", "--count", "4000"], tmp_path)
    assert code == 0
    line = capsys.readouterr().out
    sup = float(line.split("=")[1].split()[0])
    radius = float(line.split("=")[2])
    assert sup <= radius + 0.01
