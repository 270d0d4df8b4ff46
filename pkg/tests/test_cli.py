import json

import numpy as np
import pytest
from scipy.sparse.linalg import ArpackNoConvergence

from mobilitylab import cli
from mobilitylab.errors import ConvergenceError
from mobilitylab.graph import Graph, read_edge_list, write_edge_list


def read_table(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config: ")
    config = json.loads(lines[0][len("# config: ") :])
    header = lines[1].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[2:]]
    return config, rows


def test_theory_prints_values(capsys):
    assert cli.run(["theory", "--lambda-of-alpha", "5"]) == 0
    assert capsys.readouterr().out == "2.5\n"


def test_theory_several_values(capsys):
    code = cli.run(["theory", "--alpha-of-lambda", "2.5", "--halfline", "2.5", "--j", "2"])
    assert code == 0
    first, second = capsys.readouterr().out.split()
    assert float(first) == pytest.approx(5.0)
    assert float(second) == pytest.approx(2.5 * 0.25)


def test_theory_alpha_star(capsys):
    assert cli.run(["theory", "--alpha-star", "--n", "1000", "--d", "2", "--mu", "1"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(2.1)


@pytest.mark.parametrize(
    "argv, tag",
    [
        (["theory"], "parameter"),
        (["theory", "--lambda-of-alpha", "1.5"], "domain"),
        (["theory", "--lambda-max", "--b", "9"], "domain"),
        (["theory", "--theta-b", "3"], "parameter"),
        (["gen", "--n", "10"], "parameter"),
        (["gen", "--n", "ten", "--d", "2"], "parameter"),
        (["frobnicate"], "parameter"),
        ([], "parameter"),
    ],
)
def test_errors_exit_with_code_two(capsys, argv, tag):
    assert cli.run(argv) == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err[-1].startswith(f"mobilitylab: error={tag} ")


def test_convergence_errors_exit_with_code_three(capsys, mocker):
    mocker.patch.object(cli, "_theory", side_effect=ConvergenceError("stuck", 1e-3, 10))
    mocker.patch.dict(cli.HANDLERS, {"theory": cli._theory})
    assert cli.run(["theory", "--lambda-of-alpha", "5"]) == 3
    assert capsys.readouterr().err == "mobilitylab: error=convergence stuck\n"


@pytest.mark.parametrize(
    "failure",
    [
        np.linalg.LinAlgError("eigenvalues did not converge"),
        ArpackNoConvergence("No convergence", np.zeros(0), np.zeros((0, 0))),
    ],
)
def test_solver_failures_exit_with_code_three(capsys, mocker, failure):
    mocker.patch.object(cli, "_theory", side_effect=failure)
    mocker.patch.dict(cli.HANDLERS, {"theory": cli._theory})
    assert cli.run(["theory", "--lambda-of-alpha", "5"]) == 3
    err = capsys.readouterr().err
    assert err.startswith(f"mobilitylab: error=convergence {type(failure).__name__}: ")
    assert err.count("\n") == 1


def test_version(capsys):
    assert cli.run(["--version"]) == 0
    assert capsys.readouterr().out.startswith("mobilitylab ")


def test_gen_is_deterministic(tmp_path):
    first, second = tmp_path / "a.txt", tmp_path / "b.txt"
    for target in (first, second):
        assert cli.run(["gen", "--n", "300", "--d", "3", "--seed", "4", "--out", str(target)]) == 0
    assert first.read_text() == second.read_text()
    g = read_edge_list(first)
    assert (g.n, g.meta.seed, g.meta.d) == (300, 4, 3.0)


def test_gen_into_directory(tmp_path):
    assert cli.run(["gen", "--n", "50", "--b", "1", "--seed", "2", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "graph_2.txt").exists()


def test_spectrum_csv(tmp_path):
    argv = ["spectrum", "--n", "200", "--d", "3", "--seeds", "1..2", "--k-top", "3"]
    assert cli.run(argv + ["--out", str(tmp_path), "--jobs", "2"]) == 0
    config, rows = read_table(tmp_path / "spectrum.csv")
    assert config["command"] == "spectrum"
    assert config["generator"].startswith("numpy.random.Philox")
    assert [(row["seed"], row["index"]) for row in rows] == [
        ("1", "0"), ("1", "1"), ("1", "2"), ("2", "0"), ("2", "1"), ("2", "2")
    ]
    values = [float(row["lambda"]) for row in rows[:3]]
    assert values == sorted(values, reverse=True)


def test_spectrum_json_from_graph_file(tmp_path, k4):
    graph = tmp_path / "k4.txt"
    write_edge_list(k4, graph)
    argv = ["spectrum", "--graph", str(graph), "--d", "1", "--k-top", "2", "--format", "json"]
    assert cli.run(argv + ["--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "spectrum.json").read_text())
    assert [pair["lambda"] for pair in payload["pairs"]] == pytest.approx([3.0, -1.0])


def test_spectrum_graph_without_header_needs_degree(tmp_path, capsys):
    graph = tmp_path / "g.txt"
    graph.write_text("0 1\n1 2\n")
    assert cli.run(["spectrum", "--graph", str(graph), "--out", str(tmp_path)]) == 2
    assert "has no header" in capsys.readouterr().err


def test_config_file(tmp_path):
    run_file = tmp_path / "run.yaml"
    run_file.write_text(f"n: 100\nd: 2.5\nk_top: 2\nout: {tmp_path}\n")
    assert cli.run(["spectrum", "--config", str(run_file)]) == 0
    _, rows = read_table(tmp_path / "spectrum.csv")
    assert len(rows) == 2


def test_localize(tmp_path):
    argv = ["localize", "--n", "300", "--d", "3", "--k-top", "2", "--seed", "5"]
    assert cli.run(argv + ["--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "reports.json").read_text())
    run = payload["runs"][0]
    assert run["seed"] == 5
    assert len(run["reports"]) == 2
    assert len(run["u_x"]) == len(run["W"])
    _, rows = read_table(tmp_path / "reports.csv")
    assert [row["class"] in ("localized", "delocalized", "unclassified") for row in rows] == [
        True,
        True,
    ]


def test_phase(tmp_path):
    argv = ["phase", "--n", "200", "--b", "1", "--k-top", "2", "--bulk", "3", "--jobs", "1"]
    assert cli.run(argv + ["--out", str(tmp_path)]) == 0
    for name in ("phase_points.csv", "reports.json", "summary.json", "ll_curve.csv", "gaps.csv"):
        assert (tmp_path / name).exists()
    _, rows = read_table(tmp_path / "phase_points.csv")
    assert len(rows) == 5
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert sum(summary["totals"].values()) == 5
    assert summary["config"]["version"]


def test_spacing_on_a_tree(tmp_path):
    # root with 40 children, each with 20 leaves
    edges = [(0, c) for c in range(1, 41)]
    edges += [(c, 41 + 20 * (c - 1) + i) for c in range(1, 41) for i in range(20)]
    graph = tmp_path / "tree.txt"
    write_edge_list(Graph.from_edges(841, edges), graph)
    argv = ["spacing", "--graph", str(graph), "--d", "20", "--r", "1", "--threshold", "10"]
    assert cli.run(argv + ["--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    run = summary["runs"][0]
    assert run["root"] == 0
    assert run["boundary"] == 800
    assert run["root_robust"]
    z = run["z"]
    _, rows = read_table(tmp_path / "cavity.csv")
    assert len(rows) == 40
    # isolated boundary leaves have G = -1/z
    expected = -1 / (z - 1 / z)
    assert all(float(row["g_value"]) == pytest.approx(expected) for row in rows)


def test_anticoncentration(tmp_path):
    argv = ["anticoncentration", "--samples", "400", "--terms", "1,4", "--half-widths", "0.1"]
    assert cli.run(argv + ["--distribution", "discrete", "--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "concentration.csv")
    assert len(rows) == 1
    assert float(rows[0]["q_hat"]) == pytest.approx(0.1, abs=0.06)
    _, rows = read_table(tmp_path / "kesten.csv")
    assert [row["n_terms"] for row in rows] == ["1", "4"]


def test_gw_robust(tmp_path, capsys):
    assert cli.run(["gw-robust", "--d", "3", "--out", str(tmp_path)]) == 2
    assert "requires --r" in capsys.readouterr().err
    argv = ["gw-robust", "--d", "3", "--r", "2", "--trials", "500", "--format", "json"]
    assert cli.run(argv + ["--out", str(tmp_path)]) == 0
    payload = json.loads((tmp_path / "gw_robust.json").read_text())
    record = payload["runs"][0]
    assert record["frequency"] == pytest.approx(record["exact"], abs=0.1)


def test_toy_wigner(tmp_path):
    argv = ["toy-wigner", "--t", "0", "--size", "4", "--gap", "1", "--seeds", "1,2"]
    assert cli.run(argv + ["--out", str(tmp_path)]) == 0
    _, rows = read_table(tmp_path / "overlaps.csv")
    assert len(rows) == 8
    assert {row["hybridized"] for row in rows} == {"false"}
    assert np.allclose([float(row["overlap"]) for row in rows], 1.0)


def test_jobs_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("MOBILITYLAB_JOBS", "0")
    argv = ["spectrum", "--n", "50", "--d", "2", "--out", str(tmp_path)]
    assert cli.run(argv) == 2
    monkeypatch.setenv("MOBILITYLAB_JOBS", "2")
    assert cli.run(argv) == 0


def test_phase_is_byte_identical_for_any_job_count(tmp_path):
    argv = ["phase", "--n", "150", "--b", "1", "--k-top", "2", "--bulk", "2", "--seeds", "1..2"]
    for jobs in ("1", "2"):
        assert cli.run(argv + ["--jobs", jobs, "--out", str(tmp_path / jobs)]) == 0
    for name in ("phase_points.csv", "summary.json", "ll_curve.csv", "gaps.csv"):
        assert (tmp_path / "1" / name).read_bytes() == (tmp_path / "2" / name).read_bytes()
