import csv
import json
import logging

import pytest

from discrete_de_rham.app import EXIT_CONFIG, EXIT_OK, build_parser, resolve_config, run
from discrete_de_rham.checks import suites_for
from discrete_de_rham.generators import cartesian_grid
from discrete_de_rham.mesh_io import load_mesh, save_mesh


def read_report(directory):
    return json.loads((directory / "report.json").read_text(encoding="utf-8"))


class TestConfiguration:
    def test_invalid_degree_is_a_config_error(self, tmp_path):
        assert run(["check", "--r", "6", "--out", str(tmp_path)]) == EXIT_CONFIG
        assert not (tmp_path / "report.json").exists()

    def test_unknown_choice_exits_with_config_code(self):
        with pytest.raises(SystemExit) as info:
            run(["check", "--complex", "fem"])
        assert info.value.code == EXIT_CONFIG

    def test_bad_generator(self, tmp_path):
        assert run(["mesh", "--gen", "sphere:2", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_flags_override_run_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"version": 1, "run": {"r": 0, "complex": "vem"}}), encoding="utf-8")
        args = build_parser().parse_args(["hodge", "--config", str(path), "--r", "2", "--k", "0,1"])
        config = resolve_config(args)
        assert (config.command, config.r, config.complex, config.k) == ("hodge", 2, "vem", [0, 1])

    def test_missing_run_file(self, tmp_path):
        assert run(["check", "--config", str(tmp_path / "absent.json")]) == EXIT_CONFIG


class TestCommands:
    def test_mesh_round_trip(self, tmp_path):
        path = tmp_path / "square.json"
        assert run(["mesh", "--gen", "cartesian:2:2", "--out", str(path)]) == EXIT_OK
        assert load_mesh(path).counts() == cartesian_grid(2, 2).counts()

    def test_mesh_into_directory(self, tmp_path):
        assert run(["mesh", "--gen", "hexahedron", "--out", str(tmp_path / "meshes")]) == EXIT_OK
        assert (tmp_path / "meshes" / "mesh.json").exists()

    def test_cohomology_of_the_annulus(self, tmp_path):
        assert run(["cohomology", "--gen", "annulus:4:2", "--r", "0", "--complex", "ddr", "--out", str(tmp_path)]) == EXIT_OK
        report = read_report(tmp_path)
        assert report["command"] == "cohomology"
        assert report["betti"] == [1, 1, 0]
        assert report["passed"] is True
        assert len(report["reports"]) == 2

    def test_reports_are_reproducible(self, tmp_path):
        argv = ["cohomology", "--gen", "cartesian:2:2", "--r", "1", "--complex", "vem", "--out", str(tmp_path)]
        assert run(argv) == EXIT_OK
        first = (tmp_path / "report.json").read_bytes()
        assert run(argv) == EXIT_OK
        assert (tmp_path / "report.json").read_bytes() == first

    def test_check_report_matches_exit_code(self, tmp_path):
        code = run(["check", "--gen", "cartesian:2:2", "--r", "0", "--complex", "vem", "--out", str(tmp_path)])
        report = read_report(tmp_path)
        assert [suite["suite"] for suite in report["suites"]] == suites_for("vem")
        assert code == (EXIT_OK if report["passed"] else 2)
        assert report["tolerances"]["exact"] == pytest.approx(1e-10)

    def test_hodge_study(self, tmp_path):
        argv = ["hodge", "--gen", "cartesian:2:2", "--k", "0,2", "--r", "0", "--refinements", "2",
                "--export", "--out", str(tmp_path)]
        assert run(argv) == EXIT_OK
        with (tmp_path / "errors.csv").open(encoding="utf-8", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert [(row["k"], row["level"]) for row in rows] == [("0", "0"), ("0", "1"), ("2", "0"), ("2", "1")]
        report = read_report(tmp_path)
        assert report["passed"] is True
        assert all("solve_time_s" not in row for row in report["runs"])
        assert set(report["degrees"]) == {"0", "2"}
        assert report["degrees"]["0"]["target"] == 1
        assert report["degrees"]["0"]["slope_verdict"] in {"ok", "superconvergent", "slow"}
        assert (tmp_path / "operators" / "k2_level1_D1.txt").exists()

    def test_hodge_rejects_degree_above_dimension(self, tmp_path):
        assert run(["hodge", "--gen", "cartesian:2:2", "--k", "3", "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_mesh_file_gives_one_level(self, tmp_path, caplog):
        mesh_path = tmp_path / "square.json"
        save_mesh(cartesian_grid(2, 2), mesh_path)
        argv = ["hodge", "--mesh", str(mesh_path), "--k", "0", "--r", "0", "--refinements", "3",
                "--out", str(tmp_path / "out")]
        with caplog.at_level(logging.WARNING, logger="discrete_de_rham.app"):
            assert run(argv) == EXIT_OK
        assert "single level" in caplog.text
        assert len((tmp_path / "out" / "errors.csv").read_text(encoding="utf-8").splitlines()) == 2


@pytest.mark.slow
def test_hodge_in_worker_processes(tmp_path):
    argv = ["hodge", "--gen", "cartesian:2:2", "--k", "1", "--r", "0", "--refinements", "2",
            "--threads", "2", "--out", str(tmp_path)]
    assert run(argv) == EXIT_OK
    assert [run_["level"] for run_ in read_report(tmp_path)["runs"]] == [0, 1]


@pytest.mark.slow
def test_default_check_passes(tmp_path):
    assert run(["check", "--r", "1", "--out", str(tmp_path)]) == EXIT_OK
    assert read_report(tmp_path)["passed"] is True
