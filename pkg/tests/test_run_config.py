import json
import logging

import pytest

from discrete_de_rham.run_config import (
    RunConfig,
    check_run_config,
    load_run_config,
    save_run_config,
    user_run_path,
    validate_run_config,
)


def write_envelope(path, run, version=1):
    path.write_text(json.dumps({"version": version, "run": run}), encoding="utf-8")
    return path


class TestValidation:
    def test_defaults_are_valid(self):
        assert validate_run_config(RunConfig().to_dict()) == []

    def test_not_an_object(self):
        assert validate_run_config(["hodge"]) == ["run must be an object"]

    @pytest.mark.parametrize("key,value,message", [
        ("r", 6, "run.r: must be an integer in [0, 5]"),
        ("r", True, "run.r: must be an integer"),
        ("k", [], "run.k: must be a non-empty list"),
        ("k", [1, 4], "run.k: must be a non-empty list"),
        ("tol", 0, "run.tol: must be a positive number"),
        ("quad_degree", 30, "run.quad_degree: must be an integer in [1, 21]"),
        ("refinements", 0, "run.refinements: must be an integer >= 1"),
        ("threads", -1, "run.threads: must be an integer >= 0"),
        ("complex", "fem", "run.complex: must be one of ddr, vem, both"),
        ("family", "gaussian", "run.family: must be one of"),
        ("infsup", "yes", "run.infsup: must be true or false"),
        ("out", " ", "run.out: must be a non-empty path"),
        ("gen", "sphere:2:2", "run.gen: cannot parse"),
        ("colour", "red", "run.colour: unknown setting"),
    ])
    def test_single_problem(self, key, value, message):
        errors = validate_run_config({key: value})
        assert len(errors) == 1
        assert errors[0].startswith(message)

    def test_collects_every_problem(self):
        with pytest.raises(ValueError, match="Invalid run configuration") as info:
            check_run_config(RunConfig(r=9, threads=-2))
        assert "run.r" in str(info.value) and "run.threads" in str(info.value)


class TestOverrides:
    def test_none_keeps_value(self):
        config = RunConfig(r=2).with_overrides(r=None, gen="cartesian:2:2")
        assert config.r == 2
        assert config.gen == "cartesian:2:2"

    def test_unknown_override(self):
        with pytest.raises(ValueError, match="Unknown run settings: colour"):
            RunConfig().with_overrides(colour="red")

    def test_default_degrees(self):
        assert RunConfig().degrees == [1]
        assert RunConfig(k=[0, 2]).degrees == [0, 2]


class TestLoadSave:
    def test_round_trip(self, tmp_path):
        config = RunConfig(command="hodge", gen="simplicial:2:2", r=2, k=[0, 1], infsup=True)
        path = tmp_path / "nested" / "run.json"
        save_run_config(config, path)
        assert load_run_config(path) == config

    def test_partial_file_keeps_base(self, tmp_path):
        path = write_envelope(tmp_path / "run.json", {"r": 3})
        config = load_run_config(path, base=RunConfig(seed=5))
        assert (config.r, config.seed) == (3, 5)

    def test_strict_errors(self, tmp_path):
        with pytest.raises(ValueError, match="Cannot load run file"):
            load_run_config(tmp_path / "absent.json")
        bad_version = write_envelope(tmp_path / "v2.json", {}, version=2)
        with pytest.raises(ValueError, match="unsupported run file version"):
            load_run_config(bad_version)
        invalid = write_envelope(tmp_path / "bad.json", {"r": -1})
        with pytest.raises(ValueError, match="run.r"):
            load_run_config(invalid)

    def test_lenient_load_logs_and_falls_back(self, tmp_path, caplog):
        path = tmp_path / "broken.json"
        path.write_text("{", encoding="utf-8")
        base = RunConfig(r=4)
        with caplog.at_level(logging.WARNING, logger="discrete_de_rham.run_config"):
            assert load_run_config(path, strict=False, base=base) is base
        assert "Ignoring run file" in caplog.text

    def test_user_default_file(self, isolated_config_dir):
        assert load_run_config() == RunConfig()
        write_envelope(user_run_path(), {"r": 0, "complex": "ddr"})
        assert user_run_path().parent == isolated_config_dir
        config = load_run_config()
        assert (config.r, config.complex) == (0, "ddr")

    def test_save_rejects_invalid(self, tmp_path):
        with pytest.raises(ValueError):
            save_run_config(RunConfig(tol=-1.0), tmp_path / "run.json")
        assert not (tmp_path / "run.json").exists()
