'''
Tests for layered settings resolution.
'''
from pathlib import Path

import pytest

from app.exceptions import ConfigurationError
from app.settings import Settings, load_settings, read_config_file


def write_config(tmp_path, text):
    path = tmp_path / "run.env"
    path.write_text(text, encoding="utf-8")
    return path


def test_defaults_without_any_layer():
    settings = load_settings(environ={})
    assert settings == Settings()
    assert settings.algorithm == "ml-c"
    assert settings.tol is None


def test_environment_layer():
    settings = load_settings(environ={"MLSG_TOL": "1e-3", "MLSG_THREADS": "4", "MLSG_NOT_A_KEY": "x",
                                      "HOME": "/root"})
    assert settings.tol == 1e-3
    assert settings.threads == 4


def test_file_beats_environment_and_flags_beat_file(tmp_path):
    path = write_config(tmp_path, "TOL=2e-3\nALGORITHM=ml-b\nREDUCTION_CHECK=yes\nGRID=none\n")
    environ = {"MLSG_TOL": "1e-3", "MLSG_SOLVER": "cg"}

    settings = load_settings(config_file=path, environ=environ)
    assert settings.tol == 2e-3
    assert settings.algorithm == "ml-b"
    assert settings.solver == "cg"
    assert settings.reduction_check is True
    assert settings.grid is None

    settings = load_settings({"tol": 5e-4, "algorithm": None}, path, environ)
    assert settings.tol == 5e-4
    assert settings.algorithm == "ml-b"


def test_paths_and_log_level(tmp_path):
    path = write_config(tmp_path, "OUT_DIR=results\nLOG_LEVEL=debug\n")
    settings = load_settings(config_file=path, environ={})
    assert settings.out_dir == Path("results")
    assert settings.log_level == "DEBUG"


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        load_settings({"colour": "red"}, environ={})
    with pytest.raises(ConfigurationError):
        read_config_file(write_config(tmp_path, "COLOUR=red\n"))


@pytest.mark.parametrize("text", ["TOL=small\n", "REDUCTION_CHECK=maybe\n", "THREADS=1.5\n"])
def test_invalid_values_are_rejected(tmp_path, text):
    with pytest.raises(ConfigurationError):
        read_config_file(write_config(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_settings(config_file=tmp_path / "absent.env", environ={})
