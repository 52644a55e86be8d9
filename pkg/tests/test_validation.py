import pytest

from kgsolver.errors import ConfigError
from kgsolver.schemas.minimize import MinimizeMethod
from kgsolver.validation import ConfigValidation, load_run_config, parse_run_config

ODD_GRID = """{
  "model": {"g": 0.5},
  "grid": {
    "n_per_axis": 9,
    "box_length": 8.0
  }
}"""


def test_defaults_fill_in():
    config = parse_run_config('{"grid": {"n_per_axis": 8, "box_length": 8.0}}')
    assert config.model.g == 0.0
    assert config.minimize.method == MinimizeMethod.PROJECTED_GRADIENT
    assert config.study.fock_modes == [(1, 0, 0)]
    assert config.output_dir is None
    assert config.options().seed == config.seed


def test_seed_reaches_the_minimizer_options():
    config = parse_run_config('{"grid": {"n_per_axis": 8, "box_length": 8.0}, "seed": 17}')
    assert config.options().seed == 17


def test_odd_grid_names_field_and_line():
    with pytest.raises(ConfigError) as info:
        parse_run_config(ODD_GRID)
    assert "grid.n_per_axis" in info.value.detail
    assert "line 4" in info.value.detail
    assert info.value.exit_code == 2


def test_unknown_key_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_run_config('{"grid": {"n_per_axis": 8, "box_length": 8.0}, "gird": 1}')
    assert "gird" in info.value.detail


def test_bad_json_reports_position():
    with pytest.raises(ConfigError) as info:
        parse_run_config('{"grid":\n  {"n_per_axis": 8,,}}')
    assert info.value.detail.startswith("line 2")


def test_non_object_document():
    with pytest.raises(ConfigError):
        parse_run_config("[1, 2]")


def test_sweep_lists_must_ascend():
    with pytest.raises(ConfigError) as info:
        parse_run_config('{"grid": {"n_per_axis": 8, "box_length": 8.0}, "study": {"g_list": [0.2, 0.1]}}')
    assert "study.g_list" in info.value.detail


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "absent.json")


def test_locate_line():
    assert ConfigValidation.locate_line(ODD_GRID, ("grid", "n_per_axis")) == 4
    assert ConfigValidation.locate_line(ODD_GRID, ("grid",)) == 3
    assert ConfigValidation.locate_line(ODD_GRID, ("absent",)) is None
