from pathlib import Path

import pytest
import yaml

from conftest import small_config_dict
from whisker_rc.config import (
    config_from_dict,
    config_hash,
    default_config,
    dump_config,
    load_config,
)
from whisker_rc.errors import ArtifactIOError, ConfigError

SHIPPED = Path(__file__).resolve().parents[1] / "configs" / "default.yaml"


def test_shipped_config_is_the_default():
    assert load_config(SHIPPED).to_dict() == default_config().to_dict()
    assert config_hash(load_config(SHIPPED)) == config_hash(default_config())


def test_yaml_round_trip(tmp_path):
    cfg = config_from_dict(small_config_dict())
    path = tmp_path / "c.yaml"
    path.write_text(dump_config(cfg))
    assert load_config(path).to_dict() == cfg.to_dict()


def test_hash_stable_and_sensitive():
    a, b = default_config(), default_config()
    assert config_hash(a) == config_hash(b)
    assert len(config_hash(a)) == 16
    assert config_hash(a.with_seed(8)) != config_hash(a)


def test_exponent_strings_accepted(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("classification:\n  ridge_lambda: 1e-3\n")
    assert load_config(path).classification.ridge_lambda == 1e-3


@pytest.mark.parametrize("section, values, field", [
    ("whisker", {"taper_ratio": 1.5}, "whisker.taper_ratio"),
    ("whisker", {"tap_positions": [0.5, 1.2]}, "whisker.tap_positions[1]"),
    ("sampling", {"window_s": 1e-4}, "sampling.window_s"),
    ("detector", {"d": 9}, "detector.d"),
    ("detector", {"novel_class": "moon"}, "detector.novel_class"),
    ("mixture", {"planted": {"gravel": 0.5, "flat": 0.2}}, "mixture.planted"),
    ("navigation", {"start_x_m": 5.0}, "navigation.start_x_m"),
    ("classification", {"trials_per_class": "many"}, "classification.trials_per_class"),
    ("report", {"formats": ["pdf"]}, "report.formats[0]"),
])
def test_field_level_errors(section, values, field):
    data = small_config_dict()
    data[section] = {**data[section], **values}
    with pytest.raises(ConfigError, match=field.replace("[", r"\[").replace("]", r"\]")):
        config_from_dict(data)


def test_unknown_keys_rejected():
    data = small_config_dict()
    data["whisker"]["colour"] = "grey"
    with pytest.raises(ConfigError, match="colour"):
        config_from_dict(data)
    with pytest.raises(ConfigError, match="extras"):
        config_from_dict({**small_config_dict(), "extras": 1})


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ArtifactIOError):
        load_config(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("whisker: [unclosed\n")
    with pytest.raises(ConfigError):
        load_config(bad)


def test_dump_is_plain_yaml():
    data = yaml.safe_load(dump_config(default_config()))
    assert data["navigation"]["target"] == "sand"
    assert data["mixture"]["planted"] == {"gravel": 0.75, "flat": 0.25}


def test_preset_exponent_strings_accepted(tmp_path):
    path = tmp_path / "c.yaml"
    text = dump_config(default_config()).replace("roughness_sigma_m: 5.0e-05", "roughness_sigma_m: 5e-5", 1)
    assert "5e-5" in text
    path.write_text(text)
    assert load_config(path).to_dict() == default_config().to_dict()


def test_preset_field_errors_named():
    data = small_config_dict()
    data["presets"][1]["hardness"] = "soft"
    with pytest.raises(ConfigError, match=r"presets\[1\]\.hardness"):
        config_from_dict(data)
