import pytest
import yaml

from cespdc.config import OUTPUT_ENV, PRESETS, load_config, load_preset, preset_path
from cespdc.errors import ConfigNotFoundError, ConfigParseError, ValidationError


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_preset(name)
    assert cfg.preset == name
    assert cfg.seed == cfg.params["seed"]


def test_fig2_pump_powers():
    cfg = load_config(str(preset_path("fig2_unfiltered")))
    assert cfg.params["measurement"]["pump_powers"] == [0.024, 0.13, 0.5, 1.0, 2.0]


def test_numbers_in_exponent_form_are_floats(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("preset: fig2_unfiltered\ncavity:\n  fsr_signal: 414e6\n")
    assert load_config(p).params["cavity"]["fsr_signal"] == 414e6


def test_missing_file(tmp_path):
    with pytest.raises(ConfigNotFoundError):
        load_config(tmp_path / "nope.yaml")


def test_parse_error_has_position(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("preset: fig2_unfiltered\ncavity:\n  fsr_signal: [1, 2\n")
    with pytest.raises(ConfigParseError) as info:
        load_config(p)
    assert info.value.line is not None and info.value.column is not None


def test_cavity_invariant_is_reported(tmp_path):
    p = tmp_path / "inc.yaml"
    p.write_text("preset: fig2_unfiltered\ncavity:\n  finesse_signal: 100.0\n")
    with pytest.raises(ValidationError, match="CavityModel invariant"):
        load_config(p)


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "unk.yaml"
    p.write_text("preset: fig2_unfiltered\ncavity:\n  fsr_signa: 414e6\n")
    with pytest.raises(ValidationError, match="unknown key"):
        load_config(p)


def test_custom_requires_every_key(tmp_path):
    p = tmp_path / "custom.yaml"
    p.write_text("preset: custom\nseed: 1\n")
    with pytest.raises(ValidationError, match="missing"):
        load_config(p)
    full = dict(load_preset("fig2_unfiltered").params, preset="custom")
    p.write_text(yaml.safe_dump(full))
    assert load_config(p).preset == "custom"


def test_output_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "envout"))
    assert load_preset("fig5_modes").output_dir == tmp_path / "envout"


def test_type_errors(tmp_path):
    p = tmp_path / "t.yaml"
    p.write_text("preset: fig2_unfiltered\nseed: abc\n")
    with pytest.raises(ValidationError):
        load_config(p)
