"""YAML scenario configuration: loading, preset expansion and validation."""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import re

import yaml

from .errors import CespdcError, ConfigNotFoundError, ConfigParseError, ValidationError

PRESETS = ("fig2_unfiltered", "fig3_oscillations", "fig4_filtered", "fig5_modes")
OUTPUT_ENV = "CESPDC_OUT"

_CHAIN = {
    "path_transmission": "float",
    "detector_efficiency": "float",
    "dark_count_rate": "float",
    "jitter_fwhm": "float",
    "extra_filter_transmission": "float",
    "background_rate_per_mw": "float",
    "dead_time": "float",
}

# leaf kinds: float, int, str, bool, list, pair; a trailing "?" allows null
SCHEMA = {
    "preset": "str",
    "seed": "int",
    "output_dir": "str",
    "source": {"signal_wavelength": "float", "idler_wavelength": "float"},
    "cavity": {
        "fsr_signal": "float",
        "fsr_idler": "float?",
        "cluster_spacing": "float?",
        "damping_signal": "float",
        "damping_idler": "float",
        "finesse_signal": "float?",
        "finesse_idler": "float?",
        "internal_loss": "float",
        "output_coupler_transmission": "float",
    },
    "dispersion": {
        "crystal_length": "float",
        "air_path_length": "float",
        "temperature": "float?",
        "transit_time_diff": "float?",
    },
    "envelope": {"fwhm": "float", "shape": "str"},
    "spectrum": {
        "weight_model": "str",
        "kappa": "float",
        "detuning_signal": "float?",
        "span": "float?",
        "side_cluster_suppression": "float?",
        "truncation": "float",
        "gap_threshold": "float",
    },
    "rates": {
        "pair_rate_per_mw": "float?",
        "target_coincidence_rate_per_mw": "float?",
        "calibration_idler_efficiency": "float?",
        "duty_cycle_measurement": "float",
        "gate_period": "float",
        "escape_signal": "float",
        "escape_idler": "float",
    },
    "signal_chain": dict(_CHAIN),
    "idler_chain": dict(_CHAIN),
    "filter": {
        "enabled": "bool",
        "fsr": "float",
        "linewidth": "float",
        "peak_transmission": "float",
        "fiber_coupling": "float",
        "reference_fiber_coupling": "float",
    },
    "measurement": {
        "pump_powers": "list",
        "duration": "float",
        "bin_width": "float",
        "tau_range": "pair",
        "accidental_window": "pair",
        "coincidence_window": "float",
        "fine_bin_width": "float",
        "fine_half_range": "float",
        "modulation_exclusion": "float",
        "reference_duration": "float",
    },
    "grids": {"pdf_step": "float", "g1_start": "float", "g1_stop": "float", "g1_step": "float"},
    "g1": {"background_fraction": "float"},
    "modes": {"counts": "list", "response_fwhm": "float", "measured_peak_fwhm": "float", "max_modes": "int"},
    "brightness": {
        "linewidth_mhz": "float?",
        "single_pass_rate_per_mw": "float",
        "single_pass_bandwidth_mhz": "float",
        "single_pass_idler_efficiency": "float",
    },
}


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponents without a sign or dot (``1e6``, ``44.5e9``) as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
    |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
    |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[-+]?\.(?:inf|Inf|INF)
    |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


@dataclass(frozen=True)
class ScenarioConfig:
    preset: str
    params: dict
    output_dir: Path
    seed: int

    def __getitem__(self, key):
        return self.params[key]


def _preset_text(name: str) -> str:
    return resources.files("cespdc.presets").joinpath(f"{name}.yaml").read_text()


def preset_path(name: str):
    if name not in PRESETS:
        raise ValidationError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return resources.files("cespdc.presets").joinpath(f"{name}.yaml")


def _parse(text: str, origin: str):
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else None
        col = mark.column + 1 if mark else None
        raise ConfigParseError(f"{origin}:{line}:{col}: {exc.problem}", line, col) from exc
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{origin}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigParseError(f"{origin}: top level must be a mapping", 1, 1)
    return data


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_leaf(path: str, kind: str, value):
    nullable = kind.endswith("?")
    kind = kind.rstrip("?")
    if value is None:
        if nullable:
            return None
        raise ValidationError(f"{path}: value is required")
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(f"{path}: expected an integer, got {value!r}")
        return value
    if kind == "str":
        if not isinstance(value, str):
            raise ValidationError(f"{path}: expected a string, got {value!r}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValidationError(f"{path}: expected true/false, got {value!r}")
        return value
    if kind in ("list", "pair"):
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ValidationError(f"{path}: expected a list of numbers")
        if kind == "pair" and len(value) != 2:
            raise ValidationError(f"{path}: expected two numbers")
        return [float(v) if isinstance(v, float) else v for v in value]
    raise AssertionError(kind)


def _validate_tree(data: dict, schema: dict, prefix: str = "", require_all: bool = True) -> dict:
    unknown = sorted(set(data) - set(schema))
    if unknown:
        raise ValidationError(f"unknown key(s): {', '.join(prefix + k for k in unknown)}")
    out = {}
    for key, kind in schema.items():
        path = prefix + key
        if key not in data:
            if require_all:
                raise ValidationError(f"{path}: missing")
            continue
        if isinstance(kind, dict):
            if not isinstance(data[key], dict):
                raise ValidationError(f"{path}: expected a mapping")
            out[key] = _validate_tree(data[key], kind, path + ".", require_all)
        else:
            out[key] = _check_leaf(path, kind, data[key])
    return out


def validate_params(params: dict) -> dict:
    """Schema check plus the invariants of the domain types the tree feeds."""
    tree = _validate_tree(params, SCHEMA)
    preset = tree["preset"]
    if preset not in PRESETS + ("custom",):
        raise ValidationError(f"preset: unknown value {preset!r}")
    # build every domain object once so their invariants are enforced here
    from . import scenarios

    try:
        scenarios.build_components(tree)
    except ValidationError:
        raise
    except CespdcError as exc:
        raise ValidationError(f"invalid configuration: {exc}") from exc
    return tree


def config_from_dict(data: dict, origin: str = "<dict>") -> ScenarioConfig:
    preset = data.get("preset")
    if preset is None:
        raise ValidationError(f"{origin}: preset is required")
    if preset in PRESETS:
        base = _parse(_preset_text(preset), f"preset {preset}")
        _validate_tree(data, SCHEMA, require_all=False)
        merged = _merge(base, data)
    elif preset == "custom":
        merged = data
    else:
        raise ValidationError(f"{origin}: unknown preset {preset!r}")
    tree = validate_params(merged)
    out = os.environ.get(OUTPUT_ENV) or tree["output_dir"]
    return ScenarioConfig(preset, tree, Path(out), tree["seed"])


def load_config(path) -> ScenarioConfig:
    """Load a YAML scenario file. A named preset supplies defaults for omitted keys."""
    p = Path(path)
    if not p.is_file():
        raise ConfigNotFoundError(f"configuration file not found: {p}")
    return config_from_dict(_parse(p.read_text(), str(p)), str(p))


def load_preset(name: str, **overrides) -> ScenarioConfig:
    preset_path(name)
    return config_from_dict(_merge({"preset": name}, overrides), f"preset {name}")
