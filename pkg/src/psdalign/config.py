"""YAML experiment-configuration files.

The file is a nested key-value document; sections group the physical setup,
the pilot scheme, the contamination model, and the run controls. Every field
has a default matching the shipped scenario, so `{}` is a valid config.
"""

import yaml

from .simkit import ExperimentConfig


class ConfigError(ValueError):
    """Malformed configuration, with a field-path diagnostic."""


_SECTIONS = {
    "system": {
        "symbol_duration_s": "symbol_duration_s",
        "sampling_divisor": "sampling_divisor",
    },
    "users": {
        "count": "users",
        "doppler_hz": "doppler_hz",
        "power_db": "user_power_db",
    },
    "pilots": {
        "scheme": "scheme",
        "shifts": "shifts",
    },
    "contamination": {
        "band": "contamination_band",
        "inr_db": "contamination_inr_db",
    },
    "noise": {
        "pilot_snr_db": "pilot_snr_db",
    },
    "run": {
        "observation_length": "observation_length",
        "sweep_lengths": "sweep_lengths",
        "antennas": "antennas",
        "trials": "trials",
        "dl_lag": "dl_lag",
        "dl_snr_db": "dl_snr_db",
        "perfect_csi": "perfect_csi",
        "channel_model": "channel_model",
        "seed": "seed",
        "jobs": "jobs",
        "tolerance_scale": "tolerance_scale",
    },
}

_TUPLE_FIELDS = {"contamination_band", "sweep_lengths"}


def config_from_mapping(doc):
    """Build an ExperimentConfig from a nested mapping; {} gives the defaults."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(f"config root must be a mapping, got {type(doc).__name__}")
    kwargs = {}
    known = set(_SECTIONS)
    for section, body in doc.items():
        if section not in known:
            raise ConfigError(f"unknown section {section!r} (expected one of {sorted(known)})")
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"section {section!r} must be a mapping")
        fields = _SECTIONS[section]
        for key, value in body.items():
            if key not in fields:
                raise ConfigError(
                    f"unknown key {section}.{key} (expected one of {sorted(fields)})"
                )
            name = fields[key]
            if name in _TUPLE_FIELDS and isinstance(value, list):
                value = tuple(value)
            if name == "shifts" and isinstance(value, list):
                value = tuple(value)
            kwargs[name] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def config_to_mapping(config):
    """Nested mapping mirror of a config (round-trips through config_from_mapping)."""
    flat = config.to_dict()
    doc = {}
    for section, fields in _SECTIONS.items():
        body = {key: flat[name] for key, name in fields.items()}
        doc[section] = body
    return doc


def load_config(path):
    """Parse a YAML config file; raises ConfigError with diagnostics."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}")
    return config_from_mapping(doc)


def dump_config(config):
    """YAML text for a config."""
    return yaml.safe_dump(config_to_mapping(config), sort_keys=False)
