"""TOML experiment configuration: loading, schema validation, presets.

A configuration file has optional ``tx``, ``channel``, ``rx``, ``dsp``,
``cal`` and ``run`` tables; omitted keys fall back to the dataclass
defaults. The file is validated against ``config.schema.json`` (shipped
with the package) before any numeric cross-checks run.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import channel as ch
from . import dsp as dspmod
from . import receiver as rx
from . import wavegen as wg
from .errors import ConfigError
from .experiment import CalibrationPlan, ExperimentConfig

_SECTION_TYPES = {
    "tx": wg.TxConfig,
    "channel": ch.ChannelConfig,
    "rx": rx.RxConfig,
    "dsp": dspmod.DspConfig,
    "cal": CalibrationPlan,
}


def schema() -> dict:
    text = resources.files("cvqkdsim").joinpath("config.schema.json").read_text()
    return json.loads(text)


def validate_config_dict(data: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            path = ".".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{path}: {e.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))


def config_from_dict(data: dict) -> ExperimentConfig:
    validate_config_dict(data)
    kwargs = {}
    for section, cls in _SECTION_TYPES.items():
        table = data.get(section, {})
        attr = "ch" if section == "channel" else section
        try:
            kwargs[attr] = cls(**table)
        except TypeError as exc:
            raise ConfigError(f"bad [{section}] table: {exc}") from exc
    run = data.get("run", {})
    cfg = ExperimentConfig(**kwargs, **run)
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


def list_presets() -> list[str]:
    pkg = resources.files("cvqkdsim").joinpath("presets")
    return sorted(p.name[: -len(".toml")] for p in pkg.iterdir() if p.name.endswith(".toml"))


def load_preset(name: str) -> ExperimentConfig:
    pkg = resources.files("cvqkdsim").joinpath("presets")
    entry = pkg.joinpath(f"{name}.toml")
    if not entry.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(list_presets())}")
    data = tomllib.loads(entry.read_text())
    return config_from_dict(data)


def resolve_config(spec: str) -> ExperimentConfig:
    """Accept either a path to a TOML file or a bundled preset name."""
    if Path(spec).exists():
        return load_config(spec)
    if spec.endswith(".toml"):
        raise ConfigError(f"config file not found: {spec}")
    return load_preset(spec)
