"""Experiment configuration files: INI sections, ``#`` comments and dotted
``section.key=value`` overrides, all type-checked against one schema."""
from __future__ import annotations

import configparser
from pathlib import Path

from .lab import ExperimentConfig

__all__ = ["ConfigError", "SCHEMA", "parse_config", "load_config", "dump_config",
           "parse_override"]


class ConfigError(ValueError):
    """Bad configuration: unknown key, malformed value, missing file."""


# section -> key -> (ExperimentConfig field, type)
SCHEMA = {
    "experiment": {"name": ("name", "str"), "out_dir": ("out_dir", "str"),
                   "t_max": ("t_max", "float"), "s_samples": ("s_samples", "floats"),
                   "cadence": ("cadence", "opt_float")},
    "grid": {"d": ("d", "int"), "n": ("n", "int")},
    "flow": {"kind": ("flow", "str"), "amplitude": ("amplitude", "float"),
             "period": ("period", "float")},
    "solver": {"p": ("p", "float"), "safety": ("safety", "float"),
               "dt_max": ("dt_max", "float"), "dt": ("dt", "opt_float"),
               "eps_g": ("eps_g", "float"), "interp_order": ("interp_order", "int")},
    "nu": {"list": ("nu_list", "floats")},
    "initial": {"kind": ("init", "str"), "seed": ("seed", "int"), "kmax": ("kmax", "opt_int")},
    "mixing": {"alpha": ("alpha", "float"), "beta": ("beta", "float")},
    "rate": {"law": ("rate_law", "str"), "params": ("rate_params", "floats")},
}

_TYPE_NAMES = {"int": "an integer", "float": "a number", "str": "text",
               "floats": "a comma-separated list of numbers", "opt_float": "a number or 'none'",
               "opt_int": "an integer or 'none'"}


def _convert(raw: str, kind: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind in ("opt_float", "opt_int"):
        if raw.lower() == "none":
            return None
        kind = kind[4:]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "floats":
        parts = [x for x in raw.split(",") if x.strip()]
        if not parts:
            raise ValueError("empty list")
        return tuple(float(x) for x in parts)
    raise AssertionError(kind)


def _format(value, kind) -> str:
    if value is None:
        return "none"
    if kind == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if kind in ("float", "opt_float"):
        return repr(float(value))
    return str(value)


def _lookup(section, key):
    if section not in SCHEMA:
        raise ConfigError(f"unknown section '{section}' (key '{section}.{key}')")
    if key not in SCHEMA[section]:
        raise ConfigError(f"unknown key '{section}.{key}'")
    return SCHEMA[section][key]


def parse_override(text: str) -> tuple:
    """``"section.key=value"`` -> ``(section, key, value)``."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    dotted, value = text.split("=", 1)
    if "." not in dotted:
        raise ConfigError(f"override key {dotted.strip()!r} must be dotted (section.key)")
    section, key = dotted.strip().split(".", 1)
    return section.strip(), key.strip(), value.strip()


def parse_config(text: str, overrides=(), *, source="<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                       comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: cannot parse config: {exc}") from None
    raw = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            _lookup(section, key)
            raw[(section, key)] = value
    for item in overrides:
        section, key, value = parse_override(item) if isinstance(item, str) else item
        _lookup(section, key)
        raw[(section, key)] = value
    kwargs = {}
    for (section, key), value in raw.items():
        name, kind = SCHEMA[section][key]
        try:
            kwargs[name] = _convert(value, kind)
        except ValueError:
            raise ConfigError(f"malformed value for '{section}.{key}': {value!r} "
                              f"(expected {_TYPE_NAMES[kind]})") from None
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{source}: invalid configuration: {exc}") from None


def load_config(path, overrides=()) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), overrides, source=str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Serialise every key; ``parse_config(dump_config(c)) == c``."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (name, kind) in keys.items():
            lines.append(f"{key} = {_format(getattr(cfg, name), kind)}")
        lines.append("")
    return "\n".join(lines)
