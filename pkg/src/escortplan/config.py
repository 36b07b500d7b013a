"""INI-style configuration files.

Sections mirror :class:`escortplan.simulator.Config`: ``[scenario]``,
``[task]``, ``[sensor]``, ``[cem]``, ``[planner]`` and ``[sim]``.  Keys are the
dataclass field names; anything omitted keeps its default, so an empty file
is the standard 100 x 100 m, 20-object setup.  Tuples are written as
comma-separated numbers::

    [scenario]
    variant = se
    n_escorts = 2
    spawn_box = 20, 80, 20, 80

    [cem]
    n_samples = 64
    n_elite = 8
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import typing

from .coordinator import PlannerConfig
from .belief import SensorParams
from .deccem import CemConfig
from .simulator import Config, ScenarioConfig, SimConfig
from .task import ReachAvoidTask

SECTIONS = {
    "scenario": ScenarioConfig,
    "task": ReachAvoidTask,
    "sensor": SensorParams,
    "cem": CemConfig,
    "planner": PlannerConfig,
    "sim": SimConfig,
}
_EXCLUDED = {("planner", "cem")}


class ConfigError(ValueError):
    """Unreadable or invalid configuration."""


def section_fields(section: str) -> dict[str, dataclasses.Field]:
    cls = SECTIONS[section]
    return {f.name: f for f in dataclasses.fields(cls) if (section, f.name) not in _EXCLUDED}


def _coerce(section: str, key: str, raw: str, field: dataclasses.Field):
    hint = typing.get_type_hints(SECTIONS[section])[key]
    text = raw.strip()
    args = typing.get_args(hint)
    if type(None) in args:
        if text.lower() in ("", "none"):
            return None
        hint = next(a for a in args if a is not type(None))
    origin = typing.get_origin(hint)
    try:
        if origin is tuple:
            parts = [p for p in text.strip("()[]").replace(",", " ").split()]
            return tuple(float(p) for p in parts)
        if hint is bool:
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if hint is int:
            return int(text)
        if hint is float:
            if text.lower() in ("pi", "pi/2"):
                return math.pi if text.lower() == "pi" else math.pi / 2
            return float(text)
        return text.strip("\"'")
    except ValueError:
        raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid {getattr(hint, '__name__', hint)}") from None


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("[") and stripped.endswith("]"):
            current = stripped[1:-1].strip()
        elif current == section and stripped.split("=")[0].split(":")[0].strip() == key:
            return n
    return None


def parse_config(text: str, overrides: dict | None = None) -> Config:
    """Build a validated :class:`Config` from INI text plus ``{"section.key": value}`` overrides.

    Overrides win over file values.  Raises :class:`ConfigError` with a line
    number for syntax problems and the offending field for invalid values.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"line {lineno}: cannot parse {line.strip()!r}") from None
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"line {lineno}: " if lineno else ""
        raise ConfigError(f"{where}{exc.message.splitlines()[0]}") from None

    values: dict[str, dict] = {name: {} for name in SECTIONS}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"line {_line_of(text, section, '') or '?'}: unknown section [{section}]")
        fields = section_fields(section)
        for key, raw in parser.items(section):
            if key not in fields:
                line = _line_of(text, section, key)
                raise ConfigError(f"line {line}: unknown key {key!r} in [{section}]")
            values[section][key] = _coerce(section, key, raw, fields[key])

    for dotted, raw in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if section not in SECTIONS or key not in section_fields(section):
            raise ConfigError(f"unknown setting {dotted!r}")
        values[section][key] = raw if not isinstance(raw, str) else _coerce(section, key, raw, section_fields(section)[key])

    built = {}
    for section, cls in SECTIONS.items():
        try:
            built[section] = cls(**values[section])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{section}] {exc}") from None
    try:
        return Config(**built)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def to_ini(cfg: Config) -> str:
    """Render ``cfg`` back to INI text that :func:`parse_config` reads unchanged."""
    lines = []
    for section in SECTIONS:
        lines.append(f"[{section}]")
        obj = getattr(cfg, section)
        for key in section_fields(section):
            value = getattr(obj, key)
            if value is None:
                value = "none"
            elif isinstance(value, tuple):
                value = ", ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
