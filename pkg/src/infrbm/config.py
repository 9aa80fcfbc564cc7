"""Line-oriented ``key = value`` run configuration with ``[section]`` headers."""

import dataclasses
import json
from dataclasses import dataclass

from .cd import CdConfig
from .evaluation import BASE_MODES, schedule_preset
from .fw import FwConfig

ALIASES = {"fw": {"lambda": "lam"}}


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class AisSettings:
    schedule: str = "standard"
    runs: int = 100
    base_bias_mode: str = "data_marginal"
    seed: int = 0

    def __post_init__(self):
        schedule_preset(self.schedule)
        if self.runs < 2:
            raise ValueError(f"runs must be >= 2, got {self.runs}")
        if self.base_bias_mode not in BASE_MODES:
            raise ValueError(f"base_bias_mode must be one of {BASE_MODES}")


@dataclass(frozen=True)
class DataSettings:
    threshold: int = 127
    validation_count: int = 0
    split_seed: int = 0
    classify_reg: float = 1e-3
    classify_iters: int = 500

    def __post_init__(self):
        if not 0 <= self.threshold <= 255:
            raise ValueError(f"threshold must be in [0, 255], got {self.threshold}")
        if self.validation_count < 0:
            raise ValueError("validation_count must be >= 0")
        if self.classify_reg < 0 or self.classify_iters < 1:
            raise ValueError("classify_reg must be >= 0 and classify_iters >= 1")


SECTIONS = {"fw": FwConfig, "cd": CdConfig, "ais": AisSettings, "data": DataSettings}


@dataclass(frozen=True)
class RunConfig:
    fw: FwConfig
    cd: CdConfig
    ais: AisSettings
    data: DataSettings

    def as_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def replace(self, section, **changes):
        return dataclasses.replace(self, **{section: dataclasses.replace(getattr(self, section), **changes)})


def default_config():
    return RunConfig(*(cls() for cls in SECTIONS.values()))


def config_keys():
    """Every accepted key as 'section.key', including aliases."""
    keys = []
    for name, cls in SECTIONS.items():
        alias_of = {v: k for k, v in ALIASES.get(name, {}).items()}
        for f in dataclasses.fields(cls):
            keys.append(f"{name}.{alias_of.get(f.name, f.name)}")
    return keys


def _convert(raw, typ, key):
    if typ is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ValueError(f"{key} expects a boolean, got {raw!r}")
    if typ is int:
        try:
            return int(raw, 0)
        except ValueError:
            raise ValueError(f"{key} expects an integer, got {raw!r}") from None
    if typ is float:
        try:
            return float(raw)
        except ValueError:
            raise ValueError(f"{key} expects a number, got {raw!r}") from None
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
        return raw[1:-1]
    return raw


def _field_types(cls):
    hints = {"float": float, "int": int, "bool": bool, "str": str}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__, str)
            for f in dataclasses.fields(cls)}


def parse_config_text(text, default_section=None):
    """Parse config text; keys before any header go to ``default_section``."""
    values = {name: {} for name in SECTIONS}
    seen = {}
    section = default_section
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {line!r}", lineno)
            section = line[1:-1].strip()
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]; expected one of {list(SECTIONS)}", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("key outside of any [section]", lineno)
        key, raw = (s.strip() for s in line.split("=", 1))
        name = ALIASES.get(section, {}).get(key, key)
        cls = SECTIONS[section]
        types = _field_types(cls)
        if name not in types:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno)
        if (section, name) in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[section, name]})", lineno)
        seen[section, name] = lineno
        try:
            values[section][name] = _convert(raw, types[name], key)
            cls(**values[section])
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), lineno) from None
    return RunConfig(*(cls(**values[name]) for name, cls in SECTIONS.items()))


def parse_config(path, default_section=None):
    with open(path, encoding="utf-8") as f:
        return parse_config_text(f.read(), default_section)


def config_from_dict(d):
    """Inverse of :meth:`RunConfig.as_dict` (e.g. from a run manifest)."""
    parts = []
    for name, cls in SECTIONS.items():
        sec = dict(d.get(name, {}))
        unknown = set(sec) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
        parts.append(cls(**sec))
    return RunConfig(*parts)


def load_config(path, default_section=None):
    """A ``key = value`` file, or a run manifest (JSON) carrying a resolved config."""
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if text.lstrip().startswith("{"):
        return config_from_dict(json.loads(text)["config"])
    return parse_config_text(text, default_section)
