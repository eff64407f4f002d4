"""Pipeline configuration: ``key = value`` pairs under ``[section]`` headers.

Every section maps onto one dataclass; keys not listed there are rejected
so that typos fail loudly instead of silently falling back to defaults.
``[textnorm.char_map]`` is free-form and adds to the default replacements.
"""

from __future__ import annotations

import configparser
import dataclasses
import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from . import CurateError
from .audio import DEFAULT_SAMPLE_RATE
from .enhance import EnhanceConfig
from .intonation import IntonationConfig
from .quality import QualityConfig
from .textnorm import DEFAULT_CHAR_MAP, TextnormConfig
from .vad import VadConfig


class ConfigError(CurateError):
    pass


@dataclass(frozen=True)
class SplitConfig:
    seed: int = 0
    val_permille: int = 100

    def __post_init__(self):
        if not 0 <= self.val_permille <= 1000:
            raise ValueError("val_permille must lie in [0, 1000]")


@dataclass(frozen=True)
class PipelineConfig:
    input_catalog: Path
    audio_root: Path
    output_dir: Path
    work_dir: Path
    target_sample_rate: int = DEFAULT_SAMPLE_RATE
    gender: str = "female"
    ages: Optional[tuple[str, ...]] = None
    min_up_votes: int = 3
    delimiter: str = "\t"
    workers: int = 1
    vad: VadConfig = field(default_factory=VadConfig)
    enhance: EnhanceConfig = field(default_factory=EnhanceConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    intonation: IntonationConfig = field(default_factory=IntonationConfig)
    textnorm: TextnormConfig = field(default_factory=TextnormConfig)
    split: SplitConfig = field(default_factory=SplitConfig)

    def __post_init__(self):
        if self.target_sample_rate < 4 * self.intonation.f_max:
            raise ValueError("target_sample_rate too low for the pitch tracker's f_max")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.min_up_votes < 0:
            raise ValueError("min_up_votes must be >= 0")
        if not self.gender.strip():
            raise ValueError("gender must be non-empty")
        if len(self.delimiter) != 1:
            raise ValueError("delimiter must be one character")

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return _jsonable(dataclasses.asdict(self))


def _jsonable(value: Any) -> Any:
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _jsonable({f.name: getattr(value, f.name) for f in dataclasses.fields(value)})
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    return value


def fingerprint(*parts: Any) -> str:
    """Stable hash of JSON-able config fragments, used in cache keys."""
    blob = json.dumps(_jsonable(parts), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- parsing ---------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in _TRUE:
        return True
    if low in _FALSE:
        return False
    raise ValueError(f"not a boolean: {raw!r}")


def _parse_floats(raw: str) -> tuple[float, ...]:
    return tuple(float(p) for p in raw.split(",") if p.strip())


def _parse_optional_str(raw: str) -> Optional[str]:
    raw = raw.strip()
    return raw or None


def _unquote(raw: str) -> str:
    """Values may be wrapped in double quotes to keep surrounding spaces."""
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] == '"':
        return raw[1:-1]
    return raw


def _parse_tokens(raw: str) -> Optional[tuple[str, ...]]:
    toks = tuple(t.strip() for t in raw.split(",") if t.strip())
    return toks or None


def _parse_delimiter(raw: str) -> str:
    named = {"tab": "\t", "\\t": "\t", "comma": ",", ",": ","}
    key = raw.strip().lower()
    if key not in named:
        raise ValueError(f"delimiter must be 'tab' or 'comma', got {raw!r}")
    return named[key]


def _parser_for(default: Any):
    if isinstance(default, bool):
        return _parse_bool
    if isinstance(default, enum.Enum):
        return type(default)
    if isinstance(default, int):
        return lambda s: int(s.strip())
    if isinstance(default, float):
        return lambda s: float(s.strip())
    if isinstance(default, tuple):
        return _parse_floats
    return _parse_optional_str


def _section_schema(cls) -> dict[str, Any]:
    inst = cls()
    return {f.name: _parser_for(getattr(inst, f.name)) for f in dataclasses.fields(cls) if f.name != "char_map"}


_PIPELINE_KEYS = {
    "input_catalog": str,
    "audio_root": str,
    "output_dir": str,
    "work_dir": str,
    "target_sample_rate": lambda s: int(s.strip()),
    "gender": str.strip,
    "ages": _parse_tokens,
    "min_up_votes": lambda s: int(s.strip()),
    "delimiter": _parse_delimiter,
    "workers": lambda s: int(s.strip()),
}

_SECTIONS = {
    "vad": VadConfig,
    "enhance": EnhanceConfig,
    "quality": QualityConfig,
    "intonation": IntonationConfig,
    "textnorm": TextnormConfig,
    "split": SplitConfig,
}


def _read_section(parser: configparser.ConfigParser, name: str, schema: dict) -> dict:
    values = {}
    for key, raw in parser.items(name, raw=True):
        if key not in schema:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            values[key] = schema[key](raw)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from None
    return values


def parse_config(text: str, base_dir: Path | str = ".") -> PipelineConfig:
    parser = configparser.ConfigParser(
        interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"), strict=True
    )
    parser.optionxform = str  # keys are case-sensitive, char_map needs Ŋ distinct from ŋ
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    known = {"pipeline", "textnorm.char_map", *_SECTIONS}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")
    if parser.defaults():
        raise ConfigError("[DEFAULT] section is not supported")
    if not parser.has_section("pipeline"):
        raise ConfigError("missing [pipeline] section")

    top = _read_section(parser, "pipeline", _PIPELINE_KEYS)
    for required in ("input_catalog", "audio_root", "output_dir"):
        if not top.get(required):
            raise ConfigError(f"[pipeline] {required} is required")
    base = Path(base_dir)
    for key in ("input_catalog", "audio_root", "output_dir", "work_dir"):
        if key in top:
            top[key] = (base / top[key]).resolve()
    top.setdefault("work_dir", top["output_dir"].parent / "work")

    sections = {}
    for name, cls in _SECTIONS.items():
        values = _read_section(parser, name, _section_schema(cls)) if parser.has_section(name) else {}
        if name == "textnorm" and parser.has_section("textnorm.char_map"):
            extra = {k: _unquote(v) for k, v in parser.items("textnorm.char_map", raw=True)}
            values["char_map"] = {**DEFAULT_CHAR_MAP, **extra}
        try:
            sections[name] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}] {exc}") from None
    try:
        return PipelineConfig(**top, **sections)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: Path | str) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)
