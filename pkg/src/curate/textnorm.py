"""Transcript normalization for TTS input and short-transcript rejection."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from typing import Mapping, Optional

from . import CurateError

DEFAULT_CHAR_MAP: dict[str, str] = {
    "ŋ": "ng",
    "Ŋ": "Ng",
    "‘": "'",
    "’": "'",
    "“": '"',
    "”": '"',
}

_DOTS = re.compile(r"\.{2,}")
_BANGS = re.compile(r"!{2,}")
_QUERIES = re.compile(r"\?{2,}")
_SPACE = re.compile(r"\s+")


class InvalidEncoding(CurateError):
    pass


@dataclass(frozen=True)
class TextnormConfig:
    min_words: int = 3
    char_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_CHAR_MAP))

    def __post_init__(self):
        if self.min_words < 0:
            raise ValueError("min_words must be >= 0")
        for src, dst in self.char_map.items():
            if not src:
                raise ValueError("char_map keys must be non-empty")
            if any(k in dst for k in self.char_map):
                raise ValueError(f"char_map value {dst!r} reintroduces a mapped character")


@dataclass(frozen=True)
class NormalizationOutcome:
    normalized: str
    accepted: bool
    applied_rules: tuple[str, ...]


def _collapse_space(text: str) -> str:
    return _SPACE.sub(" ", text).strip()


def word_count(text: str) -> int:
    collapsed = _collapse_space(text)
    return len(collapsed.split(" ")) if collapsed else 0


def normalize(text: str | bytes, cfg: Optional[TextnormConfig] = None) -> NormalizationOutcome:
    """Apply the normalization rules in a fixed order and record which fired."""
    cfg = cfg or TextnormConfig()
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise InvalidEncoding(str(exc)) from exc
    applied = []

    def step(name: str, new: str) -> None:
        nonlocal text
        if new != text:
            applied.append(name)
            text = new

    step("nfc", unicodedata.normalize("NFC", text))
    mapped = text
    for src, dst in cfg.char_map.items():
        mapped = mapped.replace(src, dst)
    # mapped output may compose with a following combining mark
    step("char_map", unicodedata.normalize("NFC", mapped))
    step("collapse_dots", _DOTS.sub(".", text))
    step("collapse_marks", _QUERIES.sub("?", _BANGS.sub("!", text)))
    step("collapse_space", _collapse_space(text))
    return NormalizationOutcome(text, word_count(text) >= cfg.min_words, tuple(applied))
