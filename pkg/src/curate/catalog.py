"""Crowdsourced catalog parsing, validation/demographic filters, speaker ranking."""

from __future__ import annotations

import csv
import io
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath, PureWindowsPath
from typing import Iterable, Optional, TextIO

from . import CurateError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("client_id", "path", "sentence", "up_votes", "down_votes", "age", "gender")


class MissingColumn(CurateError):
    def __init__(self, name: str):
        super().__init__(f"catalog header lacks required column {name!r}")
        self.name = name


@dataclass(frozen=True)
class RowError:
    line_no: int
    reason: str


@dataclass(frozen=True)
class ClipRecord:
    clip_id: str
    speaker_id: str
    audio_path: str
    transcript: str
    up_votes: int
    down_votes: int
    age: Optional[str] = None
    gender: Optional[str] = None


@dataclass(frozen=True)
class CorpusCatalog:
    records: tuple[ClipRecord, ...]
    source_path: str = ""
    errors: tuple[RowError, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def replace_records(self, records: Iterable[ClipRecord]) -> "CorpusCatalog":
        return CorpusCatalog(tuple(records), self.source_path, self.errors)


def clip_id_from_path(path: str) -> str:
    """Strip any directory prefix (either separator style) and the final extension."""
    name = PureWindowsPath(PurePosixPath(path).name).name
    stem, dot, _ = name.rpartition(".")
    return stem if dot and stem else name


def _optional_token(value: Optional[str]) -> Optional[str]:
    if value is None:
        return None
    value = value.strip()
    return value or None


def _parse_votes(raw: str) -> Optional[int]:
    raw = raw.strip()
    if not (raw.isascii() and raw.isdigit()):
        return None
    return int(raw)


def parse_catalog(stream: TextIO | str, source_path: str = "", delimiter: str = "\t") -> CorpusCatalog:
    """Parse a delimited catalog with a header row into a :class:`CorpusCatalog`.

    Rows with malformed fields are skipped and reported as :class:`RowError`
    entries on the returned catalog; a header missing a required column
    raises :class:`MissingColumn`.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    # newline handling is left to csv so CRLF files parse the same as LF
    reader = csv.reader(stream, delimiter=delimiter, quoting=csv.QUOTE_NONE, strict=False)
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn(REQUIRED_COLUMNS[0]) from None
    header = [h.strip().lstrip("﻿") for h in header]
    index = {}
    for name in REQUIRED_COLUMNS:
        if name not in header:
            raise MissingColumn(name)
        index[name] = header.index(name)
    width = max(index.values()) + 1

    records: list[ClipRecord] = []
    errors: list[RowError] = []
    seen: set[str] = set()
    for row in reader:
        line_no = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < width:
            errors.append(RowError(line_no, f"expected at least {width} fields, got {len(row)}"))
            continue
        up = _parse_votes(row[index["up_votes"]])
        if up is None:
            errors.append(RowError(line_no, "non-numeric up_votes"))
            continue
        down = _parse_votes(row[index["down_votes"]])
        if down is None:
            errors.append(RowError(line_no, "non-numeric down_votes"))
            continue
        path = row[index["path"]].strip()
        clip_id = clip_id_from_path(path) if path else ""
        if not clip_id:
            errors.append(RowError(line_no, "empty path"))
            continue
        if clip_id in seen:
            errors.append(RowError(line_no, f"duplicate clip_id {clip_id!r}"))
            continue
        seen.add(clip_id)
        records.append(
            ClipRecord(
                clip_id=clip_id,
                speaker_id=row[index["client_id"]].strip(),
                audio_path=path,
                transcript=row[index["sentence"]],
                up_votes=up,
                down_votes=down,
                age=_optional_token(row[index["age"]]),
                gender=_optional_token(row[index["gender"]]),
            )
        )
    if errors:
        logger.warning("%d catalog rows skipped in %s", len(errors), source_path or "<stream>")
    return CorpusCatalog(tuple(records), source_path, tuple(errors))


def load_catalog(path: str | Path, delimiter: str = "\t") -> CorpusCatalog:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_catalog(fh, source_path=str(path), delimiter=delimiter)


def filter_validated(catalog: CorpusCatalog, min_up_votes: int = 3) -> CorpusCatalog:
    """Keep clips with at least ``min_up_votes`` up-votes (default: more than two)."""
    return catalog.replace_records(r for r in catalog.records if r.up_votes >= min_up_votes)


def filter_demographic(
    catalog: CorpusCatalog, gender: str, ages: Optional[Iterable[str]] = None
) -> CorpusCatalog:
    if not gender or not gender.strip():
        raise ValueError("gender must be a non-empty token")
    want = gender.strip().casefold()
    age_set = None if ages is None else {a.strip().casefold() for a in ages}

    def keep(r: ClipRecord) -> bool:
        if r.gender is None or r.gender.casefold() != want:
            return False
        if age_set is not None and (r.age is None or r.age.casefold() not in age_set):
            return False
        return True

    return catalog.replace_records(r for r in catalog.records if keep(r))


def top_contributors(catalog: CorpusCatalog, n: int) -> list[tuple[str, int]]:
    """Speakers by clip count, descending; ties by ascending speaker id."""
    if n < 1:
        raise ValueError("n must be >= 1")
    counts = Counter(r.speaker_id for r in catalog.records)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return ranked[:n]
