"""Training manifest: hash-based train/val split, metadata files and statistics."""

from __future__ import annotations

import enum
import json
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from . import CurateError

MASK64 = (1 << 64) - 1
FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class MissingAudio(CurateError):
    def __init__(self, clip_id: str, path: Path | str):
        super().__init__(f"audio for clip {clip_id!r} not found at {path}")
        self.clip_id = clip_id


class EmptyManifest(CurateError):
    pass


class Split(str, enum.Enum):
    TRAIN = "train"
    VAL = "val"


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def assign_split(clip_id: str, seed: int = 0, val_permille: int = 100) -> Split:
    if not 0 <= val_permille <= 1000:
        raise ValueError("val_permille must lie in [0, 1000]")
    h = splitmix64((seed & MASK64) ^ fnv1a64(clip_id.encode("utf-8")))
    return Split.VAL if h % 1000 < val_permille else Split.TRAIN


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    speaker_id: str
    text: str
    duration_s: float
    split: Split

    def __post_init__(self):
        if self.duration_s <= 0:
            raise ValueError(f"clip {self.clip_id!r} has non-positive duration")


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    audio_dir: Path
    sample_rate: int = 22050

    def __post_init__(self):
        ids = [e.clip_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate clip ids in manifest")

    def by_split(self, split: Split) -> list[ManifestEntry]:
        return sorted((e for e in self.entries if e.split is split), key=lambda e: e.clip_id)


@dataclass(frozen=True)
class DatasetStats:
    n_clips: int
    n_speakers: int
    max_len_s: float
    min_len_s: float
    total_hours: float

    def to_dict(self) -> dict:
        return {
            "n_clips": self.n_clips,
            "n_speakers": self.n_speakers,
            "max_len_s": self.max_len_s,
            "min_len_s": self.min_len_s,
            "total_hours": self.total_hours,
        }


def build_manifest(
    rows: Iterable[tuple[str, str, str, float]],
    audio_dir: Path | str,
    seed: int = 0,
    val_permille: int = 100,
    sample_rate: int = 22050,
) -> DatasetManifest:
    """Rows are ``(clip_id, speaker_id, text, duration_s)``."""
    entries = tuple(
        ManifestEntry(cid, spk, text, dur, assign_split(cid, seed, val_permille))
        for cid, spk, text, dur in sorted(rows)
    )
    return DatasetManifest(entries, Path(audio_dir), sample_rate)


def _metadata_text(entries: list[ManifestEntry]) -> str:
    return "".join(f"{e.clip_id}|{e.text}\n" for e in entries)


def write_metadata(manifest: DatasetManifest, out_dir: Path | str) -> None:
    """Write ``metadata_{train,val}.csv`` and copy audio into ``wavs/``."""
    out = Path(out_dir)
    wavs = out / "wavs"
    wavs.mkdir(parents=True, exist_ok=True)
    for e in sorted(manifest.entries, key=lambda e: e.clip_id):
        src = manifest.audio_dir / f"{e.clip_id}.wav"
        if not src.is_file():
            raise MissingAudio(e.clip_id, src)
        shutil.copyfile(src, wavs / f"{e.clip_id}.wav")
    for split in Split:
        path = out / f"metadata_{split.value}.csv"
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(_metadata_text(manifest.by_split(split)))


def compute_stats(manifest: DatasetManifest) -> DatasetStats:
    if not manifest.entries:
        raise EmptyManifest("no entries to summarise")
    durs = [e.duration_s for e in manifest.entries]
    return DatasetStats(
        n_clips=len(durs),
        n_speakers=len({e.speaker_id for e in manifest.entries}),
        max_len_s=round(max(durs), 2),
        min_len_s=round(min(durs), 2),
        total_hours=round(sum(durs) / 3600.0, 2),
    )


def empty_stats() -> DatasetStats:
    return DatasetStats(0, 0, 0.0, 0.0, 0.0)


def write_stats(stats: DatasetStats, path: Path | str) -> None:
    Path(path).write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_stats(path: Path | str) -> DatasetStats:
    return DatasetStats(**json.loads(Path(path).read_text(encoding="utf-8")))
