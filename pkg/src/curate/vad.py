"""Adaptive-energy voice activity detection and silence trimming."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import CurateError
from .audio import AudioBuffer, FrameGrid, frame_rms_dbfs, frame_samples


class EmptyAudio(CurateError):
    pass


class TrimMode(str, enum.Enum):
    ENDPOINTS = "endpoints"
    CONCATENATE = "concatenate"


@dataclass(frozen=True)
class VadConfig:
    frame_ms: float = 30.0
    margin_db: float = 6.0
    abs_floor_dbfs: float = -60.0
    hangover_frames: int = 5
    mode: TrimMode = TrimMode.ENDPOINTS
    max_gap_ms: float = 300.0
    min_result_s: float = 1.0
    # below this P90-P10 spread a clip has no silent reference and only the
    # absolute floor applies
    flat_spread_db: float = 3.0
    reject_short: bool = True

    def __post_init__(self):
        if self.frame_ms <= 0:
            raise ValueError("frame_ms must be > 0")
        if self.hangover_frames < 0:
            raise ValueError("hangover_frames must be >= 0")
        if self.min_result_s <= 0:
            raise ValueError("min_result_s must be > 0")
        if self.max_gap_ms < 0 or self.flat_spread_db < 0:
            raise ValueError("max_gap_ms and flat_spread_db must be >= 0")
        object.__setattr__(self, "mode", TrimMode(self.mode))


@dataclass(frozen=True)
class SpeechSegment:
    start_sample: int
    end_sample: int

    @property
    def length(self) -> int:
        return self.end_sample - self.start_sample


@dataclass(frozen=True)
class VadResult:
    segments: tuple[SpeechSegment, ...]
    trimmed: AudioBuffer
    flagged_short: bool
    speech_flags: np.ndarray
    grid: FrameGrid


def vad_grid(buf: AudioBuffer, cfg: VadConfig) -> FrameGrid:
    return FrameGrid.for_length(len(buf), frame_samples(cfg.frame_ms, buf.sample_rate))


def speech_threshold(dbfs: np.ndarray, cfg: VadConfig) -> float:
    if len(dbfs) == 0:
        return cfg.abs_floor_dbfs
    floor, top = np.percentile(dbfs, [10, 90])
    if top - floor < cfg.flat_spread_db:
        return cfg.abs_floor_dbfs
    return max(floor + cfg.margin_db, cfg.abs_floor_dbfs)


def _raw_flags(buf: AudioBuffer, cfg: VadConfig) -> tuple[np.ndarray, FrameGrid]:
    if len(buf) == 0:
        raise EmptyAudio("cannot run voice activity detection on an empty buffer")
    grid = vad_grid(buf, cfg)
    dbfs = frame_rms_dbfs(buf, grid)
    return dbfs > speech_threshold(dbfs, cfg), grid


def dilate(flags: np.ndarray, radius: int) -> np.ndarray:
    if radius == 0 or not flags.any():
        return flags.copy()
    kernel = np.ones(2 * radius + 1)
    return np.convolve(flags.astype(float), kernel, mode="same") > 0


def detect_speech_frames(buf: AudioBuffer, cfg: VadConfig = VadConfig()) -> np.ndarray:
    """Per-frame speech flags with hangover dilation on both sides."""
    raw, _ = _raw_flags(buf, cfg)
    return dilate(raw, cfg.hangover_frames)


def _runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Half-open [start, end) frame index runs of True."""
    edges = np.diff(np.concatenate([[0], flags.astype(np.int8), [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return list(zip(starts.tolist(), ends.tolist()))


def trim(buf: AudioBuffer, cfg: VadConfig = VadConfig()) -> VadResult:
    """Cut non-speech from a clip.

    Endpoints are taken from the undilated energy decision so that the kept
    span hugs the first and last speech frame; the dilated flags are returned
    for downstream noise and SNR estimation.
    """
    raw, grid = _raw_flags(buf, cfg)
    smoothed = dilate(raw, cfg.hangover_frames)
    runs = _runs(raw)
    n = len(buf)

    def span(first: int, last_excl: int) -> SpeechSegment:
        return SpeechSegment(grid.start(first), min(n, grid.start(last_excl - 1) + grid.frame_len))

    if not runs:
        segments: tuple[SpeechSegment, ...] = ()
    elif cfg.mode is TrimMode.ENDPOINTS:
        segments = (span(runs[0][0], runs[-1][1]),)
    else:
        max_gap = cfg.max_gap_ms / 1000.0 * buf.sample_rate
        merged = [list(runs[0])]
        for start, end in runs[1:]:
            if (start - merged[-1][1]) * grid.hop <= max_gap:
                merged[-1][1] = end
            else:
                merged.append([start, end])
        segments = tuple(span(s, e) for s, e in merged)

    if segments:
        samples = np.concatenate([buf.samples[s.start_sample : s.end_sample] for s in segments])
    else:
        samples = np.zeros(0)
    trimmed = AudioBuffer(samples, buf.sample_rate)
    return VadResult(
        segments=segments,
        trimmed=trimmed,
        flagged_short=trimmed.duration < cfg.min_result_s,
        speech_flags=smoothed,
        grid=grid,
    )


def apply_segments(buf: AudioBuffer, segments: tuple[SpeechSegment, ...]) -> AudioBuffer:
    """Cut ``buf`` along segments found on a same-length sibling buffer."""
    if not segments:
        return AudioBuffer(np.zeros(0), buf.sample_rate)
    return AudioBuffer(
        np.concatenate([buf.samples[s.start_sample : s.end_sample] for s in segments]),
        buf.sample_rate,
    )
