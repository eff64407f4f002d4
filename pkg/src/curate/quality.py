"""Objective clip quality: SNR, clipping, speech ratio and a pseudo-MOS."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence, TypeVar

import numpy as np

from . import CurateError
from .audio import AudioBuffer, FrameGrid, frame_power, frame_samples
from .external import ScorerProtocol, run_line_protocol

SNR_MIN_DB = -20.0
SNR_MAX_DB = 60.0

T = TypeVar("T")


class NoSpeech(CurateError):
    pass


class ScoreSource(str, enum.Enum):
    NATIVE = "native"
    EXTERNAL = "external"


@dataclass(frozen=True)
class QualityConfig:
    threshold: float = 3.5
    inclusive: bool = False
    weights: tuple[float, float, float] = (0.6, 0.25, 0.15)
    snr_low_db: float = 5.0
    snr_high_db: float = 35.0
    clip_level: float = 0.999
    clip_penalty: float = 50.0
    speech_ratio_band: tuple[float, float] = (0.4, 0.95)
    external_command: Optional[str] = None
    timeout_s: float = 300.0

    def __post_init__(self):
        if len(self.weights) != 3 or any(w < 0 for w in self.weights):
            raise ValueError("weights must be three non-negative numbers")
        if not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise ValueError("weights must sum to 1")
        if self.snr_high_db <= self.snr_low_db:
            raise ValueError("snr_high_db must exceed snr_low_db")
        lo, hi = self.speech_ratio_band
        if not 0 < lo <= hi < 1:
            raise ValueError("speech_ratio_band must satisfy 0 < low <= high < 1")
        if not 1 <= self.threshold <= 5:
            raise ValueError("threshold must lie in [1, 5]")
        if self.clip_penalty < 0 or not 0 < self.clip_level <= 1:
            raise ValueError("bad clipping parameters")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")


@dataclass(frozen=True)
class QualityReport:
    snr_db: float
    clip_ratio: float
    speech_ratio: float
    pseudo_mos: float
    source: ScoreSource = ScoreSource.NATIVE

    def to_dict(self) -> dict:
        return {
            "snr_db": self.snr_db,
            "clip_ratio": self.clip_ratio,
            "speech_ratio": self.speech_ratio,
            "pseudo_mos": self.pseudo_mos,
            "source": self.source.value,
        }


def _default_grid(buf: AudioBuffer, n_flags: int) -> FrameGrid:
    grid = FrameGrid.for_length(len(buf), frame_samples(30.0, buf.sample_rate))
    if grid.count != n_flags:
        raise ValueError(f"{n_flags} flags for a {grid.count}-frame 30 ms grid")
    return grid


def estimate_snr(
    buf: AudioBuffer, speech_flags: Sequence[bool], grid: Optional[FrameGrid] = None
) -> float:
    """Speech-frame to non-speech-frame power ratio in dB, clamped to [-20, 60].

    Without any non-speech frame the 5th-percentile frame power stands in
    for the noise level.
    """
    flags = np.asarray(speech_flags, dtype=bool)
    grid = grid or _default_grid(buf, len(flags))
    if grid.count != len(flags):
        raise ValueError(f"{len(flags)} flags for a {grid.count}-frame grid")
    if not flags.any():
        raise NoSpeech("no frame flagged as speech")
    power = frame_power(buf, grid)
    signal = power[flags].mean()
    noise = power[~flags].mean() if (~flags).any() else np.percentile(power, 5)
    if noise <= 0:
        return SNR_MAX_DB
    if signal <= 0:
        return SNR_MIN_DB
    return float(np.clip(10.0 * math.log10(signal / noise), SNR_MIN_DB, SNR_MAX_DB))


def clip_ratio(buf: AudioBuffer, level: float = 0.999) -> float:
    if len(buf) == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(buf.samples) >= level) / len(buf))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def pseudo_mos(
    snr_db: float, clip_ratio: float, speech_ratio: float, cfg: QualityConfig = QualityConfig()
) -> float:
    snr_score = _clamp01((snr_db - cfg.snr_low_db) / (cfg.snr_high_db - cfg.snr_low_db))
    clip_score = _clamp01(1.0 - cfg.clip_penalty * clip_ratio)
    lo, hi = cfg.speech_ratio_band
    if speech_ratio < lo:
        sr_score = _clamp01(speech_ratio / lo)
    elif speech_ratio > hi:
        sr_score = _clamp01((1.0 - speech_ratio) / (1.0 - hi))
    else:
        sr_score = 1.0
    w_snr, w_clip, w_sr = cfg.weights
    score = 1.0 + 4.0 * (w_snr * snr_score + w_clip * clip_score + w_sr * sr_score)
    return min(5.0, max(1.0, score))


def assess(
    buf: AudioBuffer,
    speech_flags: Sequence[bool],
    grid: Optional[FrameGrid] = None,
    source: Optional[AudioBuffer] = None,
    cfg: QualityConfig = QualityConfig(),
) -> QualityReport:
    """Measure ``buf`` and score it natively.

    Clipping is read from ``source`` when given, since gating and resampling
    smear the flat tops that mark a clipped recording.
    """
    flags = np.asarray(speech_flags, dtype=bool)
    snr = estimate_snr(buf, flags, grid)
    cr = clip_ratio(source if source is not None else buf, cfg.clip_level)
    sr = float(flags.mean()) if len(flags) else 0.0
    return QualityReport(snr, cr, sr, pseudo_mos(snr, cr, sr, cfg))


_DECIMAL = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


def external_score(
    paths: Sequence[str], command: str | Sequence[str], timeout_s: float = 300.0
) -> dict[str, float]:
    """Score files through an external estimator speaking the line protocol."""
    raw = run_line_protocol(paths, command, timeout_s)
    scores = {}
    for path, value in raw.items():
        if not _DECIMAL.match(value):
            raise ScorerProtocol(f"unparsable score {value!r} for {path!r}", path)
        score = float(value)
        if not 1.0 <= score <= 5.0:
            raise ScorerProtocol(f"score {score} for {path!r} outside [1, 5]", path)
        scores[path] = score
    return scores


def passes(score: float, threshold: float = 3.5, inclusive: bool = False) -> bool:
    return score >= threshold if inclusive else score > threshold


def filter_by_mos(
    scored: Sequence[tuple[T, float]], threshold: float = 3.5, inclusive: bool = False
) -> tuple[list[tuple[T, float]], list[tuple[T, float]]]:
    """Split ``(item, score)`` pairs into accepted/rejected, preserving order."""
    accepted, rejected = [], []
    for item in scored:
        (accepted if passes(item[1], threshold, inclusive) else rejected).append(item)
    return accepted, rejected
