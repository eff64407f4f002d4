"""STFT spectral gating for stationary background noise."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import CurateError
from .audio import AudioBuffer, FrameGrid


class ShapeMismatch(CurateError):
    pass


@dataclass(frozen=True)
class StftConfig:
    fft_len: int = 1024
    hop: int = 256

    def __post_init__(self):
        if self.fft_len < 2 or self.fft_len & (self.fft_len - 1):
            raise ValueError(f"fft_len must be a power of two, got {self.fft_len}")
        if self.hop < 1 or self.fft_len % self.hop:
            raise ValueError(f"hop must divide fft_len, got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def window(self) -> np.ndarray:
        n = np.arange(self.fft_len)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.fft_len)


@dataclass(frozen=True)
class EnhanceConfig:
    alpha: float = 1.5
    beta: float = 0.1
    fft_len: int = 1024
    hop: int = 256
    external_command: Optional[str] = None
    timeout_s: float = 300.0

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")
        if not 0 <= self.beta < 1:
            raise ValueError("beta must lie in [0, 1)")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be > 0")
        StftConfig(self.fft_len, self.hop)

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.fft_len, self.hop)


def stft(buf: AudioBuffer, cfg: StftConfig = StftConfig()) -> np.ndarray:
    """Complex spectrogram of shape (frames, fft_len // 2 + 1), no padding."""
    if len(buf) < cfg.fft_len:
        raise ShapeMismatch(f"need at least {cfg.fft_len} samples, got {len(buf)}")
    grid = FrameGrid.for_length(len(buf), cfg.fft_len, cfg.hop)
    return np.fft.rfft(grid.frames(buf.samples) * cfg.window, axis=1)


def istft(
    frames: np.ndarray, cfg: StftConfig = StftConfig(), sample_rate: int = 22050
) -> AudioBuffer:
    """Weighted overlap-add inverse of :func:`stft`.

    Samples whose summed squared window is ~0 (the very first sample) come
    back as zero; everything covered by at least one window is exact.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[1] != cfg.n_bins:
        raise ShapeMismatch(f"expected (frames, {cfg.n_bins}) spectrogram, got {frames.shape}")
    n_frames = frames.shape[0]
    if n_frames == 0:
        return AudioBuffer(np.zeros(0), sample_rate)
    window = cfg.window
    length = (n_frames - 1) * cfg.hop + cfg.fft_len
    out = np.zeros(length)
    norm = np.zeros(length)
    chunks = np.fft.irfft(frames, n=cfg.fft_len, axis=1) * window
    wsq = window * window
    for i in range(n_frames):
        s = i * cfg.hop
        out[s : s + cfg.fft_len] += chunks[i]
        norm[s : s + cfg.fft_len] += wsq
    covered = norm > 1e-8
    out[covered] /= norm[covered]
    out[~covered] = 0.0
    return AudioBuffer(out, sample_rate)


def estimate_noise_profile(
    frames: np.ndarray, speech_flags: Optional[Sequence[bool]] = None
) -> np.ndarray:
    """Per-bin noise magnitude.

    With flags: mean magnitude over non-speech frames (all frames if none are
    non-speech). Without: the 20th percentile of magnitude across frames.
    """
    mag = np.abs(np.asarray(frames))
    if mag.ndim != 2 or mag.shape[0] < 1:
        raise ShapeMismatch("need at least one spectrogram frame")
    if speech_flags is None:
        return np.percentile(mag, 20, axis=0)
    flags = np.asarray(speech_flags, dtype=bool)
    if flags.shape != (mag.shape[0],):
        raise ShapeMismatch(f"{len(flags)} flags for {mag.shape[0]} frames")
    quiet = mag[~flags]
    if quiet.shape[0] == 0:
        quiet = mag
    return quiet.mean(axis=0)


def stft_speech_flags(
    vad_flags: np.ndarray, vad_grid: FrameGrid, n_samples: int, cfg: StftConfig = StftConfig()
) -> np.ndarray:
    """Map VAD frame flags onto the STFT grid of an ``n_samples`` buffer.

    An STFT frame counts as speech if any sample under it lies in a speech
    VAD frame, so noise statistics only see frames that are entirely quiet.
    """
    mask = np.zeros(n_samples, dtype=np.int64)
    for i in np.flatnonzero(vad_flags):
        s = vad_grid.start(int(i))
        mask[s : s + vad_grid.frame_len] = 1
    csum = np.concatenate([[0], np.cumsum(mask)])
    grid = FrameGrid.for_length(n_samples, cfg.fft_len, cfg.hop)
    starts = np.arange(grid.count) * cfg.hop
    return (csum[starts + cfg.fft_len] - csum[starts]) > 0


def gate_gains(mag: np.ndarray, profile: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        g = (mag - alpha * profile) / mag
    g = np.where(mag > 0, g, beta)
    return np.maximum(beta, g)


def spectral_gate(
    buf: AudioBuffer,
    profile: np.ndarray,
    alpha: float = 1.5,
    beta: float = 0.1,
    cfg: StftConfig = StftConfig(),
) -> AudioBuffer:
    """Attenuate each STFT bin by max(beta, 1 - alpha * noise / |X|)."""
    if alpha <= 0:
        raise ValueError("alpha must be > 0")
    if not 0 <= beta < 1:
        raise ValueError("beta must lie in [0, 1)")
    profile = np.asarray(profile, dtype=np.float64)
    if profile.shape != (cfg.n_bins,):
        raise ShapeMismatch(f"profile needs {cfg.n_bins} bins, got {profile.shape}")
    n = len(buf)
    if n == 0:
        return buf
    # zero-pad so every original sample sits under a full set of windows
    pad = cfg.fft_len
    tail = pad + (-(n + pad) % cfg.hop)
    padded = AudioBuffer(np.concatenate([np.zeros(pad), buf.samples, np.zeros(tail)]), buf.sample_rate)
    spec = stft(padded, cfg)
    spec = spec * gate_gains(np.abs(spec), profile, alpha, beta)
    out = istft(spec, cfg, buf.sample_rate).samples[pad : pad + n]
    return AudioBuffer(np.clip(out, -1.0, 1.0), buf.sample_rate)


def denoise(
    buf: AudioBuffer,
    vad_flags: Optional[np.ndarray],
    vad_grid: Optional[FrameGrid],
    cfg: EnhanceConfig = EnhanceConfig(),
) -> AudioBuffer:
    """Estimate a noise profile from the clip's own quiet frames and gate it."""
    sc = cfg.stft
    if len(buf) < sc.fft_len:
        return buf
    spec = stft(buf, sc)
    flags = None
    if vad_flags is not None and vad_grid is not None:
        flags = stft_speech_flags(vad_flags, vad_grid, len(buf), sc)
    profile = estimate_noise_profile(spec, flags)
    return spectral_gate(buf, profile, cfg.alpha, cfg.beta, sc)
