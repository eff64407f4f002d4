"""Audio buffers, PCM-16 WAV I/O, band-limited resampling and frame energy."""

from __future__ import annotations

import io
import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import CurateError

DEFAULT_SAMPLE_RATE = 22050
DBFS_FLOOR = -180.0

_PCM = 0x0001
_EXTENSIBLE = 0xFFFE
# KSDATAFORMAT_SUBTYPE_PCM
_PCM_GUID = b"\x01\x00\x00\x00\x00\x00\x10\x00\x80\x00\x00\xaa\x00\x38\x9b\x71"


class UnsupportedFormat(CurateError):
    pass


class TruncatedFile(CurateError):
    pass


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioBuffer samples must be finite")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def slice(self, start: int, end: int) -> "AudioBuffer":
        return AudioBuffer(self.samples[start:end], self.sample_rate)


@dataclass(frozen=True)
class FrameGrid:
    frame_len: int
    hop: int
    count: int

    def __post_init__(self):
        if not (self.frame_len >= self.hop >= 1):
            raise ValueError(f"need frame_len >= hop >= 1, got {self.frame_len}, {self.hop}")
        if self.count < 0:
            raise ValueError("negative frame count")

    @classmethod
    def for_length(cls, length: int, frame_len: int, hop: int | None = None) -> "FrameGrid":
        hop = frame_len if hop is None else hop
        count = (length - frame_len) // hop + 1 if length >= frame_len else 0
        return cls(frame_len, hop, count)

    def start(self, i: int) -> int:
        return i * self.hop

    def frames(self, samples: np.ndarray) -> np.ndarray:
        """A (count, frame_len) read-only view of ``samples``."""
        if self.count == 0:
            return np.zeros((0, self.frame_len))
        needed = (self.count - 1) * self.hop + self.frame_len
        if len(samples) < needed:
            raise ValueError(f"grid needs {needed} samples, buffer has {len(samples)}")
        view = np.lib.stride_tricks.sliding_window_view(samples[:needed], self.frame_len)
        return view[:: self.hop]


def frame_samples(duration_ms: float, sample_rate: int) -> int:
    return max(1, int(sample_rate * duration_ms / 1000.0))


# -- WAV ------------------------------------------------------------------


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = pos + 8
        yield cid, body, size
        pos = body + size + (size & 1)


def decode_wav(data: bytes) -> AudioBuffer:
    """Decode a RIFF/WAVE PCM-16 file; channels are averaged to mono."""
    if len(data) < 12:
        raise TruncatedFile("file shorter than RIFF header")
    riff, _, wave_id = struct.unpack_from("<4sI4s", data, 0)
    if riff != b"RIFF" or wave_id != b"WAVE":
        raise UnsupportedFormat("not a RIFF/WAVE container")

    fmt = None
    pcm = None
    for cid, body, size in _iter_chunks(data):
        if cid == b"fmt ":
            if body + 16 > len(data) or size < 16:
                raise TruncatedFile("fmt chunk truncated")
            fmt = struct.unpack_from("<HHIIHH", data, body)
            if fmt[0] == _EXTENSIBLE:
                if size < 40 or body + 40 > len(data):
                    raise UnsupportedFormat("extensible fmt chunk without subformat")
                if data[body + 24 : body + 40] != _PCM_GUID:
                    raise UnsupportedFormat("extensible subformat is not PCM")
        elif cid == b"data":
            if body + size > len(data):
                raise TruncatedFile(f"data chunk declares {size} bytes, {len(data) - body} present")
            pcm = data[body : body + size]
            if fmt is not None:
                break
    if fmt is None:
        raise UnsupportedFormat("missing fmt chunk")
    if pcm is None:
        raise UnsupportedFormat("missing data chunk")

    tag, channels, rate, _, block_align, bits = fmt
    if tag not in (_PCM, _EXTENSIBLE) or bits != 16:
        raise UnsupportedFormat(f"only 16-bit PCM supported (format tag {tag:#x}, {bits} bits)")
    if channels < 1 or rate < 1 or block_align != 2 * channels:
        raise UnsupportedFormat("inconsistent fmt chunk")
    if len(pcm) % block_align:
        raise TruncatedFile("data chunk ends mid-frame")
    ints = np.frombuffer(pcm, dtype="<i2").reshape(-1, channels)
    samples = ints.astype(np.float64).mean(axis=1) / 32768.0
    return AudioBuffer(samples, rate)


def read_wav(path: str | Path) -> AudioBuffer:
    return decode_wav(Path(path).read_bytes())


def encode_wav(buf: AudioBuffer) -> bytes:
    levels = np.clip(np.round(np.clip(buf.samples, -1.0, 1.0) * 32768.0), -32768, 32767)
    out = io.BytesIO()
    with wave.open(out, "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate)
        w.writeframes(levels.astype("<i2").tobytes())
    return out.getvalue()


def write_wav(buf: AudioBuffer, path: str | Path) -> None:
    """Write mono PCM-16; samples are clamped to [-1, 1] and rounded."""
    Path(path).write_bytes(encode_wav(buf))


# -- resampling -------------------------------------------------------------

KAISER_BETA = 8.6
TAPS = 64
CUTOFF = 0.45


def _resampled_length(n: int, src: int, dst: int) -> int:
    # round-half-up of n * dst / src in exact integer arithmetic
    return (2 * n * dst + src) // (2 * src)


def resample(buf: AudioBuffer, target_rate: int, chunk: int = 8192) -> AudioBuffer:
    """Kaiser-windowed sinc interpolation to ``target_rate``.

    The lowpass cutoff sits at 0.45 of the lower of the two rates. The kernel
    spans 64 taps measured at the lower rate, so decimation widens it in input
    samples and keeps the transition band the same width relative to the
    output Nyquist.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    src = buf.sample_rate
    if target_rate == src:
        return buf
    x = buf.samples
    n_out = _resampled_length(len(x), src, target_rate)
    if n_out == 0 or len(x) == 0:
        return AudioBuffer(np.zeros(n_out), target_rate)

    scale = min(1.0, target_rate / src)
    fc = CUTOFF * min(src, target_rate) / src  # cycles per input sample
    half = int(np.ceil(TAPS / 2 / scale))
    offsets = np.arange(-half + 1, half + 1)
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    i0_beta = np.i0(KAISER_BETA)

    def taps(frac: np.ndarray) -> np.ndarray:
        t = frac[:, None] - offsets[None, :]  # distance from output instant to each tap
        ratio = np.clip(t / half, -1.0, 1.0)
        window = np.i0(KAISER_BETA * np.sqrt(1.0 - ratio * ratio)) / i0_beta
        return 2.0 * fc * np.sinc(2.0 * fc * t) * window

    # fractional offsets repeat with period target_rate / gcd, so tabulate them once
    g = math.gcd(src, target_rate)
    phases = target_rate // g
    table = taps(np.arange(phases) * g / target_rate) if phases <= 4096 else None

    out = np.empty(n_out)
    for lo in range(0, n_out, chunk):
        n = np.arange(lo, min(lo + chunk, n_out), dtype=np.int64)
        num = n * src
        base = num // target_rate
        rem = num - base * target_rate
        if table is not None:
            kernel = table[rem // g]
        else:
            kernel = taps(rem / target_rate)
        idx = base[:, None] + offsets[None, :] + half
        out[n] = np.einsum("ij,ij->i", kernel, padded[idx])
    return AudioBuffer(np.clip(out, -1.0, 1.0), target_rate)


# -- energy ------------------------------------------------------------------


def frame_rms_dbfs(buf: AudioBuffer, grid: FrameGrid) -> np.ndarray:
    frames = grid.frames(buf.samples)
    if grid.count == 0:
        return np.zeros(0)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    return 20.0 * np.log10(np.maximum(rms, 1e-9))


def frame_power(buf: AudioBuffer, grid: FrameGrid) -> np.ndarray:
    frames = grid.frames(buf.samples)
    if grid.count == 0:
        return np.zeros(0)
    return np.mean(frames * frames, axis=1)
