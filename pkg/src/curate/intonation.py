"""Pitch tracking, per-speaker prosody profiles and similar-intonation cohort search.

The feature set (median, spread, range and slope of F0 in semitones) is
one proposal for quantifying how alike two voices sound in pitch movement.
The selection report keeps every per-speaker feature so a listener can
audit the choice.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import CurateError
from .audio import AudioBuffer, FrameGrid

SEMITONE_REF_HZ = 55.0
FEATURES = ("median_st", "std_st", "range_st", "slope_st_s")
EXHAUSTIVE_LIMIT = 200_000


class TooShort(CurateError):
    pass


class InsufficientVoicing(CurateError):
    pass


class NotEnoughSpeakers(CurateError):
    pass


@dataclass(frozen=True)
class IntonationConfig:
    k: int = 6
    f_min: float = 65.0
    f_max: float = 500.0
    min_clips: int = 50
    top_contributors: int = 20
    threshold: float = 0.15
    min_voiced_frames: int = 10

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if not 0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")
        if self.min_clips < 1 or self.top_contributors < 1:
            raise ValueError("min_clips and top_contributors must be >= 1")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass(frozen=True, eq=False)
class F0Track:
    f0_hz: np.ndarray
    voiced: np.ndarray
    hop_s: float

    @property
    def voiced_fraction(self) -> float:
        return float(self.voiced.mean()) if len(self.voiced) else 0.0


@dataclass(frozen=True)
class UtteranceProsody:
    median_st: float
    std_st: float
    range_st: float
    slope_st_s: float
    voiced_fraction: float

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURES])


@dataclass(frozen=True)
class SpeakerProfile:
    speaker_id: str
    feature_vector: tuple[float, ...]
    clip_count: int


@dataclass(frozen=True)
class CohortSelection:
    speaker_ids: tuple[str, ...]
    diameter: float
    method: str


def hz_to_st(f: np.ndarray | float) -> np.ndarray | float:
    return 12.0 * np.log2(np.asarray(f) / SEMITONE_REF_HZ)


def st_to_hz(st: np.ndarray | float) -> np.ndarray | float:
    return SEMITONE_REF_HZ * 2.0 ** (np.asarray(st) / 12.0)


# -- pitch ---------------------------------------------------------------------


def _cmnd(frames: np.ndarray, tau_max: int, width: int) -> np.ndarray:
    """Cumulative-mean-normalised difference for lags 0..tau_max, per frame."""
    n_frames = frames.shape[0]
    head = frames[:, :width]
    e0 = np.sum(head * head, axis=1)
    sq = frames * frames
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(sq, axis=1)], axis=1)
    # d(tau) = e(0) + e(tau) - 2 r(tau), with the cross term via FFT
    nfft = 1 << int(math.ceil(math.log2(frames.shape[1] + width)))
    fa = np.fft.rfft(frames, nfft, axis=1)
    fb = np.fft.rfft(head, nfft, axis=1)
    r = np.fft.irfft(fa * np.conj(fb), nfft, axis=1)[:, : tau_max + 1]
    taus = np.arange(tau_max + 1)
    e_tau = csum[:, taus + width] - csum[:, taus]
    d = np.maximum(e0[:, None] + e_tau - 2.0 * r, 0.0)
    d[:, 0] = 0.0
    running = np.cumsum(d[:, 1:], axis=1)
    out = np.ones_like(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        norm = d[:, 1:] * taus[1:] / running
    out[:, 1:] = np.where(running > 1e-12 * np.maximum(e0[:, None], 1e-30), norm, 1.0)
    return out


def _parabolic(y0: float, y1: float, y2: float) -> float:
    denom = y0 - 2.0 * y1 + y2
    if denom <= 0:
        return 0.0
    return float(np.clip(0.5 * (y0 - y2) / denom, -1.0, 1.0))


def extract_f0(
    buf: AudioBuffer,
    f_min: float = 65.0,
    f_max: float = 500.0,
    threshold: float = 0.15,
    hop_ms: float = 10.0,
) -> F0Track:
    """Difference-function pitch tracker with cumulative-mean normalisation.

    Per 10 ms hop the first normalised-difference dip under ``threshold``
    (followed down to its local minimum) gives the period; failing that the
    global minimum is used when it is below 0.3. The lag is refined by
    parabolic interpolation.
    """
    rate = buf.sample_rate
    if rate < 4 * f_max:
        raise ValueError(f"sample rate {rate} too low for f_max={f_max}")
    window = int(round(1024 * rate / 22050))
    if len(buf) < window:
        raise TooShort(f"need at least {window} samples, got {len(buf)}")
    tau_min = max(2, int(rate / f_max))
    tau_max = int(math.ceil(rate / f_min))
    width = window - tau_max - 1
    if width < tau_max:
        raise ValueError("analysis window too short for f_min")
    hop = max(1, int(round(rate * hop_ms / 1000.0)))
    grid = FrameGrid.for_length(len(buf), window, hop)
    cmnd = _cmnd(np.asarray(grid.frames(buf.samples)), tau_max + 1, width)

    f0 = np.zeros(grid.count)
    for i, c in enumerate(cmnd):
        seg = c[tau_min : tau_max + 1]
        below = np.flatnonzero(seg < threshold)
        if len(below):
            tau = tau_min + int(below[0])
            while tau + 1 <= tau_max and c[tau + 1] < c[tau]:
                tau += 1
        else:
            tau = tau_min + int(np.argmin(seg))
            if c[tau] >= 0.3:
                continue
        if tau <= tau_min or tau >= tau_max:
            # a minimum on the search boundary means the period is out of range
            continue
        period = tau + _parabolic(c[tau - 1], c[tau], c[tau + 1])
        freq = rate / period
        if f_min <= freq <= f_max:
            f0[i] = freq
    return F0Track(f0, f0 > 0, hop / rate)


def utterance_prosody(track: F0Track, min_voiced: int = 10) -> UtteranceProsody:
    voiced = np.asarray(track.voiced, dtype=bool)
    if voiced.sum() < min_voiced:
        raise InsufficientVoicing(f"{int(voiced.sum())} voiced frames, need {min_voiced}")
    st = np.full(len(voiced), np.nan)
    st[voiced] = hz_to_st(np.asarray(track.f0_hz)[voiced])
    vals = st[voiced]
    p10, p90 = np.percentile(vals, [10, 90])
    pairs = voiced[1:] & voiced[:-1]
    if pairs.any():
        slope = float(np.mean(np.abs(np.diff(st)[pairs])) / track.hop_s)
    else:
        slope = 0.0
    return UtteranceProsody(
        median_st=float(np.median(vals)),
        std_st=float(np.std(vals)),
        range_st=float(p90 - p10),
        slope_st_s=slope,
        voiced_fraction=float(voiced.mean()),
    )


def speaker_profile(speaker_id: str, prosodies: Sequence[UtteranceProsody]) -> SpeakerProfile:
    if not prosodies:
        raise InsufficientVoicing(f"no usable clips for speaker {speaker_id!r}")
    mean = np.mean([p.vector() for p in prosodies], axis=0)
    return SpeakerProfile(speaker_id, tuple(float(v) for v in mean), len(prosodies))


# -- cohort search -----------------------------------------------------------------


def zscore(features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    mu = features.mean(axis=0)
    sd = features.std(axis=0)
    out = np.zeros_like(features)
    ok = sd > 1e-12 * np.maximum(1.0, np.abs(mu))
    out[:, ok] = (features[:, ok] - mu[ok]) / sd[ok]
    return out


def distance_matrix(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def subset_diameter(dist: np.ndarray, idx: Sequence[int]) -> float:
    idx = list(idx)
    if len(idx) < 2:
        return 0.0
    return float(dist[np.ix_(idx, idx)].max())


def _exhaustive(dist: np.ndarray, k: int, chunk: int = 50_000) -> tuple[tuple[int, ...], float]:
    n = dist.shape[0]
    pairs = list(itertools.combinations(range(k), 2))
    pa = np.array([p[0] for p in pairs])
    pb = np.array([p[1] for p in pairs])
    best, best_d = None, math.inf
    combos = itertools.combinations(range(n), k)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.intp)
        if block.size == 0:
            break
        diam = dist[block[:, pa], block[:, pb]].max(axis=1)
        j = int(np.argmin(diam))  # argmin returns the first, i.e. lexicographically smallest
        if diam[j] < best_d:
            best, best_d = tuple(int(v) for v in block[j]), float(diam[j])
    return best, best_d


def _greedy(dist: np.ndarray, k: int) -> tuple[tuple[int, ...], float]:
    n = dist.shape[0]
    iu = np.triu_indices(n, 1)
    j = int(np.argmin(dist[iu]))  # row-major order gives the lexicographic tie-break
    chosen = [int(iu[0][j]), int(iu[1][j])]
    diameter = float(dist[chosen[0], chosen[1]])
    while len(chosen) < k:
        rest = [c for c in range(n) if c not in chosen]
        grown = [max(diameter, float(dist[c, chosen].max())) for c in rest]
        m = int(np.argmin(grown))
        chosen.append(rest[m])
        diameter = grown[m]
    return tuple(sorted(chosen)), diameter


def select_cohort(
    profiles: Sequence[SpeakerProfile], k: int = 6, method: Optional[str] = None
) -> CohortSelection:
    """Choose the ``k`` speakers whose z-scored features have the smallest diameter.

    Exhaustive search over all subsets when there are at most 200,000 of
    them, otherwise greedy growth from the closest pair. ``method`` forces
    one or the other.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(profiles) < k:
        raise NotEnoughSpeakers(f"{len(profiles)} candidate speakers, need {k}")
    ordered = sorted(profiles, key=lambda p: p.speaker_id)
    ids = [p.speaker_id for p in ordered]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate speaker ids")
    dist = distance_matrix(zscore(np.array([p.feature_vector for p in ordered])))
    if method is None:
        method = "exhaustive" if math.comb(len(ids), k) <= EXHAUSTIVE_LIMIT else "greedy"
    if method == "exhaustive":
        idx, diameter = _exhaustive(dist, k)
    elif method == "greedy":
        idx, diameter = _greedy(dist, k)
    else:
        raise ValueError(f"unknown method {method!r}")
    return CohortSelection(tuple(ids[i] for i in idx), diameter, method)


def selection_report(profiles: Sequence[SpeakerProfile], selection: CohortSelection) -> dict:
    """JSON-ready summary: features, z-space distance matrix, chosen cohort."""
    ordered = sorted(profiles, key=lambda p: p.speaker_id)
    ids = [p.speaker_id for p in ordered]
    if ordered:
        dist = distance_matrix(zscore(np.array([p.feature_vector for p in ordered])))
    else:
        dist = np.zeros((0, 0))
    return {
        "method": selection.method,
        "cohort": list(selection.speaker_ids),
        "diameter": selection.diameter,
        "features": list(FEATURES),
        "speakers": [
            {
                "speaker_id": p.speaker_id,
                "clip_count": p.clip_count,
                **dict(zip(FEATURES, p.feature_vector)),
            }
            for p in ordered
        ],
        "speaker_order": ids,
        "distance_matrix": [[float(v) for v in row] for row in dist],
    }
