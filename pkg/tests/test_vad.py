import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synth import tone
from curate.audio import AudioBuffer, frame_rms_dbfs
from curate.vad import (
    EmptyAudio,
    TrimMode,
    VadConfig,
    detect_speech_frames,
    speech_threshold,
    trim,
    vad_grid,
)

RATE = 22050
FRAME = int(RATE * 0.03)


def clip(lead, body, tail, rate=RATE):
    return AudioBuffer(np.concatenate([np.zeros(int(lead * rate)), tone(440, body, rate), np.zeros(int(tail * rate))]), rate)


def test_silence_is_never_speech():
    flags = detect_speech_frames(AudioBuffer(np.zeros(RATE), RATE))
    assert not flags.any()


def test_tone_frames_plus_hangover():
    buf = clip(0.5, 1.0, 0.5)
    flags = detect_speech_frames(buf)
    grid = vad_grid(buf, VadConfig())
    lo, hi = int(0.5 * RATE), int(1.5 * RATE)
    # oracle: a frame holds tone iff it overlaps [lo, hi)
    tone_frames = np.array([grid.start(i) < hi and grid.start(i) + FRAME > lo for i in range(grid.count)])
    idx = np.flatnonzero(tone_frames)
    expect = np.zeros(grid.count, bool)
    expect[max(0, idx[0] - 5) : idx[-1] + 6] = True
    assert np.array_equal(flags, expect)


def test_constant_tone_all_speech():
    buf = AudioBuffer(tone(440, 1.0, RATE), RATE)
    dbfs = frame_rms_dbfs(buf, vad_grid(buf, VadConfig()))
    # every frame sits near -20 dBFS: the percentile floor equals the signal,
    # so the absolute -60 dBFS floor is the one that separates speech
    assert np.ptp(dbfs) < 0.5
    assert speech_threshold(dbfs, VadConfig()) == -60.0
    assert detect_speech_frames(buf).all()


def test_trim_endpoints():
    res = trim(clip(0.5, 1.0, 0.7))
    assert abs(res.trimmed.duration - 1.0) <= 2 * 0.03
    assert not res.flagged_short
    assert len(res.segments) == 1


def test_short_and_silent_flagged():
    assert trim(AudioBuffer(tone(440, 0.3, RATE), RATE)).flagged_short
    res = trim(AudioBuffer(np.zeros(2 * RATE), RATE))
    assert res.flagged_short and len(res.trimmed) == 0 and res.segments == ()


def test_empty_input():
    with pytest.raises(EmptyAudio):
        trim(AudioBuffer(np.zeros(0), RATE))


def test_concatenate_mode_drops_long_gap():
    parts = [np.zeros(RATE // 2), tone(440, 0.6, RATE), np.zeros(RATE), tone(440, 0.6, RATE), np.zeros(RATE // 2)]
    buf = AudioBuffer(np.concatenate(parts), RATE)
    ends = trim(buf)
    joined = trim(buf, VadConfig(mode=TrimMode.CONCATENATE))
    assert len(joined.segments) == 2
    assert abs(joined.trimmed.duration - 1.2) <= 4 * 0.03
    assert abs(ends.trimmed.duration - 2.2) <= 2 * 0.03
    short_gap = VadConfig(mode="concatenate", max_gap_ms=1500)
    assert len(trim(buf, short_gap).segments) == 1


def test_config_validation():
    with pytest.raises(ValueError):
        VadConfig(frame_ms=0)
    with pytest.raises(ValueError):
        VadConfig(hangover_frames=-1)
    with pytest.raises(ValueError):
        VadConfig(mode="sideways")


clips = st.tuples(st.floats(0.0, 0.8), st.floats(0.05, 1.5), st.floats(0.0, 0.8), st.floats(-45, -5), st.integers(0, 2**16))


def build(params):
    lead, body, tail, level, seed = params
    rng = np.random.default_rng(seed)
    sig = np.concatenate([np.zeros(int(lead * RATE)), tone(300, body, RATE, level), np.zeros(int(tail * RATE))])
    return AudioBuffer(sig + 1e-3 * rng.standard_normal(len(sig)), RATE)


@settings(max_examples=40, deadline=None)
@given(clips)
def test_trim_properties(params):
    buf = build(params)
    res = trim(buf)
    assert res.trimmed.duration <= buf.duration
    assert res.flagged_short == (res.trimmed.duration < 1.0)
    if res.segments:
        s = res.segments[0]
        assert np.array_equal(res.trimmed.samples, buf.samples[s.start_sample : s.end_sample])
        again = trim(res.trimmed)
        removed = len(res.trimmed) - len(again.trimmed)
        assert removed <= 2 * 5 * FRAME


@settings(max_examples=40, deadline=None)
@given(clips, st.floats(0, 20), st.floats(0, 20))
def test_margin_monotone(params, m1, m2):
    buf = build(params)
    lo, hi = sorted((m1, m2))
    n_lo = detect_speech_frames(buf, VadConfig(margin_db=lo)).sum()
    n_hi = detect_speech_frames(buf, VadConfig(margin_db=hi)).sum()
    assert n_hi <= n_lo
