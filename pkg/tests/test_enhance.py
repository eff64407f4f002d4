import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from synth import tone
from curate.audio import AudioBuffer, FrameGrid
from curate.enhance import (
    EnhanceConfig,
    ShapeMismatch,
    StftConfig,
    denoise,
    estimate_noise_profile,
    spectral_gate,
    stft,
    istft,
)
from curate.quality import estimate_snr

RATE = 22050
CFG = StftConfig()


def white(n, rms, seed=0):
    return rms * np.random.default_rng(seed).standard_normal(n)


def noise_gate_ratio(alpha, seed=0, seconds=4.0):
    x = AudioBuffer(white(int(seconds * RATE), 0.05, seed), RATE)
    spec = stft(x)
    profile = estimate_noise_profile(spec, np.zeros(len(spec), bool))
    y = spectral_gate(x, profile, alpha, 0.1)
    inner = slice(CFG.fft_len, -CFG.fft_len)
    return np.sqrt(np.mean(y.samples[inner] ** 2) / np.mean(x.samples[inner] ** 2))


def rayleigh_gate_ratio(alpha, beta):
    """RMS gain of the gate on complex Gaussian bins, ignoring overlap-add."""
    mu = stats.rayleigh.mean()
    f = lambda r: max(beta, 1 - alpha * mu / r) ** 2 * r * r * stats.rayleigh.pdf(r)
    power, _ = integrate.quad(f, 0, 40, points=[alpha * mu / (1 - beta)], limit=200)
    return np.sqrt(power / stats.rayleigh.moment(2))


def test_roundtrip_interior():
    x = AudioBuffer(white(3 * RATE, 0.3), RATE)
    y = istft(stft(x), CFG, RATE)
    lo, hi = CFG.fft_len, len(x) - CFG.fft_len
    assert np.max(np.abs(y.samples[lo:hi] - x.samples[lo:hi])) < 1e-6


def test_zero_in_zero_out():
    x = AudioBuffer(np.zeros(RATE), RATE)
    assert not istft(stft(x), CFG, RATE).samples.any()
    assert not denoise(x, None, None).samples.any()


def test_sine_energy_in_two_bins():
    x = AudioBuffer(tone(1000.0, 1.0, RATE), RATE)
    power = np.abs(stft(x)) ** 2
    k = 1000.0 * CFG.fft_len / RATE
    two = np.argsort(np.abs(np.arange(CFG.n_bins) - k))[:2]
    assert np.all(power[:, two].sum(axis=1) / power.sum(axis=1) > 0.95)


def test_stft_shape_errors():
    with pytest.raises(ShapeMismatch):
        stft(AudioBuffer(np.zeros(100), RATE))
    with pytest.raises(ShapeMismatch):
        istft(np.zeros((3, 10)), CFG)
    with pytest.raises(ShapeMismatch):
        spectral_gate(AudioBuffer(np.zeros(4096), RATE), np.zeros(10))
    with pytest.raises(ValueError):
        StftConfig(1000, 250)
    with pytest.raises(ValueError):
        StftConfig(1024, 300)


def test_noise_profile_flat_and_zero():
    spec = stft(AudioBuffer(white(5 * RATE, 0.1), RATE))
    prof = estimate_noise_profile(spec, np.zeros(len(spec), bool))[2:-2]
    assert prof.std() / prof.mean() < 0.3
    assert not estimate_noise_profile(np.zeros((4, CFG.n_bins))).any()


def test_noise_profile_ignores_flagged_tone():
    n = 4 * RATE
    sig = white(n, 0.01)
    sig[RATE : 3 * RATE] += tone(1000, 2.0, RATE)
    spec = stft(AudioBuffer(sig, RATE))
    starts = np.arange(len(spec)) * CFG.hop
    flags = (starts + CFG.fft_len > RATE) & (starts < 3 * RATE)
    prof = estimate_noise_profile(spec, flags)
    k = int(round(1000 * CFG.fft_len / RATE))
    assert prof[k] < 2 * np.median(prof)


def test_zero_profile_is_identity():
    x = AudioBuffer(white(RATE, 0.2), RATE)
    y = spectral_gate(x, np.zeros(CFG.n_bins))
    assert len(y) == len(x)
    assert np.max(np.abs(y.samples - x.samples)) < 1e-5


def snr_fixture(seed=3):
    lead, body, tail = 0.5, 2.0, 0.5
    t = tone(220, body, RATE, -20.0)
    noise_rms = np.sqrt(np.mean(t * t)) / 10 ** (5 / 20)
    sig = np.concatenate([np.zeros(int(lead * RATE)), t, np.zeros(int(tail * RATE))])
    x = AudioBuffer(sig + white(len(sig), noise_rms, seed), RATE)
    grid = FrameGrid.for_length(len(x), int(0.03 * RATE))
    starts = np.arange(grid.count) * grid.hop
    flags = (starts + grid.frame_len > lead * RATE) & (starts < (lead + body) * RATE)
    return x, flags, grid


def test_gate_improves_snr_by_six_db():
    x, flags, grid = snr_fixture()
    before = estimate_snr(x, flags, grid)
    y = denoise(x, flags, grid)
    after = estimate_snr(y, flags, grid)
    assert len(y) == len(x)
    assert np.all(np.abs(y.samples) <= 1.0)
    assert after - before >= 6.0


def test_pure_noise_residual_matches_gain_oracle():
    # overlap-add averages independent per-frame gains, so the measured
    # residual must not exceed the per-bin expectation
    for alpha in (1.5, 2.0, 3.0):
        assert noise_gate_ratio(alpha) <= rayleigh_gate_ratio(alpha, 0.1) + 0.01


def test_pure_noise_bound_holds_with_stronger_subtraction():
    assert noise_gate_ratio(2.5) <= 0.1 * 1.5


@pytest.mark.xfail(strict=True, reason="default alpha leaves ~0.17 of the noise rms; see decisions ledger")
def test_pure_noise_bound_at_default_alpha():
    assert noise_gate_ratio(EnhanceConfig().alpha) <= 0.1 * 1.5


@settings(max_examples=15, deadline=None)
@given(st.floats(0.5, 4.0), st.floats(0.5, 4.0), st.integers(0, 1000))
def test_alpha_monotone_on_noise(a1, a2, seed):
    lo, hi = sorted((a1, a2))
    assert noise_gate_ratio(hi, seed, 1.0) <= noise_gate_ratio(lo, seed, 1.0) + 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(1024, 30000), st.integers(0, 1000))
def test_length_preserved_and_bounded(n, seed):
    x = AudioBuffer(np.clip(white(n, 0.5, seed), -1, 1), RATE)
    y = denoise(x, None, None)
    assert len(y) == n
    assert np.all(np.abs(y.samples) <= 1.0)
