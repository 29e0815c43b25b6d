import numpy as np
import pytest
from hypothesis import given, strategies as st

from mclpsep.errors import ConfigError
from mclpsep.stft import ComplexSpectrogram, StftConfig, analyze, synthesize


def test_window_is_squared_cola():
    cfg = StftConfig()
    w2 = cfg.window() ** 2
    acc = np.zeros(cfg.hop)
    for start in range(0, cfg.window_length, cfg.hop):
        acc += w2[start:start + cfg.hop]
    np.testing.assert_allclose(acc, cfg.overlap_gain, rtol=1e-12)


def test_round_trip_random(rng):
    x = rng.standard_normal(16000)
    y = synthesize(analyze(x))
    assert np.linalg.norm(y - x) / np.linalg.norm(x) <= 1e-10


def test_zero_signal():
    spec = analyze(np.zeros(4096))
    assert np.all(spec.data == 0)
    assert np.all(synthesize(spec) == 0)


def test_tone_peaks_at_its_bin():
    cfg = StftConfig()
    t = np.arange(16000) / 16000
    spec = analyze(np.sin(2 * np.pi * 1000 * t), cfg)
    mid = spec.frames // 2
    assert np.argmax(np.abs(spec.data[mid])) == 64


def test_parseval(rng):
    x = rng.standard_normal(8000)
    assert analyze(x).energy() == pytest.approx(np.sum(x ** 2), rel=1e-10)


def test_multichannel_shapes(rng):
    x = rng.standard_normal((3, 5000))
    spec = analyze(x)
    assert spec.data.shape == (3, StftConfig().n_frames(5000), 513)
    np.testing.assert_allclose(synthesize(spec), x, atol=1e-12)


def test_projection_is_idempotent(rng):
    cfg = StftConfig()
    spec = analyze(rng.standard_normal(6000), cfg)
    noisy = spec.with_data(spec.data + 0.1 * (rng.standard_normal(spec.data.shape)
                                              + 1j * rng.standard_normal(spec.data.shape)))
    once = analyze(synthesize(noisy), cfg)
    twice = analyze(synthesize(once), cfg)
    np.testing.assert_allclose(twice.data, once.data, atol=1e-12)


@pytest.mark.parametrize("kw", [dict(hop=300), dict(window_length=1023, hop=341),
                                dict(hop=1024), dict(sample_rate=0)])
def test_bad_configs(kw):
    with pytest.raises(ConfigError):
        StftConfig(**kw)


def test_short_signal_rejected():
    with pytest.raises(ConfigError):
        analyze(np.ones(100))


def test_spectrogram_rejects_wrong_bins_and_nans():
    with pytest.raises(ConfigError):
        ComplexSpectrogram(np.zeros((4, 10)))
    bad = np.zeros((4, 513), dtype=complex)
    bad[0, 0] = np.nan
    with pytest.raises(ConfigError):
        ComplexSpectrogram(bad)


@given(st.integers(min_value=1024, max_value=5000), st.integers(0, 2**31 - 1),
       st.sampled_from([(256, 64), (512, 128), (1024, 256), (512, 256)]))
def test_round_trip_property(length, seed, wh):
    cfg = StftConfig(window_length=wh[0], hop=wh[1])
    x = np.random.default_rng(seed).standard_normal(length)
    np.testing.assert_allclose(synthesize(analyze(x, cfg)), x, atol=1e-11)


@given(st.floats(-1e3, 1e3, allow_nan=False), st.integers(0, 1000))
def test_linearity(a, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal((2, 2048))
    np.testing.assert_allclose(analyze(a * x + y).data, a * analyze(x).data + analyze(y).data,
                               atol=1e-9 * (1 + abs(a)))
