import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from uwbsense.dsp import (ComplexSeries, RealSeries, dft, find_peaks, local_maxima,
                          parabolic_offset, resample_linear, stft, unwrap_phase)


def direct_dft(x, sign=-1):
    n = np.arange(len(x))
    return np.exp(sign * 2j * np.pi * np.outer(n, n) / len(x)) @ x


def brute_prominence(x, i):
    # lowest valley crossed before reaching something higher, on each side
    left = x[:i + 1][::-1]
    right = x[i:]
    mins = []
    for side in (left, right):
        higher = np.nonzero(side > x[i])[0]
        stop = higher[0] if higher.size else side.size
        mins.append(side[:stop].min())
    return x[i] - max(mins)


finite = st.floats(-1e3, 1e3, allow_nan=False)


# ---------------------------------------------------------------- dft

def test_dft_matches_direct_sum():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(37) + 1j * rng.standard_normal(37)
    X = dft(ComplexSeries(x, 1e-3)).samples
    np.testing.assert_allclose(X, direct_dft(x), atol=1e-10)


def test_inverse_carries_one_over_n():
    x = np.zeros(8, complex)
    x[0] = 8.0
    np.testing.assert_allclose(dft(ComplexSeries(x, 1.0), inverse=True).samples, np.ones(8))


def test_dft_of_impulse_and_tone():
    x = np.zeros(16, complex)
    x[0] = 1
    np.testing.assert_allclose(dft(ComplexSeries(x, 1.0)).samples, np.ones(16))
    tone = np.exp(2j * np.pi * 3 * np.arange(16) / 16)
    X = dft(ComplexSeries(tone, 1.0)).samples
    assert np.argmax(abs(X)) == 3 and abs(X[3]) == pytest.approx(16)


def test_dft_empty_rejected():
    with pytest.raises(ValueError, match="empty series"):
        dft(ComplexSeries(np.zeros(0), 1.0))


@settings(max_examples=50, deadline=None)
@given(arrays(np.complex128, st.integers(1, 64),
              elements=st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)))
def test_dft_round_trip_and_parseval(x):
    s = ComplexSeries(x, 0.5)
    X = dft(s).samples
    back = dft(ComplexSeries(X, 0.5), inverse=True).samples
    np.testing.assert_allclose(back, x, atol=1e-9 * (1 + abs(x).max()))
    assert np.sum(abs(X) ** 2) / x.size == pytest.approx(np.sum(abs(x) ** 2), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- stft

def test_stft_tone_lands_on_its_bin():
    fs, n = 1000.0, 64
    f = 125.0
    x = np.exp(2j * np.pi * f * np.arange(1024) / fs)
    spec = stft(ComplexSeries(x, 1 / fs), n, 16)
    peak = spec.freqs[np.argmax(spec.values, axis=1)]
    assert np.all(peak == pytest.approx(f))
    assert spec.freq_origin == pytest.approx(-fs / 2)
    assert spec.frame_dt == pytest.approx(16 / fs)


def test_stft_frame_count_and_window_check():
    x = ComplexSeries(np.ones(100), 1.0)
    assert stft(x, 10, 5).values.shape == (19, 10)
    with pytest.raises(ValueError, match="window exceeds record"):
        stft(x, 101, 1)


@settings(max_examples=40, deadline=None)
@given(arrays(np.complex128, st.integers(8, 80),
              elements=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False)),
       st.integers(1, 8), st.integers(1, 5))
def test_stft_frame_energy(x, n, hop):
    spec = stft(ComplexSeries(x, 1.0), n, hop, window="boxcar")
    for f in range(spec.values.shape[0]):
        frame = x[f * hop:f * hop + n]
        assert np.sum(spec.values[f] ** 2) / n == pytest.approx(np.sum(abs(frame) ** 2), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------- unwrap

@settings(max_examples=80, deadline=None)
@given(arrays(float, st.integers(2, 200), elements=st.floats(-3.0, 3.0)))
def test_unwrap_recovers_slow_phase(steps):
    true = np.cumsum(steps)
    wrapped = np.angle(np.exp(1j * true))
    out = unwrap_phase(RealSeries(wrapped, 1.0)).samples
    d = np.diff(out)
    assert np.all(d > -np.pi - 1e-9) and np.all(d <= np.pi + 1e-9)
    # multiples of 2*pi away from the original phase
    k = (out - wrapped) / (2 * np.pi)
    np.testing.assert_allclose(k, np.round(k), atol=1e-6)
    np.testing.assert_allclose(out - out[0], true - true[0], atol=1e-6)


def test_unwrap_pi_step_is_kept_positive():
    out = unwrap_phase(RealSeries(np.array([0.0, np.pi, 0.0]), 1.0)).samples
    np.testing.assert_allclose(out, [0.0, np.pi, 2 * np.pi])


# ---------------------------------------------------------------- peaks

def test_local_maxima_plateau_leftmost_and_edges():
    x = np.array([3, 1, 2, 2, 2, 1, 5, 5])
    assert list(local_maxima(x)) == [2]
    assert local_maxima(np.array([1.0, 1.0, 1.0])).size == 0


@settings(max_examples=80, deadline=None)
@given(arrays(float, st.integers(3, 60), elements=st.integers(-5, 5).map(float)))
def test_prominence_matches_brute_force(x):
    peaks = find_peaks(RealSeries(x, 1.0))
    idx = local_maxima(x)
    assert [p.time for p in peaks] == [float(i) for i in idx]
    for p, i in zip(peaks, idx):
        assert p.prominence == pytest.approx(brute_prominence(x, i))


@settings(max_examples=60, deadline=None)
@given(arrays(float, st.integers(3, 80), elements=finite), st.floats(0, 10), st.floats(0, 200))
def test_find_peaks_respects_thresholds(x, min_prom, sep):
    peaks = find_peaks(RealSeries(x, 0.5), min_prom, sep)
    assert all(p.prominence >= min_prom for p in peaks)
    times = [p.time for p in peaks]
    assert times == sorted(times)
    if sep > 0:
        assert all(b - a >= sep - 1e-6 for a, b in zip(times, times[1:]))


def test_find_peaks_thinning_prefers_taller():
    x = np.array([0, 1, 0, 3, 0, 2, 0, 0, 1, 0], float)
    peaks = find_peaks(RealSeries(x, 1.0), min_separation=2.5)
    assert [p.time for p in peaks] == [3.0, 8.0]


def test_find_peaks_negative_separation():
    with pytest.raises(ValueError):
        find_peaks(RealSeries(np.zeros(5), 1.0), min_separation=-1)


# ---------------------------------------------------------------- resample

def test_resample_is_exact_on_lines():
    s = RealSeries(2.0 + 0.5 * np.arange(11), 0.1, 4.0)
    r = resample_linear(s, 0.03)
    np.testing.assert_allclose(r.samples, 2.0 + 0.5 * (np.arange(len(r)) * 0.03) / 0.1)
    assert r.t0 == 4.0 and (len(r) - 1) * 0.03 <= 1.0 + 1e-12


def test_resample_needs_two_points():
    with pytest.raises(ValueError, match="cannot interpolate"):
        resample_linear(RealSeries(np.ones(1), 1.0), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.49, 0.49), st.floats(0.1, 10), st.floats(-5, 5))
def test_parabolic_offset_recovers_vertex(v, a, c):
    y = -a * (np.array([-1.0, 0.0, 1.0]) - v) ** 2 + c
    assert float(parabolic_offset(*y)) == pytest.approx(v, abs=1e-9)


def test_series_validation():
    with pytest.raises(ValueError):
        RealSeries(np.ones(3), 0.0)
    with pytest.raises(ValueError):
        ComplexSeries(np.array([1, np.nan]), 1.0)
