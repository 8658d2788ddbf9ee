"""Shared numerics: series containers, DFT, short-time analysis, phase
unwrapping, peak picking and linear resampling.

DFT convention used throughout the package: the forward transform sums with
``exp(-2j*pi*k*n/N)`` and carries no scale factor; the inverse carries ``1/N``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import get_window, peak_prominences


@dataclass(frozen=True)
class ComplexSeries:
    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)


@dataclass(frozen=True)
class RealSeries:
    samples: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(samples)):
            raise ValueError("non-finite samples")
        object.__setattr__(self, "samples", samples)

    def __len__(self):
        return self.samples.size

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)


@dataclass(frozen=True)
class Spectrogram:
    """Magnitude grid indexed ``(frame, bin)``.

    Bin ``j`` sits at ``freq_origin + j * freq_step``; frame ``f`` starts at
    ``t0 + f * frame_dt``. The axis unit is Hz unless a caller rescales it
    (``velocity_spectrogram`` stores m/s).
    """

    values: np.ndarray
    frame_dt: float
    freq_step: float
    freq_origin: float
    t0: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("spectrogram values must be 2-D")
        if np.any(values < 0):
            raise ValueError("spectrogram magnitudes must be nonnegative")
        if not (self.frame_dt > 0 and self.freq_step > 0):
            raise ValueError("frame_dt and freq_step must be positive")
        object.__setattr__(self, "values", values)

    @property
    def freqs(self) -> np.ndarray:
        return self.freq_origin + self.freq_step * np.arange(self.values.shape[1])

    @property
    def frame_times(self) -> np.ndarray:
        return self.t0 + self.frame_dt * np.arange(self.values.shape[0])


class Peak(NamedTuple):
    time: float
    value: float
    prominence: float


def dft(series: ComplexSeries, inverse: bool = False) -> ComplexSeries:
    """Discrete Fourier transform of a complex series (numpy FFT backend)."""
    if len(series) == 0:
        raise ValueError("empty series")
    if inverse:
        out = np.fft.ifft(series.samples)
    else:
        out = np.fft.fft(series.samples)
    return ComplexSeries(out, series.dt, series.t0)


def stft(series: ComplexSeries, window_len: int, hop: int,
         window: str = "hann") -> Spectrogram:
    """Two-sided short-time magnitude spectrum.

    Frame ``f`` covers samples ``[f*hop, f*hop + window_len)``. Columns are
    ordered from the most negative frequency upwards (``fftshift`` order), so
    ``sum(values[f]**2) / window_len`` equals the energy of the windowed frame.
    """
    x = series.samples
    if window_len > x.size:
        raise ValueError("window exceeds record")
    if window_len < 1 or hop < 1:
        raise ValueError("window_len and hop must be >= 1")
    taper = get_window(window, window_len, fftbins=True) if window_len > 1 else np.ones(1)
    n_frames = 1 + (x.size - window_len) // hop
    idx = np.arange(window_len)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = x[idx] * taper[None, :]
    spec = np.fft.fftshift(np.fft.fft(frames, axis=1), axes=1)
    fs = 1.0 / series.dt
    return Spectrogram(
        values=np.abs(spec),
        frame_dt=hop * series.dt,
        freq_step=fs / window_len,
        freq_origin=-(window_len // 2) * fs / window_len,
        t0=series.t0,
    )


def unwrap_phase(wrapped: RealSeries) -> RealSeries:
    """Remove 2*pi jumps so successive differences fall in (-pi, pi]."""
    x = wrapped.samples
    if x.size < 2:
        return wrapped
    d = np.diff(x)
    # ceil keeps +pi and maps -pi to +pi
    corrected = d - 2 * np.pi * np.ceil((d - np.pi) / (2 * np.pi))
    out = np.concatenate(([x[0]], x[0] + np.cumsum(corrected)))
    return RealSeries(out, wrapped.dt, wrapped.t0)


def local_maxima(x: np.ndarray) -> np.ndarray:
    """Indices of interior local maxima; a flat top reports its leftmost sample.

    A plateau counts only when the samples on both sides are strictly lower.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 3:
        return np.empty(0, dtype=int)
    # compress runs of equal values, then look for strict maxima between runs
    change = np.flatnonzero(np.diff(x) != 0) + 1
    starts = np.concatenate(([0], change))
    vals = x[starts]
    if vals.size < 3:
        return np.empty(0, dtype=int)
    is_max = (vals[1:-1] > vals[:-2]) & (vals[1:-1] > vals[2:])
    return starts[1:-1][is_max]


def find_peaks(series: RealSeries, min_prominence: float = 0.0,
               min_separation: float = 0.0) -> list[Peak]:
    """Prominent local maxima, thinned so no two are closer than ``min_separation``.

    Candidates below ``min_prominence`` are discarded first. Thinning visits the
    survivors by decreasing value (ties: earlier first) and drops any peak that
    falls within ``min_separation`` seconds of an already kept one.
    """
    if min_separation < 0:
        raise ValueError("min_separation must be >= 0")
    x = series.samples
    idx = local_maxima(x)
    if idx.size == 0:
        return []
    prom = peak_prominences(x, idx)[0]
    keep = prom >= min_prominence
    idx, prom = idx[keep], prom[keep]
    if min_separation > 0 and idx.size > 1:
        gap = min_separation / series.dt
        order = np.lexsort((idx, -x[idx]))
        alive = np.ones(idx.size, dtype=bool)
        for i in order:
            if not alive[i]:
                continue
            close = np.abs(idx - idx[i]) < gap - 1e-9
            close[i] = False
            alive &= ~close
        idx, prom = idx[alive], prom[alive]
    t = series.t0 + series.dt * idx
    return [Peak(float(ti), float(x[i]), float(p)) for ti, i, p in zip(t, idx, prom)]


def resample_linear(series: RealSeries, new_dt: float) -> RealSeries:
    """Linear interpolation onto ``t0 + k*new_dt`` over the original span."""
    if not new_dt > 0:
        raise ValueError("new_dt must be positive")
    if len(series) < 2:
        raise ValueError("cannot interpolate")
    span = (len(series) - 1) * series.dt
    n = int(np.floor(span / new_dt + 1e-9)) + 1
    t_new = np.arange(n) * new_dt
    t_old = np.arange(len(series)) * series.dt
    out = np.interp(t_new, t_old, series.samples)
    return RealSeries(out, new_dt, series.t0)


def parabolic_offset(y_left: np.ndarray, y_mid: np.ndarray, y_right: np.ndarray) -> np.ndarray:
    """Vertex offset (in samples, within [-0.5, 0.5]) of the parabola through
    three equally spaced points."""
    y_left, y_mid, y_right = np.broadcast_arrays(
        np.asarray(y_left, float), np.asarray(y_mid, float), np.asarray(y_right, float))
    denom = y_left - 2.0 * y_mid + y_right
    with np.errstate(divide="ignore", invalid="ignore"):
        off = 0.5 * (y_left - y_right) / denom
    off = np.where(denom < 0, off, 0.0)
    return np.clip(off, -0.5, 0.5)
