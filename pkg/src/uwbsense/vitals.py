"""Physiological pipeline: body displacement and quadrature IQ synthesis,
static clutter removal, phase demodulation, respiration suppression,
interbeat-interval estimation from heartbeat feature points, and HRV
LF/HF band powers.

The displacement model is ``d(t) = d0 + drift(t) + resp(t) + heart(t)`` and
the radar sees ``s(t) = A*exp(2j*k*d(t)) + s_dc`` plus white noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares
from scipy.signal import butter, detrend, periodogram, sosfiltfilt

from .dsp import RealSeries, find_peaks, parabolic_offset, unwrap_phase

IBI_MIN = 0.25
IBI_MAX = 3.0
LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.40)
MIN_HRV_SPAN = 25.0
# s^2; below this an HF power is numerically zero
HRV_POWER_FLOOR = 1e-12


class RecordTooShortError(ValueError):
    pass


class NoPeriodicityError(ValueError):
    pass


# ----------------------------------------------------------------- model

@dataclass(frozen=True)
class Drift:
    knot_times: Sequence[float] = ()
    values: Sequence[float] = ()


@dataclass(frozen=True)
class Respiration:
    period: float = 5.0
    amplitude: float = 2e-3
    inhale_fraction: float = 0.45

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("respiration period must be positive")
        if self.amplitude < 0:
            raise ValueError("respiration amplitude must be >= 0")
        if not 0 < self.inhale_fraction < 1:
            raise ValueError("inhale_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class Heartbeat:
    """Heartbeat displacement: one asymmetric pulse per beat.

    Each pulse is a sharp systolic lobe (rise time ``systole``) followed by
    an opposite, slower diastolic lobe (time scale ``diastole``) weighted by
    ``diastole_ratio``; the pulse is scaled so its largest excursion equals
    ``amplitude``. Beats start at ``first_beat`` and follow ``ibi_sequence``
    cyclically.
    """

    ibi_sequence: Sequence[float] = (1.0,)
    amplitude: float = 0.15e-3
    systole: float = 0.06
    diastole: float = 0.25
    diastole_ratio: float = 0.5
    first_beat: float = 0.3

    def __post_init__(self):
        ibis = np.asarray(self.ibi_sequence, dtype=float)
        if ibis.size == 0 or np.any((ibis < IBI_MIN) | (ibis > IBI_MAX)):
            raise ValueError(f"IBIs must lie in [{IBI_MIN}, {IBI_MAX}] s")
        if self.amplitude < 0:
            raise ValueError("heartbeat amplitude must be >= 0")


@dataclass(frozen=True)
class DisplacementModel:
    d0: float = 0.6
    drift: Drift = field(default_factory=Drift)
    resp: Respiration = field(default_factory=Respiration)
    heart: Heartbeat = field(default_factory=Heartbeat)


@dataclass(frozen=True)
class IQTrace:
    samples: np.ndarray
    fs: float
    k: float
    A: complex = 1.0
    s_dc: complex = 0.0

    def __post_init__(self):
        if not (self.fs > 0 and self.k > 0):
            raise ValueError("fs and k must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex).ravel())

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class IBISeries:
    beat_times: np.ndarray
    quality: np.ndarray

    def __post_init__(self):
        bt = np.asarray(self.beat_times, dtype=float)
        q = np.asarray(self.quality, dtype=float)
        if q.shape != bt.shape:
            raise ValueError("one quality value per beat")
        if bt.size > 1 and np.any(np.diff(bt) <= 0):
            raise ValueError("beat times must be strictly increasing")
        object.__setattr__(self, "beat_times", bt)
        object.__setattr__(self, "quality", q)

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.beat_times)

    def __len__(self):
        return self.beat_times.size


@dataclass(frozen=True)
class HRVReport:
    lf_power: float
    hf_power: float
    ratio: float
    record_span: float

    @property
    def ratio_defined(self) -> bool:
        return bool(np.isfinite(self.ratio))


def wavenumber(fc: float, c: float = 299_792_458.0) -> float:
    return 2 * np.pi * fc / c


# ------------------------------------------------------------- synthesis

def respiration_waveform(t: np.ndarray, resp: Respiration) -> np.ndarray:
    """Asymmetric raised cosine in [-amplitude, amplitude]; inhalation (the
    first ``inhale_fraction`` of each cycle) moves the chest towards the radar."""
    u = np.mod(np.asarray(t, float) / resp.period, 1.0)
    f = resp.inhale_fraction
    w = np.where(u < f, 0.5 * (1 - np.cos(np.pi * u / f)),
                 0.5 * (1 + np.cos(np.pi * (u - f) / (1 - f))))
    return -resp.amplitude * (2 * w - 1)


def _lobe(tau, scale):
    r = np.clip(tau, 0, None) / scale
    return r * r * np.exp(2 * (1 - r))


def heartbeat_pulse(tau: np.ndarray, heart: Heartbeat) -> np.ndarray:
    tau = np.asarray(tau, float)
    grid = np.linspace(0, 4 * heart.diastole + heart.systole, 4001)
    raw = _lobe(grid, heart.systole) - heart.diastole_ratio * _lobe(grid, heart.diastole)
    norm = np.max(np.abs(raw))
    shape = _lobe(tau, heart.systole) - heart.diastole_ratio * _lobe(tau, heart.diastole)
    return heart.amplitude * np.where(tau >= 0, shape, 0.0) / norm


def heartbeat_times(heart: Heartbeat, duration: float) -> np.ndarray:
    """Onset times of all beats starting before ``duration``."""
    ibis = np.asarray(heart.ibi_sequence, float)
    n = int(np.ceil(max(duration - heart.first_beat, 0) / ibis.min())) + 2
    steps = np.resize(ibis, n)
    times = heart.first_beat + np.concatenate(([0.0], np.cumsum(steps[:-1])))
    return times[times < duration]


def synth_displacement(model: DisplacementModel, fs: float, duration: float) -> RealSeries:
    """Sampled ``d(t)`` on ``t = n/fs`` for ``0 <= t < duration``."""
    if not duration >= 1.0 / fs:
        raise ValueError("duration must cover at least one sample")
    n = int(np.floor(duration * fs + 1e-9))
    t = np.arange(n) / fs
    d = np.full(n, float(model.d0))
    if len(model.drift.knot_times) >= 2:
        kt = np.asarray(model.drift.knot_times, float)
        cs = CubicSpline(kt, np.asarray(model.drift.values, float))
        d += cs(np.clip(t, kt[0], kt[-1]))
    elif len(model.drift.values) == 1:
        d += model.drift.values[0]
    if model.resp.amplitude > 0:
        d += respiration_waveform(t, model.resp)
    if model.heart.amplitude > 0:
        reach = 6 * model.heart.diastole
        for tb in heartbeat_times(model.heart, duration):
            lo, hi = np.searchsorted(t, [tb, tb + reach])
            d[lo:hi] += heartbeat_pulse(t[lo:hi] - tb, model.heart)
    return RealSeries(d, 1.0 / fs, 0.0)


def heartbeat_component(model: DisplacementModel, fs: float, duration: float) -> RealSeries:
    """The heartbeat term alone, sampled like ``synth_displacement``."""
    only = DisplacementModel(d0=0.0, resp=Respiration(amplitude=0.0), heart=model.heart)
    return synth_displacement(only, fs, duration)


def synth_iq(d: RealSeries, k: float, A: complex = 1.0, s_dc: complex = 0.0,
             noise_std: float = 0.0, seed: int | None = 0) -> IQTrace:
    """``A*exp(2j*k*d) + s_dc`` plus circular complex noise of total std ``noise_std``."""
    s = A * np.exp(2j * k * d.samples) + s_dc
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        n = d.samples.size
        s = s + (noise_std / np.sqrt(2)) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return IQTrace(s, 1.0 / d.dt, k, A, s_dc)


def noise_std_for_snr(A: complex, snr_db: float) -> float:
    return float(abs(A) * 10 ** (-snr_db / 20))


# ----------------------------------------------------------- clutter / phase

@dataclass(frozen=True)
class CircleFit:
    center: complex
    radius: float
    rms_residual: float


def fit_circle(z: np.ndarray) -> CircleFit:
    """Least-squares circle through points of the IQ plane.

    An algebraic fit on mean-centred data seeds a geometric refinement, so
    the result moves exactly with any constant offset of the input.
    """
    z = np.asarray(z, dtype=complex)
    m = z.mean()
    x, y = (z - m).real, (z - m).imag
    M = np.column_stack([2 * x, 2 * y, np.ones_like(x)])
    (a, b, c0), *_ = np.linalg.lstsq(M, x * x + y * y, rcond=None)
    r0 = np.sqrt(max(c0 + a * a + b * b, 0.0))

    def resid(p):
        return np.hypot(x - p[0], y - p[1]) - p[2]

    sol = least_squares(resid, [a, b, r0], method="lm", xtol=1e-14, ftol=1e-14)
    a, b, r = sol.x
    return CircleFit(complex(a, b) + m, float(abs(r)), float(np.sqrt(np.mean(sol.fun ** 2))))


def remove_static_clutter(iq: IQTrace, mode: str = "mean") -> IQTrace:
    """Move the IQ arc to the origin.

    ``mode="mean"`` subtracts the complex mean (biased when the arc is not a
    full circle); ``mode="circle"`` subtracts the centre of a fitted circle.
    """
    if len(iq) < 16:
        raise ValueError("need at least 16 samples")
    s = iq.samples
    spread = np.sqrt(np.mean(np.abs(s - s.mean()) ** 2))
    if spread <= 1e-12 * max(1.0, abs(s.mean())):
        raise ValueError("no dynamic component")
    if mode == "mean":
        center = s.mean()
    elif mode == "circle":
        center = fit_circle(s).center
    else:
        raise ValueError(f"unknown clutter mode {mode!r}")
    return IQTrace(s - center, iq.fs, iq.k, iq.A, iq.s_dc)


def demodulate_phase(iq: IQTrace) -> RealSeries:
    """Zero-mean displacement ``unwrap(arg s) / (2k)`` in metres."""
    dt = 1.0 / iq.fs
    ph = unwrap_phase(RealSeries(np.angle(iq.samples), dt)).samples
    d = ph / (2 * iq.k)
    return RealSeries(d - d.mean(), dt, 0.0)


def suppress_respiration(d: RealSeries, resp_band_max: float = 0.5, order: int = 4) -> RealSeries:
    """Zero-phase Butterworth high-pass (run forward and backward), DC removed."""
    fs = 1.0 / d.dt
    if fs < 10:
        raise ValueError("sampling rate must be at least 10 Hz")
    sos = butter(order, resp_band_max, btype="highpass", fs=fs, output="sos")
    y = sosfiltfilt(sos, d.samples)
    return RealSeries(y - y.mean(), d.dt, d.t0)


# ------------------------------------------------------------------ IBI

def _bandpass(x, fs, low, high):
    if high < 0.45 * fs:
        x = sosfiltfilt(butter(4, high, btype="lowpass", fs=fs, output="sos"), x)
    if low > 0:
        x = sosfiltfilt(butter(4, low, btype="highpass", fs=fs, output="sos"), x)
    return x


def coarse_period(x: np.ndarray, fs: float, lag_range=(IBI_MIN, IBI_MAX),
                  min_corr: float = 0.2) -> float:
    """Mean beat period from the highest autocorrelation peak in ``lag_range``."""
    x = np.asarray(x, float) - np.mean(x)
    n = x.size
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    F = np.fft.rfft(x, nfft)
    ac = np.fft.irfft(F * np.conj(F), nfft)[:n]
    if ac[0] <= 0:
        raise NoPeriodicityError("no heartbeat band periodicity")
    ac = ac / ac[0]
    lo = max(int(np.floor(lag_range[0] * fs)), 1)
    hi = min(int(np.ceil(lag_range[1] * fs)) + 1, n - 1)
    seg = ac[lo - 1:hi + 1]
    peaks = find_peaks(RealSeries(seg, 1.0))
    peaks = [p for p in peaks if p.value >= min_corr]
    if not peaks:
        raise NoPeriodicityError("no heartbeat band periodicity")
    best = max(peaks, key=lambda p: (p.value, -p.time))
    i = int(round(best.time))
    off = parabolic_offset(seg[i - 1], seg[i], seg[i + 1]) if 0 < i < seg.size - 1 else 0.0
    return (lo - 1 + i + float(off)) / fs


@dataclass
class _AnchorCandidate:
    sign: int
    idx: np.ndarray
    prom: np.ndarray
    norm_prom: np.ndarray
    delay: np.ndarray
    score: float


def _anchor_candidates(x, fs, period, sign, all_ext_times, all_ext_signs):
    amp = np.percentile(x, 95) - np.percentile(x, 5)
    pk = find_peaks(RealSeries(sign * x, 1.0 / fs), min_prominence=0.1 * amp,
                    min_separation=0.6 * period)
    if len(pk) < 3:
        return None
    idx = np.array([int(round(p.time * fs)) for p in pk])
    prom = np.array([p.prominence for p in pk])
    keep = prom >= 0.4 * np.median(prom)
    idx, prom = idx[keep], prom[keep]
    if idx.size < 3:
        return None
    # descriptor consistency: normalized anchor prominence and the delay to
    # the next extremum of the opposite kind, in units of the mean period
    norm_prom = prom / np.median(prom)
    t_anchor = idx / fs
    opp = all_ext_times[all_ext_signs == -sign]
    j = np.searchsorted(opp, t_anchor, side="right")
    has = j < opp.size
    delay = np.where(has, opp[np.minimum(j, opp.size - 1)] - t_anchor, np.nan) / period
    finite = delay[np.isfinite(delay)]
    score = float(np.var(norm_prom) + (np.var(finite) if finite.size > 2 else 1.0))
    return _AnchorCandidate(sign, idx, prom, norm_prom, delay, score)


def _enforce_interval_range(times, quality):
    times, quality = list(times), list(quality)
    changed = True
    while changed and len(times) > 1:
        changed = False
        for i in range(len(times) - 1):
            if times[i + 1] - times[i] < IBI_MIN:
                drop = i if quality[i] < quality[i + 1] else i + 1
                del times[drop], quality[drop]
                changed = True
                break
    times, quality = np.array(times), np.array(quality)
    if times.size < 2:
        return times, quality
    ok = np.diff(times) <= IBI_MAX
    # longest run of consecutive admissible intervals
    best_lo, best_len, lo = 0, 0, 0
    for i, good in enumerate(np.append(ok, False)):
        if not good:
            if i - lo > best_len:
                best_lo, best_len = lo, i - lo
            lo = i + 1
    sl = slice(best_lo, best_lo + best_len + 1)
    return times[sl], quality[sl]


def estimate_ibi(dh: RealSeries, highpass_hz: float = 0.8, lowpass_hz: float = 10.0) -> IBISeries:
    """Interbeat intervals from heartbeat feature points.

    The mean period comes from the autocorrelation. Dominant maxima and
    dominant minima are then both tried as beat anchors; the kind whose
    per-beat descriptor (anchor prominence, delay to the next opposite
    extremum) varies least across beats is kept. Because contraction is
    faster than relaxation, the two kinds behave differently and the
    consistent one marks the same phase of every beat. Anchor times are
    refined with a parabola; quality is a descriptor-match score in [0, 1].
    The input is first band-limited to ``[highpass_hz, lowpass_hz]`` (zero
    phase) to shed respiration harmonics that survive upstream filtering.
    This is an approximation of the topology method, not a reproduction.
    """
    fs = 1.0 / dh.dt
    if dh.samples.size * dh.dt < 5.0:
        raise ValueError("need at least 5 s of data")
    x = _bandpass(dh.samples - dh.samples.mean(), fs, highpass_hz, lowpass_hz)
    period = coarse_period(x, fs)

    amp = np.percentile(x, 95) - np.percentile(x, 5)
    ext_t, ext_s = [], []
    for sign in (1, -1):
        for p in find_peaks(RealSeries(sign * x, dh.dt), min_prominence=0.05 * amp):
            ext_t.append(p.time)
            ext_s.append(sign)
    order = np.argsort(ext_t)
    ext_t, ext_s = np.asarray(ext_t)[order], np.asarray(ext_s)[order]

    cands = [c for c in (_anchor_candidates(x, fs, period, s, ext_t, ext_s) for s in (1, -1))
             if c is not None]
    if not cands:
        raise NoPeriodicityError("no heartbeat band periodicity")
    best = min(cands, key=lambda c: c.score)

    idx = best.idx
    inner = (idx > 0) & (idx < x.size - 1)
    off = np.zeros(idx.size)
    sx = best.sign * x
    off[inner] = parabolic_offset(sx[idx[inner] - 1], sx[idx[inner]], sx[idx[inner] + 1])
    times = dh.t0 + (idx + off) * dh.dt

    med_delay = np.nanmedian(best.delay)
    delay_err = np.where(np.isfinite(best.delay), np.abs(best.delay - med_delay), 1.0)
    quality = np.exp(-np.abs(best.norm_prom - 1.0)) * np.exp(-delay_err / 0.05)
    times, quality = _enforce_interval_range(times, np.clip(quality, 0.0, 1.0))
    return IBISeries(times, quality)


def match_intervals(est: IBISeries, true_beat_times: np.ndarray,
                    tolerance: float = 0.25) -> tuple[np.ndarray, np.ndarray]:
    """Pair estimated and true intervals after removing the constant anchor lag.

    Returns ``(estimated, true)`` intervals for beats whose both ends match a
    true beat within ``tolerance`` seconds.
    """
    tb = np.asarray(true_beat_times, float)
    eb = est.beat_times
    if eb.size < 2 or tb.size < 2:
        return np.empty(0), np.empty(0)
    j = np.clip(np.searchsorted(tb, eb), 1, tb.size - 1)
    nearest = np.where(np.abs(tb[j - 1] - eb) <= np.abs(tb[j] - eb), j - 1, j)
    lag = np.median(eb - tb[nearest])
    shifted = eb - lag
    j = np.clip(np.searchsorted(tb, shifted), 1, tb.size - 1)
    nearest = np.where(np.abs(tb[j - 1] - shifted) <= np.abs(tb[j] - shifted), j - 1, j)
    ok = np.abs(tb[nearest] - shifted) <= tolerance
    pair = ok[:-1] & ok[1:] & (np.diff(nearest) == 1)
    est_iv = np.diff(eb)[pair]
    true_iv = np.diff(tb[nearest])[pair]
    return est_iv, true_iv


def ibi_rmse(est: IBISeries, true_beat_times: np.ndarray) -> float:
    e, t = match_intervals(est, true_beat_times)
    if e.size == 0:
        return float("nan")
    return float(np.sqrt(np.mean((e - t) ** 2)))


# ------------------------------------------------------------------ HRV

def ibi_tachogram(ibi: IBISeries, fs: float = 4.0) -> RealSeries:
    """Intervals placed at the closing beat time, linearly resampled to ``fs``."""
    bt = ibi.beat_times
    t_iv = bt[1:]
    iv = np.diff(bt)
    # piecewise-linear interpolation of the unevenly spaced tachogram
    t_grid = np.arange(0.0, t_iv[-1] - t_iv[0] + 1e-9, 1.0 / fs)
    vals = np.interp(t_grid + t_iv[0], t_iv, iv)
    return RealSeries(vals, 1.0 / fs, float(t_iv[0]))


def hrv_lf_hf(ibi: IBISeries, fs_resample: float = 4.0) -> HRVReport:
    """LF (0.04-0.15 Hz) and HF (0.15-0.4 Hz) power of the interval series (s^2)."""
    if len(ibi) < 11:
        raise ValueError("need at least 10 intervals")
    span = float(ibi.beat_times[-1] - ibi.beat_times[0])
    if span <= MIN_HRV_SPAN:
        raise RecordTooShortError("record too short for LF")
    tach = ibi_tachogram(ibi, fs_resample).samples
    tach = detrend(tach, type="linear")
    f, pxx = periodogram(tach, fs=fs_resample, window="boxcar", detrend=False,
                         scaling="density")
    df = f[1] - f[0]
    lf = float(np.sum(pxx[(f >= LF_BAND[0]) & (f < LF_BAND[1])]) * df)
    hf = float(np.sum(pxx[(f >= HF_BAND[0]) & (f <= HF_BAND[1])]) * df)
    ratio = lf / hf if hf > HRV_POWER_FLOOR else float("nan")
    return HRVReport(lf, hf, ratio, span)
