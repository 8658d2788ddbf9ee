"""Articulated-target slow-time simulation, velocity spectrograms and
dominant-velocity tracking.

Velocities are radial range rates: positive means the scatterer recedes.
A monostatic echo ``exp(-4j*pi*r(t)/lam)`` of a receding scatterer has a
negative Doppler frequency, so the velocity axis is ``v = -lam*f/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dsp import ComplexSeries, RealSeries, Spectrogram, parabolic_offset, stft


@dataclass(frozen=True)
class Limb:
    mean_offset: float
    swing_amplitude: float
    swing_period: float
    phase: float = 0.0
    reflectivity: complex = 0.3

    def __post_init__(self):
        if not self.swing_period > 0:
            raise ValueError("swing period must be positive")


@dataclass(frozen=True)
class WalkerModel:
    """Torso moving at constant range rate plus sinusoidally swinging limbs.

    Limb ``i`` sits at ``torso(t) + offset + amplitude*sin(2*pi*t/period + phase)``.
    """

    torso_velocity: float
    torso_start_range: float
    limbs: Sequence[Limb] = ()
    torso_reflectivity: complex = 1.0

    def ranges(self, t: np.ndarray) -> np.ndarray:
        """Scatterer ranges, shape ``(1 + n_limbs, len(t))``; row 0 is the torso."""
        t = np.asarray(t, float)
        torso = self.torso_start_range + self.torso_velocity * t
        rows = [torso]
        for limb in self.limbs:
            rows.append(torso + limb.mean_offset
                        + limb.swing_amplitude * np.sin(2 * np.pi * t / limb.swing_period + limb.phase))
        return np.vstack(rows)

    def velocities(self, t: np.ndarray) -> np.ndarray:
        """Analytic range rates, same layout as ``ranges``."""
        t = np.asarray(t, float)
        rows = [np.full(t.shape, float(self.torso_velocity))]
        for limb in self.limbs:
            w = 2 * np.pi / limb.swing_period
            rows.append(self.torso_velocity + limb.swing_amplitude * w * np.cos(w * t + limb.phase))
        return np.vstack(rows)


@dataclass(frozen=True)
class SlowTimeTrace:
    samples: np.ndarray
    t_pri: float
    wavelength: float
    truth: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not (self.t_pri > 0 and self.wavelength > 0):
            raise ValueError("t_pri and wavelength must be positive")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=complex).ravel())

    def __len__(self):
        return self.samples.size

    @property
    def max_velocity(self) -> float:
        """Largest unambiguous range rate, ``lam / (4 * t_pri)``."""
        return self.wavelength / (4 * self.t_pri)


def simulate_walker(model: WalkerModel, wavelength: float, t_pri: float, n_pulses: int,
                    noise_std: float = 0.0, seed: int | None = 0) -> SlowTimeTrace:
    if n_pulses < 2:
        raise ValueError("need at least 2 pulses")
    t = t_pri * np.arange(n_pulses)
    r = model.ranges(t)
    bad = np.nonzero(np.any(r <= 0, axis=1))[0]
    if bad.size:
        name = "torso" if bad[0] == 0 else f"limb {bad[0] - 1}"
        raise ValueError(f"nonpositive range for {name}")
    refl = np.array([model.torso_reflectivity] + [l.reflectivity for l in model.limbs], complex)
    s = refl @ np.exp(-4j * np.pi * r / wavelength)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        s = s + (noise_std / np.sqrt(2)) * (rng.standard_normal(n_pulses)
                                            + 1j * rng.standard_normal(n_pulses))
    return SlowTimeTrace(s, t_pri, wavelength)


def velocity_spectrogram(trace: SlowTimeTrace, window_len: int = 128, hop: int = 16,
                         window: str = "hann") -> Spectrogram:
    """Two-sided STFT with the frequency axis rescaled to range rate (m/s).

    The axis runs from ``-vmax + dv`` to ``+vmax`` with ``vmax = lam/(4*t_pri)``;
    faster targets alias by multiples of ``2*vmax``.
    """
    spec = stft(ComplexSeries(trace.samples, trace.t_pri), window_len, hop, window)
    # reversing the bins turns ascending Doppler into ascending range rate
    values = spec.values[:, ::-1]
    dv = trace.wavelength * spec.freq_step / 2
    f_top = spec.freq_origin + spec.freq_step * (window_len - 1)
    return Spectrogram(values, spec.frame_dt, dv, -trace.wavelength * f_top / 2, spec.t0)


def alias_velocity(v: float, v_max: float) -> float:
    """Apparent range rate on an axis covering ``(-v_max, v_max]``."""
    span = 2 * v_max
    return v - span * np.ceil((v - v_max) / span)


def track_dominant_velocity(spec: Spectrogram, return_confidence: bool = False):
    """Per-frame spectral peak, refined by a three-point parabola.

    Empty frames report the lowest bin with confidence 0. Confidence is the
    share of frame energy in the peak bin and its two neighbours.
    """
    vals = spec.values
    if vals.size == 0:
        raise ValueError("empty spectrogram")
    n_frames, n_bins = vals.shape
    k = np.argmax(vals, axis=1)
    off = np.zeros(n_frames)
    inner = (k > 0) & (k < n_bins - 1)
    rows = np.nonzero(inner)[0]
    off[rows] = parabolic_offset(vals[rows, k[rows] - 1], vals[rows, k[rows]], vals[rows, k[rows] + 1])
    v = spec.freq_origin + spec.freq_step * (k + off)
    power = vals ** 2
    total = power.sum(axis=1)
    lo, hi = np.maximum(k - 1, 0), np.minimum(k + 1, n_bins - 1)
    near = np.array([power[i, lo[i]:hi[i] + 1].sum() for i in range(n_frames)])
    with np.errstate(invalid="ignore", divide="ignore"):
        conf = np.where(total > 0, near / total, 0.0)
    track = RealSeries(v, spec.frame_dt, spec.t0)
    return (track, conf) if return_confidence else track
