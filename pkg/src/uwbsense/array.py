"""Multichannel combining and adaptive spatial filtering: sample covariance
with diagonal loading, maximum-ratio combining through the principal
eigenvector, the Capon spatial spectrum and DCMP (directionally constrained
minimization of power) weights.

Steering vectors use the far-field narrowband model for a linear array with
element positions ``p`` (metres) along the array axis:
``a(theta) = exp(2j*pi*p*sin(theta)/lam)``, theta measured from broadside.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .dsp import ComplexSeries, RealSeries


class ConvergenceError(RuntimeError):
    pass


class SingularCovarianceError(LinAlgError):
    pass


@dataclass(frozen=True)
class ChannelMatrix:
    snapshots: np.ndarray
    fs: float = 1.0
    positions: np.ndarray | None = None

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.snapshots, dtype=complex))
        if x.shape[0] < 1 or not np.all(np.isfinite(x)):
            raise ValueError("snapshots must be a finite (channels, samples) array")
        object.__setattr__(self, "snapshots", x)

    @property
    def n_channels(self) -> int:
        return self.snapshots.shape[0]


@dataclass(frozen=True)
class CovarianceEstimate:
    R: np.ndarray
    n_samples: int
    loading: float


def estimate_covariance(m: ChannelMatrix, loading_rel: float = 1e-3) -> CovarianceEstimate:
    """``X X^H / T`` plus ``loading_rel * trace/N`` on the diagonal."""
    X = m.snapshots
    n, T = X.shape
    if T < n:
        raise ValueError(f"need at least {n} snapshots, got {T}")
    R = X @ X.conj().T / T
    R = 0.5 * (R + R.conj().T)
    load = float(loading_rel * np.real(np.trace(R)) / n)
    R = R + load * np.eye(n)
    return CovarianceEstimate(R, T, load)


def steering_vector(positions, wavelength: float, theta_deg) -> np.ndarray:
    """Steering vectors, shape ``(n_elements, n_angles)`` (or ``(n_elements,)``)."""
    p = np.asarray(positions, float).ravel()
    th = np.deg2rad(np.asarray(theta_deg, float))
    return np.exp(2j * np.pi * np.multiply.outer(p, np.sin(th)) / wavelength)


def principal_eigenvector(R: np.ndarray, max_iter: int = 200, tol: float = 1e-12):
    """Power iteration; returns ``(eigenvalue, unit eigenvector)``.

    The phase is fixed so the first non-negligible component is real positive.
    """
    R = np.asarray(R, complex)
    col_norms = np.linalg.norm(R, axis=0)
    if not np.any(col_norms > 0):
        raise ConvergenceError("covariance is zero; no principal direction")
    v = R[:, int(np.argmax(col_norms))].copy()
    v /= np.linalg.norm(v)
    lam = np.real(np.vdot(v, R @ v))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w = R @ v
        v = w / np.linalg.norm(w)
        new = np.real(np.vdot(v, R @ v))
        if abs(new - lam) <= tol * abs(new):
            lam = new
            converged = True
            break
        lam = new
    if not converged:
        raise ConvergenceError(f"power iteration did not converge in {it} iterations")
    mags = np.abs(v)
    first = int(np.argmax(mags > 1e-12 * mags.max()))
    v = v * np.exp(-1j * np.angle(v[first]))
    return float(lam), v


def mrc_combine(m: ChannelMatrix, max_iter: int = 200) -> ComplexSeries:
    """Maximum-ratio combining: ``w^H x`` with ``w`` the principal eigenvector
    of the (unloaded) sample covariance."""
    if m.n_channels < 2:
        raise ValueError("need at least 2 channels")
    cov = estimate_covariance(m, loading_rel=0.0)
    _, w = principal_eigenvector(cov.R, max_iter=max_iter)
    return ComplexSeries(w.conj() @ m.snapshots, 1.0 / m.fs)


def mrc_weights(m: ChannelMatrix, max_iter: int = 200) -> np.ndarray:
    return principal_eigenvector(estimate_covariance(m, 0.0).R, max_iter=max_iter)[1]


def _factor(R):
    try:
        return cho_factor(R, lower=True, check_finite=True)
    except LinAlgError as exc:
        raise SingularCovarianceError("increase diagonal loading") from exc


def capon_spectrum(cov: CovarianceEstimate, positions, wavelength: float,
                   angle_grid) -> RealSeries:
    """``1 / (a^H R^-1 a)`` over a uniform angle grid in degrees.

    The returned series uses ``t0`` for the first angle and ``dt`` for the
    grid step, both in degrees.
    """
    angles = np.asarray(angle_grid, float)
    if angles.size < 2 or not np.allclose(np.diff(angles), angles[1] - angles[0]):
        raise ValueError("angle grid must be uniform with at least 2 points")
    fac = _factor(cov.R)
    A = steering_vector(positions, wavelength, angles)
    RiA = cho_solve(fac, A)
    denom = np.real(np.sum(A.conj() * RiA, axis=0))
    if np.any(denom <= 0):
        raise SingularCovarianceError("increase diagonal loading")
    return RealSeries(1.0 / denom, float(angles[1] - angles[0]), float(angles[0]))


def dcmp_weights(cov: CovarianceEstimate, constraint_deg: float, positions,
                 wavelength: float) -> np.ndarray:
    """``R^-1 a / (a^H R^-1 a)``: unit gain towards ``constraint_deg``, minimum output power."""
    fac = _factor(cov.R)
    a = steering_vector(positions, wavelength, constraint_deg)
    Ria = cho_solve(fac, a)
    q = np.vdot(Ria, a)
    if not abs(q) > 0:
        raise SingularCovarianceError("increase diagonal loading")
    return Ria / np.conj(q)


def array_response(w: np.ndarray, positions, wavelength: float, theta_deg) -> np.ndarray:
    """Complex beam response ``w^H a(theta)``."""
    return np.conj(w) @ steering_vector(positions, wavelength, theta_deg)


def simulate_snapshots(positions, wavelength: float, angles_deg, powers, noise_std: float,
                       n_snapshots: int, seed: int | None = 0, fs: float = 1.0) -> ChannelMatrix:
    """Uncorrelated far-field circular Gaussian sources plus white noise."""
    rng = np.random.default_rng(seed)
    p = np.asarray(positions, float)
    A = steering_vector(p, wavelength, np.atleast_1d(angles_deg))
    amp = np.sqrt(np.asarray(powers, float) / 2)[:, None]
    S = amp * (rng.standard_normal((A.shape[1], n_snapshots))
               + 1j * rng.standard_normal((A.shape[1], n_snapshots)))
    N = (noise_std / np.sqrt(2)) * (rng.standard_normal((p.size, n_snapshots))
                                    + 1j * rng.standard_normal((p.size, n_snapshots)))
    return ChannelMatrix(A @ S + N, fs, p)
