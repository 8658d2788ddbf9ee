"""Inverse models: Stolt (F-K) migration, a brute-force diffraction stack,
quasi-wavefront extraction, smoothed wavefront slopes, the inverse boundary
scattering transform and correlation decoding of cavity-coded mixtures.

F-K migration and the diffraction stack use the exploding-reflector
convention: the monostatic round trip is handled by an effective propagation
speed ``c/2``, so ``omega = (c/2) * sqrt(kx**2 + ky**2 + kz**2)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import correlate, fftconvolve, peak_prominences

from .dsp import ComplexSeries, parabolic_offset
from .scene import C0, ApertureGrid, EchoCube, PortCodeBook, QuasiWavefront


class UndersampledApertureWarning(UserWarning):
    pass


@dataclass(frozen=True)
class VolumeGrid:
    nx: int
    ny: int
    nz: int
    dx: float
    dy: float
    dz: float
    x0: float = 0.0
    y0: float = 0.0
    z0: float = 0.0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 1:
            raise ValueError("volume needs at least one voxel per axis")
        if not (self.dx > 0 and self.dy > 0 and self.dz > 0):
            raise ValueError("voxel spacings must be positive")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.nx, self.ny, self.nz

    @property
    def xs(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self):
        return self.y0 + self.dy * np.arange(self.ny)

    @property
    def zs(self):
        return self.z0 + self.dz * np.arange(self.nz)

    def position(self, index) -> np.ndarray:
        i, j, k = index
        return np.array([self.x0 + i * self.dx, self.y0 + j * self.dy, self.z0 + k * self.dz])

    def sub(self, center_index, half_width: int) -> "VolumeGrid":
        """Box of ``2*half_width + 1`` voxels per axis around an index, clipped."""
        lo = [max(0, int(c) - half_width) for c in center_index]
        hi = [min(n, int(c) + half_width + 1) for c, n in zip(center_index, self.shape)]
        return VolumeGrid(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], self.dx, self.dy, self.dz,
                          self.x0 + lo[0] * self.dx, self.y0 + lo[1] * self.dy,
                          self.z0 + lo[2] * self.dz)


@dataclass(frozen=True)
class VolumeImage:
    values: np.ndarray
    grid: VolumeGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError("volume values do not match the grid")
        if np.any(v < 0):
            raise ValueError("volume magnitudes must be nonnegative")
        object.__setattr__(self, "values", v)

    def argmax(self) -> tuple[int, int, int]:
        return tuple(int(i) for i in np.unravel_index(np.argmax(self.values), self.values.shape))

    def argmax_position(self) -> np.ndarray:
        return self.grid.position(self.argmax())


@dataclass(frozen=True)
class GradientField:
    dZdX: np.ndarray
    dZdY: np.ndarray
    mask: np.ndarray


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    confidence: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        conf = np.asarray(self.confidence, dtype=float).ravel()
        if conf.size != p.shape[0]:
            raise ValueError("one confidence value per point")
        if np.any(p[:, 2] < 0):
            raise ValueError("points must have z >= 0")
        if np.any((conf < 0) | (conf > 1)):
            raise ValueError("confidence must lie in [0, 1]")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "confidence", conf)

    def __len__(self):
        return self.points.shape[0]


def image_grid(cube: EchoCube, c: float = C0) -> VolumeGrid:
    """Voxel grid produced by ``fk_migrate`` for a cube."""
    ap, pulse = cube.aperture, cube.pulse
    return VolumeGrid(ap.nx, ap.ny, pulse.nt, ap.dx, ap.dy, c * pulse.dt / 2, ap.x0, ap.y0, 0.0)


# ------------------------------------------------------------------ F-K

def fk_migrate(cube: EchoCube, c: float = C0) -> VolumeImage:
    """Stolt migration of a complex-baseband monostatic echo cube.

    The 3-D spectrum over (x, y, t) is resampled along frequency onto a
    uniform vertical-wavenumber axis by linear interpolation, weighted by the
    change-of-variables Jacobian ``v*kz/|k|`` (``v = c/2``), and inverse
    transformed. Spectral samples outside the recorded band, including the
    evanescent region, are zeroed. The image spans ``z = 0 .. c*nt*dt/2``.
    """
    data = cube.data
    ap, pulse = cube.aperture, cube.pulse
    nx, ny, nt = data.shape
    if nt < 2:
        raise ValueError("need at least two fast-time samples")
    if not np.all(np.isfinite(data)):
        raise ValueError("echo cube contains non-finite samples")
    v = c / 2.0
    lam_min = c / (pulse.fc + pulse.bandwidth / 2)
    if max(ap.dx, ap.dy) > lam_min / 2:
        warnings.warn(f"aperture spacing exceeds lambda_min/2 = {lam_min / 2:.3g} m; "
                      "image will contain spatial aliases", UndersampledApertureWarning, stacklevel=2)

    spec = np.fft.fftshift(np.fft.fftn(data), axes=2)
    df = 1.0 / (nt * pulse.dt)
    dz = v * pulse.dt
    kx = 2 * np.pi * np.fft.fftfreq(nx, ap.dx)
    ky = 2 * np.pi * np.fft.fftfreq(ny, ap.dy)
    kz = 2 * np.pi * pulse.fc / v + 2 * np.pi * np.fft.fftfreq(nt, dz)
    kperp2 = (kx[:, None] ** 2 + ky[None, :] ** 2)[..., None]
    kmag = np.sqrt(kperp2 + kz[None, None, :] ** 2)
    f_base = v * kmag / (2 * np.pi) - pulse.fc
    u = f_base / df + nt // 2
    valid = (u >= 0) & (u <= nt - 1) & (kz > 0)[None, None, :]
    u = np.where(valid, u, 0.0)
    i0 = np.minimum(np.floor(u).astype(np.int64), nt - 2)
    frac = u - i0
    lo = np.take_along_axis(spec, i0, axis=2)
    hi = np.take_along_axis(spec, i0 + 1, axis=2)
    jac = np.where(valid, v * kz[None, None, :] / kmag, 0.0)
    remapped = ((1.0 - frac) * lo + frac * hi) * jac
    img = np.abs(np.fft.ifftn(remapped))
    return VolumeImage(img, image_grid(cube, c))


# ---------------------------------------------------------- diffraction stack

def diffraction_stack(cube: EchoCube, grid: VolumeGrid | None = None, c: float = C0,
                      chunk: int = 256) -> VolumeImage:
    """Time-domain delay-and-sum image; the brute-force oracle for F-K.

    Each voxel is ``|sum_e s_e(2R/c) * exp(+2j*pi*fc*2R/c)|`` with linear
    interpolation along fast time. Cost is O(voxels * elements).
    """
    grid = image_grid(cube, c) if grid is None else grid
    ap, pulse = cube.aperture, cube.pulse
    EX, EY = ap.mesh()
    ex, ey = EX.ravel(), EY.ravel()
    traces = cube.data.reshape(-1, pulse.nt)
    n_el = traces.shape[0]
    flat = traces.ravel()
    base = (np.arange(n_el) * pulse.nt)[None, :]
    VX, VY, VZ = np.meshgrid(grid.xs, grid.ys, grid.zs, indexing="ij")
    vx, vy, vz = VX.ravel(), VY.ravel(), VZ.ravel()
    out = np.empty(vx.size)
    for s in range(0, vx.size, chunk):
        sl = slice(s, s + chunk)
        R = np.sqrt((vx[sl, None] - ex[None, :]) ** 2 + (vy[sl, None] - ey[None, :]) ** 2
                    + vz[sl, None] ** 2)
        tau = 2.0 * R / c
        u = tau / pulse.dt
        inside = u <= pulse.nt - 1
        i0 = np.minimum(np.floor(u).astype(np.int64), pulse.nt - 2)
        frac = u - i0
        samp = (1.0 - frac) * flat[base + i0] + frac * flat[base + i0 + 1]
        samp = np.where(inside, samp, 0.0)
        out[sl] = np.abs(np.sum(samp * np.exp(2j * np.pi * pulse.fc * tau), axis=1))
    return VolumeImage(out.reshape(grid.shape), grid)


# ----------------------------------------------------------- wavefront (SEABED)

def matched_envelope(cube: EchoCube) -> np.ndarray:
    """|echo correlated with the pulse envelope| for every element."""
    pulse = cube.pulse
    half = int(np.ceil(pulse.support / pulse.dt))
    kernel = pulse.envelope_at(pulse.dt * np.arange(-half, half + 1))
    return np.abs(fftconvolve(cube.data, kernel[None, None, :], mode="same", axes=2))


def extract_quasi_wavefront(cube: EchoCube, threshold_rel: float = 0.3,
                            c: float = C0) -> QuasiWavefront:
    """First-arrival propagation distance ``Z = c*tau/2`` per element.

    ``tau`` is the earliest matched-filter peak whose prominence reaches
    ``threshold_rel`` times the global envelope maximum, refined by a
    three-point parabola. Elements without such a peak are left unmasked.
    """
    if not 0 < threshold_rel < 1:
        raise ValueError("threshold_rel must lie in (0, 1)")
    ap, pulse = cube.aperture, cube.pulse
    env = matched_envelope(cube).reshape(-1, pulse.nt)
    n_el, nt = env.shape
    gmax = float(env.max()) if env.size else 0.0
    mask = np.zeros(n_el, dtype=bool)
    tau = np.zeros(n_el)
    if gmax > 0:
        thr = threshold_rel * gmax
        left, mid, right = env[:, :-2], env[:, 1:-1], env[:, 2:]
        # strict rise on the left, non-strict fall on the right: leftmost plateau sample
        cand = (mid > left) & (mid >= right) & (mid >= thr)
        rows, cols = np.nonzero(cand)
        cols = cols + 1
        if rows.size:
            # one separator column per row stops prominence searches at row ends
            padded = np.concatenate([env, np.full((n_el, 1), np.inf)], axis=1).ravel()
            prom = peak_prominences(padded, rows * (nt + 1) + cols)[0]
            ok = prom >= thr
            rows, cols = rows[ok], cols[ok]
            first_rows, first = np.unique(rows, return_index=True)
            cols = cols[first]
            off = parabolic_offset(env[first_rows, cols - 1], env[first_rows, cols],
                                   env[first_rows, np.minimum(cols + 1, nt - 1)])
            tau[first_rows] = (cols + off) * pulse.dt
            mask[first_rows] = True
    Z = c * tau / 2.0
    mask &= Z > 0
    return QuasiWavefront(Z.reshape(ap.nx, ap.ny), mask.reshape(ap.nx, ap.ny), ap)


def _axis_differences(Z, mask, step, axis):
    Zm = np.moveaxis(Z, axis, 0)
    Mm = np.moveaxis(mask, axis, 0)
    n = Zm.shape[0]
    g = np.zeros_like(Zm)
    ok = np.zeros_like(Mm)
    has_prev = np.zeros_like(Mm)
    has_next = np.zeros_like(Mm)
    has_prev[1:] = Mm[:-1] & Mm[1:]
    has_next[:-1] = Mm[1:] & Mm[:-1]
    both = has_prev & has_next
    if n >= 3:
        g[1:-1] = np.where(both[1:-1], (Zm[2:] - Zm[:-2]) / (2 * step), 0.0)
    fwd = has_next & ~both
    g[:-1] = np.where(fwd[:-1], (Zm[1:] - Zm[:-1]) / step, g[:-1])
    bwd = has_prev & ~both & ~has_next
    g[1:] = np.where(bwd[1:], (Zm[1:] - Zm[:-1]) / step, g[1:])
    ok = Mm & (has_prev | has_next)
    return np.moveaxis(g, 0, axis), np.moveaxis(ok, 0, axis)


def wavefront_gradients(wf: QuasiWavefront) -> GradientField:
    """Raw slopes: central differences, one-sided at borders and mask edges.

    Samples without a masked neighbour along an axis lose their mask.
    """
    gx, okx = _axis_differences(wf.Z, wf.mask, wf.grid.dx, 0)
    gy, oky = _axis_differences(wf.Z, wf.mask, wf.grid.dy, 1)
    m = wf.mask & okx & oky
    return GradientField(np.where(m, gx, 0.0), np.where(m, gy, 0.0), m)


def _shift(a, di, dj, fill):
    out = np.full_like(a, fill)
    n0, n1 = a.shape
    src = a[max(0, di):n0 + min(0, di), max(0, dj):n1 + min(0, dj)]
    out[max(0, -di):n0 + min(0, -di), max(0, -dj):n1 + min(0, -dj)] = src
    return out


def rpm_smooth_gradients(wf: QuasiWavefront, sigma_xy: float, sigma_z: float,
                         radius: int | None = None) -> GradientField:
    """Wavefront slopes re-estimated as weighted neighbourhood averages.

    Each raw slope is replaced by the average of raw slopes within
    ``radius`` cells, weighted by ``exp(-d_xy**2/2/sigma_xy**2)`` times
    ``exp(-dZ**2/2/sigma_z**2)``, so neighbours on another sheet of the
    wavefront hardly contribute. The result is clamped to unit norm.
    This Gaussian kernel is a stand-in for range-point-migration weighting.
    """
    if not (sigma_xy > 0 and sigma_z > 0):
        raise ValueError("sigma_xy and sigma_z must be positive")
    raw = wavefront_gradients(wf)
    g = wf.grid
    if radius is None:
        radius = int(np.ceil(3 * sigma_xy / min(g.dx, g.dy)))
    Z, m = wf.Z, raw.mask
    num_x = np.zeros_like(Z)
    num_y = np.zeros_like(Z)
    den = np.zeros_like(Z)
    for di in range(-radius, radius + 1):
        for dj in range(-radius, radius + 1):
            d2 = (di * g.dx) ** 2 + (dj * g.dy) ** 2
            w_xy = np.exp(-d2 / (2 * sigma_xy ** 2))
            if w_xy < 1e-12:
                continue
            Zn = _shift(Z, di, dj, 0.0)
            mn = _shift(m, di, dj, False)
            w = np.where(mn, w_xy * np.exp(-((Zn - Z) ** 2) / (2 * sigma_z ** 2)), 0.0)
            num_x += w * _shift(raw.dZdX, di, dj, 0.0)
            num_y += w * _shift(raw.dZdY, di, dj, 0.0)
            den += w
    with np.errstate(invalid="ignore", divide="ignore"):
        gx = np.where(m, num_x / den, 0.0)
        gy = np.where(m, num_y / den, 0.0)
    norm = np.hypot(gx, gy)
    scale = np.where(norm > 1.0, 1.0 / np.maximum(norm, 1e-300), 1.0)
    return GradientField(gx * scale, gy * scale, m)


def ibst(wf: QuasiWavefront, gradients) -> PointCloud:
    """Boundary points from a wavefront and its slopes.

    ``x = X - Z*Zx``, ``y = Y - Z*Zy``, ``z = Z*sqrt(1 - Zx**2 - Zy**2)``.
    Samples whose radicand is negative are dropped and counted; confidence is
    the radicand clamped to [0, 1]. ``gradients`` is a ``GradientField`` or a
    ``(dZdX, dZdY)`` pair.
    """
    if isinstance(gradients, GradientField):
        gx, gy, gmask = gradients.dZdX, gradients.dZdY, gradients.mask
    else:
        gx, gy = (np.asarray(a, dtype=float) for a in gradients)
        gmask = np.isfinite(gx) & np.isfinite(gy)
    m = wf.mask & gmask
    X, Y = wf.grid.mesh()
    Z = wf.Z[m]
    zx, zy = gx[m], gy[m]
    rad = 1.0 - zx ** 2 - zy ** 2
    keep = rad >= 0
    pts = np.column_stack([X[m] - Z * zx, Y[m] - Z * zy, Z * np.sqrt(np.clip(rad, 0, None))])
    return PointCloud(pts[keep], np.clip(rad[keep], 0.0, 1.0), int(np.count_nonzero(~keep)))


def seabed(cube: EchoCube, threshold_rel: float = 0.3, sigma_xy: float | None = None,
           sigma_z: float | None = None, c: float = C0):
    """Extract, smooth and invert: returns ``(point_cloud, wavefront)``."""
    wf = extract_quasi_wavefront(cube, threshold_rel, c)
    g = cube.aperture
    sigma_xy = 1.0 * max(g.dx, g.dy) if sigma_xy is None else sigma_xy
    sigma_z = c / cube.pulse.bandwidth if sigma_z is None else sigma_z
    grads = rpm_smooth_gradients(wf, sigma_xy, sigma_z)
    return ibst(wf, grads), wf


# ---------------------------------------------------------------- cavity MIMO

def cavity_decode(mixture: ComplexSeries, book: PortCodeBook) -> list[ComplexSeries]:
    """Per-port-pair channel estimates by correlation with each response.

    Output ``i`` has length ``len(mixture) - L + 1`` (the original channel
    support) and is divided by the energy of response ``i``.
    """
    L = book.length
    if len(mixture) < L:
        raise ValueError(f"mixture shorter than code length {L}")
    out = []
    for code in book.responses:
        est = correlate(mixture.samples, code, mode="valid") / np.dot(code, code)
        out.append(ComplexSeries(est, mixture.dt, mixture.t0))
    return out
