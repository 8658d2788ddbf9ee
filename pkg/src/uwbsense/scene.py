"""Forward models: quasi-wavefronts from target boundaries, monostatic echo
cubes on a planar aperture, and cavity-coded MIMO mixtures.

Coordinates: the aperture lies in the plane z = 0, targets sit at z > 0.
Every 2-D grid is indexed ``[ix, iy]`` and every echo cube ``[ix, iy, it]``.
A quasi-wavefront ``Z(X, Y)`` is the one-way propagation distance of the
first boundary echo seen by the element at ``(X, Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .dsp import ComplexSeries

C0 = 299_792_458.0

# cap on the number of surface samples drawn for one sampled patch
_MAX_SURFACE_SAMPLES = 6_000_000


@dataclass(frozen=True)
class ApertureGrid:
    nx: int
    ny: int
    dx: float
    dy: float
    x0: float = 0.0
    y0: float = 0.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("aperture needs at least 2x2 elements")
        if not (self.dx > 0 and self.dy > 0):
            raise ValueError("element spacing must be positive")

    @classmethod
    def centered(cls, nx: int, ny: int, dx: float, dy: float | None = None) -> "ApertureGrid":
        dy = dx if dy is None else dy
        return cls(nx, ny, dx, dy, -(nx - 1) * dx / 2, -(ny - 1) * dy / 2)

    @property
    def xs(self) -> np.ndarray:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def ys(self) -> np.ndarray:
        return self.y0 + self.dy * np.arange(self.ny)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xs, self.ys, indexing="ij")


@dataclass(frozen=True)
class PulseSpec:
    """Complex-baseband pulse description.

    ``envelope`` is ``"raised_cosine"`` (full width ``2/bandwidth``) or
    ``"gaussian"`` (same half-power width ``1/bandwidth``).
    """

    fc: float
    bandwidth: float
    dt: float
    nt: int
    envelope: str = "raised_cosine"

    def __post_init__(self):
        if not 0 < self.bandwidth < 2 * self.fc:
            raise ValueError("need 0 < bandwidth < 2*fc")
        if not 0 < self.dt < 1.0 / self.bandwidth:
            raise ValueError("baseband sampling needs dt < 1/bandwidth")
        if self.nt < 2:
            raise ValueError("nt must be >= 2")
        if self.envelope not in ("raised_cosine", "gaussian"):
            raise ValueError(f"unknown envelope {self.envelope!r}")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.nt)

    @property
    def support(self) -> float:
        """Half-width (s) beyond which the envelope is treated as zero."""
        if self.envelope == "raised_cosine":
            return 1.0 / self.bandwidth
        return 3.0 / self.bandwidth

    def envelope_at(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        b = self.bandwidth
        if self.envelope == "raised_cosine":
            return np.where(np.abs(t) <= 1.0 / b, 0.5 * (1.0 + np.cos(np.pi * b * t)), 0.0)
        sigma = 1.0 / (b * 2.0 * np.sqrt(2.0 * np.log(2.0)))
        return np.exp(-0.5 * (t / sigma) ** 2)


@dataclass(frozen=True)
class Plane:
    z0: float
    reflectivity: complex = 1.0


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    reflectivity: complex = 1.0


@dataclass(frozen=True)
class Ellipsoid:
    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]
    reflectivity: complex = 1.0


@dataclass(frozen=True)
class HeightMap:
    """Surface ``z(x, y)`` tabulated on a rectilinear grid (``z[ix, iy]``)."""

    xs: np.ndarray
    ys: np.ndarray
    z: np.ndarray
    reflectivity: complex = 1.0

    def __post_init__(self):
        xs, ys = np.asarray(self.xs, float), np.asarray(self.ys, float)
        z = np.asarray(self.z, float)
        if z.shape != (xs.size, ys.size):
            raise ValueError("height map shape must be (len(xs), len(ys))")
        if xs.size < 4 or ys.size < 4:
            raise ValueError("height map needs at least 4x4 samples")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        object.__setattr__(self, "z", z)

    def spline(self) -> RectBivariateSpline:
        return RectBivariateSpline(self.xs, self.ys, self.z, kx=3, ky=3)


@dataclass(frozen=True)
class PointScatterer:
    position: tuple[float, float, float]
    reflectivity: complex = 1.0


Surface = Union[Plane, Sphere, Ellipsoid, HeightMap]


@dataclass(frozen=True)
class Scene:
    surfaces: Sequence[Surface] = ()
    points: Sequence[PointScatterer] = ()

    def __post_init__(self):
        for s in self.surfaces:
            if isinstance(s, Plane) and not s.z0 > 0:
                raise ValueError("plane must lie at z0 > 0")
            if isinstance(s, Sphere) and not s.center[2] - s.radius > 0:
                raise ValueError("sphere must lie entirely in front of the aperture")
            if isinstance(s, Ellipsoid) and not s.center[2] - s.semi_axes[2] > 0:
                raise ValueError("ellipsoid must lie entirely in front of the aperture")
            if isinstance(s, HeightMap) and not np.all(s.z > 0):
                raise ValueError("height map must satisfy z > 0")
            if not np.isfinite(s.reflectivity):
                raise ValueError("reflectivity must be finite")
        for p in self.points:
            if not p.position[2] > 0:
                raise ValueError("point scatterer must lie at z > 0")
            if not np.isfinite(p.reflectivity):
                raise ValueError("reflectivity must be finite")


@dataclass(frozen=True)
class QuasiWavefront:
    Z: np.ndarray
    mask: np.ndarray
    grid: ApertureGrid

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if Z.shape != (self.grid.nx, self.grid.ny) or mask.shape != Z.shape:
            raise ValueError("wavefront shape does not match the aperture")
        Z = np.where(mask, Z, 0.0)
        if not np.all(np.isfinite(Z)) or np.any(Z[mask] <= 0):
            raise ValueError("masked wavefront samples must be finite and positive")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "mask", mask)


@dataclass(frozen=True)
class EchoCube:
    data: np.ndarray
    aperture: ApertureGrid
    pulse: PulseSpec

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        if data.shape != (self.aperture.nx, self.aperture.ny, self.pulse.nt):
            raise ValueError("cube shape does not match aperture and pulse")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class PortCodeBook:
    responses: np.ndarray
    dt: float
    max_cross_correlation: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        r = np.asarray(self.responses, dtype=float)
        if r.ndim != 2 or r.shape[1] < 1:
            raise ValueError("responses must be a (n_pairs, L) array")
        object.__setattr__(self, "responses", r)

    @property
    def n_pairs(self) -> int:
        return self.responses.shape[0]

    @property
    def length(self) -> int:
        return self.responses.shape[1]


# ---------------------------------------------------------------- BST forward

def bst_map(x, y, z, dzdx, dzdy):
    """Map boundary samples to wavefront coordinates.

    Returns ``(X, Y, Z, dZdX, dZdY)``; the last two are the wavefront slopes,
    which equal the lateral direction cosines of the specular ray.
    """
    s = np.sqrt(1.0 + dzdx ** 2 + dzdy ** 2)
    X = x + z * dzdx
    Y = y + z * dzdy
    Z = z * s
    return X, Y, Z, dzdx / s, dzdy / s


def _sphere_wavefront(grid: ApertureGrid, center, radius):
    X, Y = grid.mesh()
    cx, cy, cz = center
    return np.sqrt((X - cx) ** 2 + (Y - cy) ** 2 + cz ** 2) - radius


def _gather_min(grid: ApertureGrid, X, Y, Z, gX, gY):
    """Nearest-cell scatter keeping the first arrival; each sample is moved to
    its cell centre with a first-order correction along the wavefront slope."""
    ix = np.rint((X - grid.x0) / grid.dx).astype(np.int64)
    iy = np.rint((Y - grid.y0) / grid.dy).astype(np.int64)
    ok = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny) & np.isfinite(Z)
    ix, iy = ix[ok], iy[ok]
    Zc = (Z[ok] + gX[ok] * (grid.x0 + ix * grid.dx - X[ok])
          + gY[ok] * (grid.y0 + iy * grid.dy - Y[ok]))
    out = np.full(grid.nx * grid.ny, np.inf)
    np.minimum.at(out, ix * grid.ny + iy, Zc)
    return out.reshape(grid.nx, grid.ny)


def _ellipsoid_samples(ell: Ellipsoid, grid: ApertureGrid):
    # parametrize the aperture-facing half by its outward normal direction
    a, b, c = ell.semi_axes
    spacing = min(grid.dx, grid.dy)
    n_ang = int(np.clip(8 * np.pi * max(a, b, c, ell.center[2]) / spacing, 64, 2000))
    theta = (np.arange(n_ang // 2) + 0.5) * (0.5 * np.pi / (n_ang // 2))
    phi = np.arange(2 * n_ang) * (np.pi / n_ang)
    th, ph = np.meshgrid(theta, phi, indexing="ij")
    n = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), -np.cos(th)])
    d2 = np.array([a, b, c]) ** 2
    scale = np.sqrt(np.einsum("i,i...->...", d2, n ** 2))
    p = np.asarray(ell.center, float)[:, None, None] + d2[:, None, None] * n / scale
    s = -p[2] / n[2]
    X = p[0] + s * n[0]
    Y = p[1] + s * n[1]
    return X.ravel(), Y.ravel(), s.ravel(), n[0].ravel(), n[1].ravel()


def _heightmap_samples(hm: HeightMap, grid: ApertureGrid, oversample: float):
    spl = hm.spline()
    xs, ys = hm.xs, hm.ys
    # probe the map stretch |d(X,Y)/d(x,y)| to pick a sample spacing dense
    # enough to hit every wavefront cell
    px = np.linspace(xs[0], xs[-1], 64)
    py = np.linspace(ys[0], ys[-1], 64)
    z = spl(px, py)
    p, q = spl(px, py, dx=1), spl(px, py, dy=1)
    pxx, pyy, pxy = spl(px, py, dx=2), spl(px, py, dy=2), spl(px, py, dx=1, dy=1)
    j11 = 1 + p * p + z * pxx
    j22 = 1 + q * q + z * pyy
    j12 = p * q + z * pxy
    stretch = float(np.max(np.abs(j11) + np.abs(j22) + 2 * np.abs(j12)))
    step = min(grid.dx, grid.dy) / (oversample * max(stretch, 1.0))
    nx = int(np.ceil((xs[-1] - xs[0]) / step)) + 1
    ny = int(np.ceil((ys[-1] - ys[0]) / step)) + 1
    if nx * ny > _MAX_SURFACE_SAMPLES:
        f = np.sqrt(nx * ny / _MAX_SURFACE_SAMPLES)
        nx, ny = int(nx / f), int(ny / f)
    sx = np.linspace(xs[0], xs[-1], nx)
    sy = np.linspace(ys[0], ys[-1], ny)
    zz = spl(sx, sy)
    pp, qq = spl(sx, sy, dx=1), spl(sx, sy, dy=1)
    x, y = np.meshgrid(sx, sy, indexing="ij")
    return bst_map(x.ravel(), y.ravel(), zz.ravel(), pp.ravel(), qq.ravel())


def bst_forward(scene: Scene, grid: ApertureGrid, oversample: float = 4.0) -> QuasiWavefront:
    """Quasi-wavefront of a scene on the aperture grid.

    Planes, spheres and point scatterers (zero-radius spheres) use closed
    forms. Ellipsoids and height maps are sampled densely, pushed through the
    boundary scattering transform and gathered onto the grid keeping the
    minimum ``Z`` per cell. Cells no surface maps to are left unmasked.
    """
    best = np.full((grid.nx, grid.ny), np.inf)
    for surf in scene.surfaces:
        if isinstance(surf, Plane):
            cand = np.full_like(best, surf.z0)
        elif isinstance(surf, Sphere):
            cand = _sphere_wavefront(grid, surf.center, surf.radius)
        elif isinstance(surf, Ellipsoid):
            X, Y, Z, gX, gY = _ellipsoid_samples(surf, grid)
            cand = _gather_min(grid, X, Y, Z, gX, gY)
        elif isinstance(surf, HeightMap):
            cand = _gather_min(grid, *_heightmap_samples(surf, grid, oversample))
        else:
            raise TypeError(f"unsupported surface {type(surf).__name__}")
        best = np.minimum(best, cand)
    for pt in scene.points:
        best = np.minimum(best, _sphere_wavefront(grid, pt.position, 0.0))
    mask = np.isfinite(best)
    return QuasiWavefront(np.where(mask, best, 0.0), mask, grid)


# ------------------------------------------------------------- echo synthesis

def _check_window(name: str, max_range: float, pulse: PulseSpec, c: float):
    if not max_range + c * pulse.support / 2 < c * pulse.nt * pulse.dt / 2:
        raise ValueError(f"range window overflow: {name} at range {max_range:.4g} m")


def synth_echo_cube(scene: Scene, grid: ApertureGrid, pulse: PulseSpec,
                    noise_std: float = 0.0, seed: int | None = 0,
                    c: float = C0) -> EchoCube:
    """Noisy complex-baseband monostatic echoes of a scene.

    Each point scatterer adds ``refl * env(t - 2R/c) * exp(-2j*pi*fc*2R/c)``
    per element. Each surface adds one specular return per element at the
    delay of its own quasi-wavefront, with amplitude equal to its reflectivity.
    """
    X, Y = grid.mesh()
    t = pulse.times
    data = np.zeros((grid.nx, grid.ny, pulse.nt), dtype=complex)

    def add_return(path, amp):
        tau = 2.0 * path / c
        env = pulse.envelope_at(t[None, None, :] - tau[..., None])
        data[...] += amp[..., None] * env * np.exp(-2j * np.pi * pulse.fc * tau)[..., None]

    for k, surf in enumerate(scene.surfaces):
        wf = bst_forward(Scene(surfaces=[surf]), grid)
        if not wf.mask.any():
            continue
        _check_window(f"surface {k} ({type(surf).__name__})", wf.Z[wf.mask].max(), pulse, c)
        amp = np.where(wf.mask, surf.reflectivity, 0.0).astype(complex)
        add_return(np.where(wf.mask, wf.Z, 0.0), amp)
    for k, pt in enumerate(scene.points):
        px, py, pz = pt.position
        R = np.sqrt((X - px) ** 2 + (Y - py) ** 2 + pz ** 2)
        _check_window(f"point {k} at {tuple(pt.position)}", R.max(), pulse, c)
        add_return(R, np.full(R.shape, pt.reflectivity, dtype=complex))
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        data += noise * (noise_std / np.sqrt(2.0))
    return EchoCube(data, grid, pulse)


# ---------------------------------------------------------------- cavity MIMO

def max_pairwise_correlation(responses: np.ndarray) -> float:
    """Largest |normalized cross-correlation| over all lags and code pairs."""
    r = np.asarray(responses, dtype=float)
    n, L = r.shape
    if n < 2:
        return 0.0
    r = r / np.linalg.norm(r, axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * L - 1)))
    F = np.fft.rfft(r, nfft, axis=1)
    worst = 0.0
    for i in range(n - 1):
        xc = np.fft.irfft(F[i][None, :] * np.conj(F[i + 1:]), nfft, axis=1)
        worst = max(worst, float(np.abs(xc).max()))
    return worst


def gen_port_codebook(n_pairs: int, length: int, dt: float, seed: int = 0,
                      bound: float = 0.3, max_attempts: int = 100) -> PortCodeBook:
    """Unit-energy Gaussian port-pair responses with bounded cross-correlation."""
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    if length < 64 * n_pairs:
        raise ValueError("length must be at least 64 * n_pairs")
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        r = rng.standard_normal((n_pairs, length))
        r /= np.linalg.norm(r, axis=1, keepdims=True)
        worst = max_pairwise_correlation(r)
        if worst < bound:
            return PortCodeBook(r, dt, worst)
    raise RuntimeError("codebook correlation bound unmet")


def cavity_encode(channels: Sequence[ComplexSeries], book: PortCodeBook) -> ComplexSeries:
    """Sum of each channel convolved with its port-pair response."""
    if len(channels) != book.n_pairs:
        raise ValueError(f"expected {book.n_pairs} channels, got {len(channels)}")
    dts = {ch.dt for ch in channels}
    if len(dts) != 1:
        raise ValueError("channels must share one sample interval")
    n = max(len(ch) for ch in channels)
    out = np.zeros(n + book.length - 1, dtype=complex)
    for ch, code in zip(channels, book.responses):
        y = np.convolve(ch.samples, code)
        out[: y.size] += y
    return ComplexSeries(out, channels[0].dt, channels[0].t0)
