"""Dataset container: a JSON header next to a raw little-endian payload.

Header keys: ``format_version`` (1), ``kind``, ``dims``, ``axes`` (one
``{name, step, origin, unit}`` per dimension), ``dtype`` (``c64le`` for
interleaved float32 real/imag pairs or ``f32le``), ``payload_file`` (path
relative to the header), ``seed``, ``provenance`` and free-form ``attrs``.
The payload is stored in C order, last dimension fastest.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .dsp import Spectrogram
from .imaging import PointCloud, VolumeGrid, VolumeImage
from .scene import ApertureGrid, EchoCube, PortCodeBook, PulseSpec, QuasiWavefront
from .vitals import IBISeries, IQTrace

FORMAT_VERSION = 1
KINDS = ("echo_cube", "iq_trace", "wavefront", "volume", "spectrogram", "codebook")
DTYPES = {"c64le": np.dtype("<c8"), "f32le": np.dtype("<f4")}


class ContainerError(ValueError):
    pass


@dataclass
class Container:
    kind: str
    data: np.ndarray
    axes: list[dict] = field(default_factory=list)
    attrs: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None
    provenance: str = ""

    @property
    def dtype_name(self) -> str:
        return "c64le" if np.iscomplexobj(self.data) else "f32le"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (complex, np.complexfloating)):
        return [float(v.real), float(v.imag)]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def payload_path(header_path: Path) -> Path:
    return header_path.with_suffix(".bin")


def write_container(path, c: Container) -> Path:
    """Write header and payload; returns the header path."""
    path = Path(path)
    if c.kind not in KINDS:
        raise ContainerError(f"unknown kind {c.kind!r}")
    dtype = DTYPES[c.dtype_name]
    data = np.ascontiguousarray(c.data, dtype=dtype)
    pay = payload_path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "kind": c.kind,
        "dims": list(data.shape),
        "axes": _jsonable(c.axes),
        "dtype": c.dtype_name,
        "payload_file": pay.name,
        "seed": c.seed,
        "provenance": c.provenance,
        "attrs": _jsonable(c.attrs),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    pay.write_bytes(data.tobytes(order="C"))
    path.write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")
    return path


def read_container(path) -> Container:
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("format_version") != FORMAT_VERSION:
        raise ContainerError(f"unsupported format_version {header.get('format_version')!r}")
    kind = header.get("kind")
    if kind not in KINDS:
        raise ContainerError(f"unknown kind {kind!r}")
    dtype_name = header.get("dtype")
    if dtype_name not in DTYPES:
        raise ContainerError(f"unknown dtype {dtype_name!r}")
    dims = [int(d) for d in header["dims"]]
    raw = (path.parent / header["payload_file"]).read_bytes()
    dtype = DTYPES[dtype_name]
    expected = int(np.prod(dims)) * dtype.itemsize
    if len(raw) != expected:
        raise ContainerError(f"payload has {len(raw)} bytes, header implies {expected}")
    data = np.frombuffer(raw, dtype=dtype).reshape(dims).copy()
    return Container(kind, data, header.get("axes", []), header.get("attrs", {}),
                     header.get("seed"), header.get("provenance", ""))


def expect_kind(c: Container, *kinds: str):
    if c.kind not in kinds:
        raise ContainerError(f"expected {' or '.join(kinds)} container, got {c.kind}")


def _cplx(v) -> complex:
    if isinstance(v, (list, tuple)):
        return complex(v[0], v[1])
    return complex(v)


# ------------------------------------------------------------ conversions

def _axis(name, step, origin, unit):
    return {"name": name, "step": float(step), "origin": float(origin), "unit": unit}


def cube_to_container(cube: EchoCube, **kw) -> Container:
    ap, p = cube.aperture, cube.pulse
    axes = [_axis("x", ap.dx, ap.x0, "m"), _axis("y", ap.dy, ap.y0, "m"), _axis("t", p.dt, 0.0, "s")]
    attrs = {"fc": p.fc, "bandwidth": p.bandwidth, "envelope": p.envelope}
    return Container("echo_cube", cube.data, axes, attrs, **kw)


def container_to_cube(c: Container) -> EchoCube:
    expect_kind(c, "echo_cube")
    nx, ny, nt = c.data.shape
    ax, ay, at = c.axes
    ap = ApertureGrid(nx, ny, ax["step"], ay["step"], ax["origin"], ay["origin"])
    pulse = PulseSpec(c.attrs["fc"], c.attrs["bandwidth"], at["step"], nt, c.attrs.get("envelope", "raised_cosine"))
    return EchoCube(c.data.astype(complex), ap, pulse)


def wavefront_to_container(wf: QuasiWavefront, **kw) -> Container:
    g = wf.grid
    data = np.where(wf.mask, wf.Z, np.nan)
    axes = [_axis("x", g.dx, g.x0, "m"), _axis("y", g.dy, g.y0, "m")]
    return Container("wavefront", data, axes, {"value_unit": "m"}, **kw)


def container_to_wavefront(c: Container) -> QuasiWavefront:
    expect_kind(c, "wavefront")
    nx, ny = c.data.shape
    ax, ay = c.axes
    grid = ApertureGrid(nx, ny, ax["step"], ay["step"], ax["origin"], ay["origin"])
    Z = c.data.astype(float)
    mask = np.isfinite(Z)
    return QuasiWavefront(np.where(mask, Z, 0.0), mask, grid)


def volume_to_container(img: VolumeImage, **kw) -> Container:
    g = img.grid
    axes = [_axis("x", g.dx, g.x0, "m"), _axis("y", g.dy, g.y0, "m"), _axis("z", g.dz, g.z0, "m")]
    return Container("volume", img.values, axes, {}, **kw)


def container_to_volume(c: Container) -> VolumeImage:
    expect_kind(c, "volume")
    ax, ay, az = c.axes
    nx, ny, nz = c.data.shape
    g = VolumeGrid(nx, ny, nz, ax["step"], ay["step"], az["step"], ax["origin"], ay["origin"], az["origin"])
    return VolumeImage(c.data.astype(float), g)


def spectrogram_to_container(spec: Spectrogram, freq_unit: str = "Hz", **kw) -> Container:
    axes = [_axis("frame", spec.frame_dt, spec.t0, "s"),
            _axis("bin", spec.freq_step, spec.freq_origin, freq_unit)]
    return Container("spectrogram", spec.values, axes, {}, **kw)


def container_to_spectrogram(c: Container) -> Spectrogram:
    expect_kind(c, "spectrogram")
    af, ab = c.axes
    return Spectrogram(c.data.astype(float), af["step"], ab["step"], ab["origin"], af["origin"])


def iq_to_container(iq: IQTrace, **kw) -> Container:
    axes = [_axis("t", 1.0 / iq.fs, 0.0, "s")]
    attrs = {"fs": iq.fs, "k": iq.k, "A": iq.A, "s_dc": iq.s_dc}
    return Container("iq_trace", iq.samples, axes, attrs, **kw)


def container_to_iq(c: Container) -> IQTrace:
    expect_kind(c, "iq_trace")
    if c.data.ndim != 1:
        raise ContainerError("expected a single-channel iq_trace")
    a = c.attrs
    return IQTrace(c.data.astype(complex), a["fs"], a["k"], _cplx(a.get("A", 1.0)), _cplx(a.get("s_dc", 0.0)))


def codebook_to_container(book: PortCodeBook, **kw) -> Container:
    axes = [_axis("pair", 1, 0, ""), _axis("t", book.dt, 0.0, "s")]
    return Container("codebook", book.responses, axes, {}, **kw)


def container_to_codebook(c: Container) -> PortCodeBook:
    expect_kind(c, "codebook")
    return PortCodeBook(c.data.astype(float), c.axes[1]["step"])


# ---------------------------------------------------------------- tables

def write_point_cloud_csv(path, pc: PointCloud):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "confidence"])
        for (x, y, z), q in zip(pc.points, pc.confidence):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(z)), repr(float(q))])


def read_point_cloud_csv(path) -> PointCloud:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.size == 0:
        return PointCloud(np.empty((0, 3)), np.empty(0))
    return PointCloud(arr[:, :3], arr[:, 3])


def write_ibi_csv(path, ibi: IBISeries):
    """One row per interval, stamped with the closing beat."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["beat_time", "interval", "quality"])
        bt = ibi.beat_times
        for i in range(1, bt.size):
            w.writerow([repr(float(bt[i])), repr(float(bt[i] - bt[i - 1])), repr(float(ibi.quality[i]))])


def read_ibi_csv(path) -> IBISeries:
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape[0] == 0:
        raise ContainerError("IBI table is empty")
    bt = np.concatenate(([arr[0, 0] - arr[0, 1]], arr[:, 0]))
    q = np.concatenate(([arr[0, 2]], arr[:, 2]))
    return IBISeries(bt, q)


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- raster

def to_pgm(values: np.ndarray, db_floor: float = -40.0) -> bytes:
    """8-bit binary PGM of ``20*log10(|v|/max)`` clipped at ``db_floor`` dB.

    Rows of the image are the first array axis.
    """
    if not db_floor < 0:
        raise ValueError("db_floor must be negative")
    mag = np.abs(np.nan_to_num(np.asarray(values), nan=0.0)).astype(float)
    if mag.ndim != 2:
        raise ValueError("raster export needs a 2-D grid")
    peak = mag.max() if mag.size else 0.0
    if peak > 0:
        with np.errstate(divide="ignore"):
            db = 20 * np.log10(mag / peak)
        pix = np.rint(255 * (np.clip(db, db_floor, 0.0) - db_floor) / -db_floor)
    else:
        pix = np.zeros(mag.shape)
    rows, cols = mag.shape
    return f"P5\n{cols} {rows}\n255\n".encode() + pix.astype(np.uint8).tobytes()


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    cols, rows = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(rows, cols)
